from .adam import AdamState, adam_step
from .analysis import (AmbiguityConfig, ambiguity_experiment,
                       count_interior_minima, design_axis, sweep_1d)
from .cmaes import CmaEsState, cmaes_ask, cmaes_ask_tell, cmaes_tell
from .runner import (CodesignProblem, RunResult, codesign_grad, evaluate,
                     multi_seed_best, run_cmaes_codesign, run_codesign)

__all__ = [
    "AdamState", "adam_step",
    "CmaEsState", "cmaes_ask", "cmaes_tell", "cmaes_ask_tell",
    "CodesignProblem", "RunResult", "evaluate", "codesign_grad",
    "run_codesign", "run_cmaes_codesign", "multi_seed_best",
    "sweep_1d", "count_interior_minima", "design_axis",
    "AmbiguityConfig", "ambiguity_experiment",
]
