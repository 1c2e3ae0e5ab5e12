from .kernels import (NodeBC, Stencil, g2p, grid_update, make_stencil, p2g,
                      quadratic_bspline, quadratic_bspline_grad,
                      stencil_offsets)
from .materials import (muscle_pk1, pk1_stress, plastic_project,
                        polar_decompose, polar_rotation, safe_svd,
                        total_stress)
from .step import Simulator, SubstepCache, build_node_bc, sim_substep

__all__ = [
    "NodeBC", "Stencil", "g2p", "grid_update", "make_stencil", "p2g",
    "quadratic_bspline", "quadratic_bspline_grad", "stencil_offsets",
    "muscle_pk1", "pk1_stress", "plastic_project", "polar_decompose",
    "polar_rotation", "safe_svd", "total_stress",
    "Simulator", "SubstepCache", "build_node_bc", "sim_substep",
]
