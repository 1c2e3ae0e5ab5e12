"""Differentiable MLS-MPM co-design of soft robots.

Subpackages:
  sim       forward MLS-MPM kernels and constitutive models
  autodiff  hand-written adjoints, checkpointed reverse rollouts
  design    morphology representations and decoders
  optimize  gradient and evolutionary optimizers, experiments
plus flat modules for terrain, biomes, scenes, control, tasks, config, CLI.
"""

__version__ = "0.1.0"
