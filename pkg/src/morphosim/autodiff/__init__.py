"""Reverse-mode differentiation of the simulator.

Every VJP in this package is written by hand against the forward kernels
and checked against central finite differences in the test suite.
"""
from .adjoint import AdjointState, backward_substep
from .gradcheck import grad_check
from .rollout import (MemoryMeter, Objective, Rollout, RolloutResult,
                      dump_gradients)
from .vjp import (fixed_corotated_vjp, fluid_vjp, muscle_vjp, neo_hookean_vjp,
                  pk1_vjp, polar_rotation_vjp, sand_vjp, stvk_vjp,
                  total_stress_vjp)

__all__ = [
    "AdjointState", "backward_substep", "grad_check",
    "Rollout", "RolloutResult", "Objective", "MemoryMeter", "dump_gradients",
    "neo_hookean_vjp", "stvk_vjp", "fluid_vjp", "fixed_corotated_vjp",
    "sand_vjp", "pk1_vjp", "polar_rotation_vjp", "muscle_vjp",
    "total_stress_vjp",
]
