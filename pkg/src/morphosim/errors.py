"""Exception hierarchy.

Every failure mode that callers are expected to catch has its own class so tests
can assert on the type rather than on message text.
"""


class MorphosimError(Exception):
    """Base class for all package errors."""


class ConfigError(MorphosimError):
    """Bad or inconsistent configuration (CLI exit code 1)."""


class SimulationError(MorphosimError):
    """Simulation failed at runtime (CLI exit code 2)."""


class SimulationNaN(SimulationError):
    """Non-finite state detected; carries the substep index and first bad particle."""

    def __init__(self, substep: int, particle: int, field: str):
        self.substep = substep
        self.particle = particle
        self.field = field
        super().__init__(
            f"non-finite {field} at substep {substep}, particle {particle}"
        )


class NonInvertibleF(SimulationError):
    """det(F) <= 0 where the constitutive model requires an invertible F."""


class ShapeMismatch(MorphosimError):
    """Array arguments disagree on particle count or spatial dimension."""


class EmptyRobot(MorphosimError):
    """A decoded design has no particle above the mass cutoff."""


class PlacementCollision(MorphosimError):
    """Robot placement intersects terrain."""


class UnmappedParticle(MorphosimError):
    """A base particle falls outside the voxel grid of a voxel-backed field."""


class DegenerateWeights(MorphosimError):
    """Interpolation weights sum to ~0 and cannot be normalized."""


class DegenerateMean(MorphosimError):
    """Rotation averaging hit a rank-deficient mean matrix (antipodal inputs)."""


class NonConvergence(MorphosimError):
    """An iterative solve exhausted its iteration budget."""

    def __init__(self, what: str, iters: int, residual: float):
        self.what = what
        self.iters = iters
        self.residual = residual
        super().__init__(f"{what} did not converge in {iters} iterations "
                         f"(residual {residual:.3e})")


class EmptyCluster(MorphosimError):
    """K-means produced an empty cluster after the bounded re-seed retries."""


class CoincidentMarkers(MorphosimError):
    """Head/tail marker centroids coincide; heading is undefined."""


class SizeMismatch(MorphosimError):
    """Point-set matching requires equal cardinalities."""


class SingularSystem(MorphosimError):
    """A linear solve hit a singular system (degenerate boundary conditions)."""


class NonFiniteGradient(MorphosimError):
    """An adjoint pass produced NaN/Inf cotangents."""


class AllRunsFailed(MorphosimError):
    """Every seed of a multi-start optimization raised."""


class MeshError(MorphosimError):
    """Mesh file violates the supported OBJ subset."""


class OpenMesh(RuntimeWarning):
    """Mesh is not watertight; ray-parity inside tests are unreliable."""
