"""Design-space representations: base set, decoders, primitives, annotation."""
from .annotate import annotate_muscles, ingest_mesh, kmeans, load_obj
from .barycenter import WassBary, barycenter_vjp, wasserstein_barycenter
from .base import BaseParticles, DesignGrad, DesignSpec, Workspace
from .decoders import (DEFAULT_NODE_ACTIVATIONS, EXTENDED_NODE_ACTIVATIONS,
                       DiffCPPN, ImplicitMLP, PerParticle, PerVoxel,
                       canonical_heading, coordinate_features, n_features)
from .primitives import (DesignPrimitive, SDFLerp, euler_to_matrix,
                         rotation_average, special_procrustes)

__all__ = [
    "Workspace", "BaseParticles", "DesignSpec", "DesignGrad",
    "PerParticle", "PerVoxel", "ImplicitMLP", "DiffCPPN",
    "DEFAULT_NODE_ACTIVATIONS", "EXTENDED_NODE_ACTIVATIONS",
    "canonical_heading", "coordinate_features", "n_features",
    "DesignPrimitive", "SDFLerp", "euler_to_matrix", "rotation_average",
    "special_procrustes",
    "WassBary", "wasserstein_barycenter", "barycenter_vjp",
    "annotate_muscles", "kmeans", "ingest_mesh", "load_obj",
]
