"""Mission-driven evolutionary synthesis of voxel aircraft concepts."""

from .anatomy import (
    AnatomyGenome,
    EnvelopeSpec,
    NormalizedGenome,
    PARAM_NAMES,
    TailTopology,
    decode,
    denormalize,
    normalize,
    project_envelope,
    seed_individual,
)
from .evolve import AblationFlags, GaConfig, RunResult, run
from .physics import FitnessBreakdown, MissionSpec, PhysicsConfig
from .voxelizer import Label, VoxelGrid, part_bounds, voxelize

__version__ = "0.1.0"

__all__ = [
    "AnatomyGenome", "EnvelopeSpec", "NormalizedGenome", "PARAM_NAMES",
    "TailTopology", "decode", "denormalize", "normalize", "project_envelope",
    "seed_individual", "AblationFlags", "GaConfig", "RunResult", "run",
    "FitnessBreakdown", "MissionSpec", "PhysicsConfig", "Label", "VoxelGrid",
    "part_bounds", "voxelize", "__version__",
]
