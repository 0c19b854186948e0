"""Aerosol mixing state indices and k-means mixing state zones."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DomainError,
    FormatError,
    MixzoneError,
    TooFewCells,
    UnknownSpecies,
    ZeroMassParticle,
)
from .features import GridFeatureSet, assemble_features, build_features, monthly_average  # noqa: E402
from .kmeans import KMeansConfig, ClusteringResult, kmeans, regionalize, relabel, select_k  # noqa: E402
from .mixing_state import (  # noqa: E402
    ParticlePopulation,
    SpeciesGrouping,
    alpha_diversity,
    gamma_diversity,
    mixing_state_index,
    per_particle_diversity,
)

__all__ = [
    "ClusteringResult",
    "ConfigError",
    "DomainError",
    "FormatError",
    "GridFeatureSet",
    "KMeansConfig",
    "MixzoneError",
    "ParticlePopulation",
    "SpeciesGrouping",
    "TooFewCells",
    "UnknownSpecies",
    "ZeroMassParticle",
    "alpha_diversity",
    "assemble_features",
    "build_features",
    "gamma_diversity",
    "kmeans",
    "mixing_state_index",
    "monthly_average",
    "per_particle_diversity",
    "regionalize",
    "relabel",
    "select_k",
]
