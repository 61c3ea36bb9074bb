"""Spectral learning of observable operator models from trajectory data."""

from .data import TrajectoryDataset
from .errors import (
    CapacityError,
    ConfigError,
    DimensionError,
    InputError,
    OomError,
    ParseError,
    RankDeficiencyError,
    RegularizationError,
)
from .features import DiscreteIndicatorMap, GaussianRandomMap, make_gaussian_map
from .model import (
    BinlessOom,
    BinSpec,
    CoarseGrainedOom,
    Oom,
    binless_expectation_r1,
    binless_lagged_moment,
    coarse_grain_learn,
    equilibrium_expectation_discrete,
    markov_chain_oom,
    sequence_probability,
    total_operator,
)
from .spectral import (
    LearnerConfig,
    equilibrium_state,
    fit_binless,
    fit_discrete,
    learn_binless,
    learn_discrete,
    learn_discrete_equilibrium,
)
from .statistics import SufficientStats, accumulate, extract_windows

__version__ = "0.1.0"
