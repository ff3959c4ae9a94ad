"""Contact-process simulator for interest-driven store-carry-forward networks.

Submodules: interest_space (profiles on the positive orthant of the unit
sphere), meeting_model (pairwise meeting rates and competing clocks),
routing (forwarding protocols), sim_engine (trial loops and trace replay),
trace_io (contact traces and profile tables), analysis (estimators),
validation (seeded statistical checks), cli (command-line entry point).
"""

from .analysis import (
    CorrelationReport,
    FitResult,
    SummaryStats,
    boundedness_check,
    delay_difference_vs_ttl,
    forwarding_fraction,
    log_delta_fit,
    mean_ci,
    meeting_similarity_correlation,
)
from .errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    ProtocolViolationError,
    SamplingError,
    SimError,
    TraceParseError,
    UndefinedCorrelationError,
)
from .interest_space import (
    InterestProfile,
    Population,
    cosine_similarity,
    make_endpoints,
    sample_profile,
)
from .meeting_model import (
    RateMatrix,
    RateModel,
    build_rate_matrix,
    normalization_k,
    pair_rate,
    sample_min_meeting,
)
from .routing import ProtocolSpec
from .sim_engine import (
    ExperimentConfig,
    TrialResult,
    derive_seed,
    replay_trace,
    run_experiment,
    run_trial,
    summarize,
)
from .trace_io import (
    ContactEvent,
    ContactTrace,
    ProfileTable,
    build_binary_profiles,
    filter_short_contacts,
    generate_synthetic_trace,
    load_profiles,
    parse_trace,
    write_profiles,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
