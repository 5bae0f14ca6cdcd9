"""Error exponents and rate regions for two-user discrete memoryless multiple-access channels."""
from .channel import (
    ChannelFormatError,
    DecompositionError,
    Mac,
    RatePair,
    RegionVerdict,
    SearchOptions,
    TimeSharingDecomposition,
    capacity_membership,
    capacity_slack,
    check_decomposable,
    decomposition_marginal,
    epsilon_n,
    haroutunian_feasible,
    load_channel,
    parse_channel,
    pentagon_rates,
    product_channel_prob,
    region_membership,
    validate_mac,
)
from .codes import (
    CodeStats,
    MultiUserCode,
    WringingResult,
    augustin_check,
    constant_composition_code,
    dominant_type,
    error_probabilities,
    fano_distribution,
    independence_gap,
    lemma1_check,
    ml_decode,
    sphere_packing_verify,
    strong_converse_check,
    wring,
)
from .exponents import (
    GapReport,
    compute_exponent,
    exponent_surface,
    finite_n_gap,
    haroutunian_exponent,
    sphere_packing_exponent,
    surface_csv,
)
from .oracle import OracleGuardError, exponent_grid_oracle
from .results import ExponentResult

__version__ = "0.1.0"
