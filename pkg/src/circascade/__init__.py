"""Two-photon correlations of one-way (circular) N-level cascades.

Analytic closed forms and spectral propagation for g2(tau) between any
transitions of the ring, a stochastic jump-process simulator, a
coincidence-histogram estimator and peak/violation analysis tools.
"""

from .model import (
    CascadeError,
    CascadeSpec,
    ConfigInvalid,
    CorrelationTrace,
    EmptyChannel,
    EmptySubset,
    EventStream,
    ImaginaryResidue,
    InsufficientSamples,
    InvalidConfig,
    KOutOfRange,
    NoPeaksFound,
    NonFiniteRate,
    NonPositiveRate,
    NumericalFailure,
    RatesLengthMismatch,
    StreamInvariantViolation,
    SubsetSpec,
    ValidationError,
    ZeroLevels,
    trace_index,
    validate,
)
from .analytic_equal import (
    bundle_peak,
    g2_equal,
    g2_equal_pair,
    g2_subset,
    root_of_unity,
    small_tau_leading,
)
from .spectral_general import (
    OscillationRegime,
    SpectralDecomposition,
    ZetaValue,
    decompose,
    g2_general,
    g2_limit_high_pump,
    g2_limit_low_pump,
    g2_phenomenological,
    g2_three_level,
    g2_two_level,
    generator_matrix,
    oscillation_condition,
    propagate,
    steady_state,
    zeta_value,
)
from .stochastic import (
    SimConfig,
    dwell_samples,
    occupancy_block_estimates,
    occupancy_estimate,
    read_events_binary,
    read_events_text,
    simulate,
    time_weighted_occupancy,
    write_events_binary,
    write_events_text,
)
from .estimator import (
    HistogramConfig,
    block_bootstrap_stderr,
    correlate,
    correlate_subset,
    write_trace_csv,
)
from .analysis import (
    Peak,
    PeakReport,
    ViolationReport,
    ViolationSample,
    cs_check,
    discontinuity,
    find_peaks,
    find_peaks_cross,
)

__version__ = "0.1.0"
