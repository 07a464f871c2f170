"""Cyclic-shift round-trip-time estimation with a Zadoff-Chu uplink reference signal."""

from .channel import ChannelSpec, TimingState, add_awgn, apply_channel, model_ta, propagation_delay
from .dl_ranging import Cir, PrsConfig, first_peak, prs_channel_estimate, prs_generate
from .estimators import (
    CovarianceMatrix,
    MeasurementBatch,
    RangeEstimate,
    build_covariance,
    ecdf,
    mf_estimate,
    pd_estimate,
)
from .ofdm import SPEED_OF_LIGHT, FreqGrid, OfdmConfig, extract_occupied, map_to_grid, to_freq, to_time
from .sequences import (
    MultiRootConfig,
    ZcParams,
    cyclic_shift,
    cyclic_xcorr,
    gold_sequence,
    qpsk_map,
    zc_generate,
)
from .urs_rtt import (
    ProtocolTrace,
    RoundSetup,
    RttResult,
    ShiftPlan,
    comb_multiplex_round,
    compute_cyclic_shift,
    estimate_rtt,
    multi_root_detect,
    multi_root_transmit,
    run_measurement_batch,
    run_protocol_round,
    urs_receive,
    urs_transmit,
)

__version__ = "0.1.0"
