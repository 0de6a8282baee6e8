"""Phase-noise estimation and suppression for full-duplex OFDM self-interference cancellation."""

from .canceller import (
    CancellationResult,
    SelfInterferenceCanceller,
    cancel_cpe,
    cancel_ici_freq,
    cancel_time,
)
from .channel import ChannelKind, ChannelRealization, ReceivedSignal, ScenarioConfig, compose_received, realize_channel
from .estimator import (
    ChannelEstimate,
    Domain,
    EstimatorConfig,
    FrequencyDomainEstimator,
    TimeDomainEstimator,
    estimate_channels,
    estimate_cpe,
    estimate_pn_freq,
    estimate_pn_time,
)
from .metrics import CancellationReport, cancellation_gain, run_trials, simulate_trial, sinr
from .ofdm import FrameConfig, OfdmFrame, build_frame, demodulate, modulate
from .opcount import OpCounter
from .oscillator import (
    OscillatorKind,
    OscillatorModel,
    PhaseNoiseTrace,
    PhaseSpectrum,
    calibrate_to_ici_target,
    correlation_matrix_freq,
    correlation_matrix_time,
    default_pll,
    generate,
    residual_ici_power,
)

__version__ = "0.1.0"
