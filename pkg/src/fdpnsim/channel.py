"""Self-interference / signal-of-interest channels and received-signal composition.

The multipath model is an exponential power-delay profile with a Rician
first tap, used as a stand-in for the indoor TGn-D model: the NLOS profile
decays as ``exp(-l / tau)`` with ``tau`` equal to the RMS delay spread in
samples (50 ns at 20 MHz is one sample), and a fixed-phase LOS ray with
``K`` times the first tap's NLOS power is added to tap 0.  Realisations are
normalised to unit expected energy.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from ._validation import check_count, check_rng
from .ofdm import FrameConfig
from .oscillator import OscillatorModel, calibrate_to_ici_target

__all__ = [
    "ChannelKind",
    "ChannelRealization",
    "ScenarioConfig",
    "ReceivedSignal",
    "realize_channel",
    "compose_received",
    "chain_oscillator",
    "power_delay_profile",
]

DEFAULT_N_TAPS = 8
DEFAULT_DELAY_SPREAD = 1.0


class ChannelKind(str, Enum):
    SELF_INTERFERENCE = "self_interference"
    SIGNAL_OF_INTEREST = "signal_of_interest"


DEFAULT_K_DB = {ChannelKind.SELF_INTERFERENCE: 30.0, ChannelKind.SIGNAL_OF_INTEREST: 3.0}


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray
    rician_k_db: float
    kind: ChannelKind

    def freq_response(self, n_fft):
        """``H_k = sum_l h_l exp(-j 2 pi k l / N)`` so that ``Y_k = H_k X_k`` under the unitary DFT."""
        return np.fft.fft(self.taps, n_fft)

    @property
    def energy(self):
        return float(np.sum(np.abs(self.taps) ** 2))


def power_delay_profile(n_taps, k_factor_db, delay_spread=DEFAULT_DELAY_SPREAD):
    """Return ``(los_power, nlos_powers)`` normalised to unit total expected energy."""
    nlos = np.exp(-np.arange(n_taps) / delay_spread) if n_taps > 1 else np.ones(1)
    k_lin = 10.0 ** (k_factor_db / 10.0)
    los = k_lin * nlos[0]
    total = los + nlos.sum()
    return los / total, nlos / total


def realize_channel(kind, k_factor_db=None, n_taps=DEFAULT_N_TAPS, seed=None,
                    delay_spread=DEFAULT_DELAY_SPREAD):
    """Draw one tapped-delay-line realisation.

    Tap 0 is Rician (deterministic LOS plus complex Gaussian scatter), taps
    ``1..n_taps-1`` are Rayleigh with an exponential profile.  ``k_factor_db``
    defaults to 30 dB for self-interference and 3 dB for the signal of
    interest.
    """
    kind = ChannelKind(kind)
    k_db = DEFAULT_K_DB[kind] if k_factor_db is None else float(k_factor_db)
    n_taps = check_count(n_taps, "n_taps")
    rng = check_rng(seed)
    los, nlos = power_delay_profile(n_taps, k_db, delay_spread)
    scatter = (rng.standard_normal(n_taps) + 1j * rng.standard_normal(n_taps)) * np.sqrt(nlos / 2.0)
    taps = scatter
    taps[0] += np.sqrt(los)
    return ChannelRealization(taps, k_db, kind)


@lru_cache(maxsize=128)
def chain_oscillator(template, p_ici_dbc, n_fft):
    """Per-chain oscillator such that two independent chains give ``p_ici_dbc`` of combined ICI.

    The self-interference sees the sum of its transmit and receive phase
    noise, whose structure function is twice a single chain's, so the
    combined process is calibrated and then halved.
    """
    return calibrate_to_ici_target(template, p_ici_dbc, n_fft).scaled(0.5)


@dataclass(frozen=True)
class ScenarioConfig:
    """Operating point of one simulated link.

    Powers are bookkept relative to the received self-interference (after
    passive suppression): SI has unit power, the signal of interest sits
    ``isr_db`` below it and the noise ``snr_db`` below the signal of interest.

    ``oscillator`` is a template for one transmit or receive chain (default:
    free-running).  Unless ``p_ici_dbc`` is None, its level is rescaled so
    the SI, which carries one transmit and one receive chain, sees
    ``p_ici_dbc`` of total ICI.
    """

    isr_db: float = 60.0
    snr_db: float = 30.0
    p_ici_dbc: float = -50.0
    passive_suppression_db: float = 0.0
    tx_power_dbm: float = None
    noise_floor_dbm: float = None
    oscillator: OscillatorModel = None
    frame: FrameConfig = field(default_factory=FrameConfig)
    flat_si_channel: bool = False
    si_k_db: float = 30.0
    soi_k_db: float = 3.0
    n_taps: int = DEFAULT_N_TAPS

    def __post_init__(self):
        for name in ("isr_db", "snr_db", "passive_suppression_db", "si_k_db", "soi_k_db"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.passive_suppression_db < 0:
            raise ValueError("passive_suppression_db must be >= 0")
        if self.oscillator is None:
            object.__setattr__(self, "oscillator", OscillatorModel.free_running(1e-18))
        if self.n_taps - 1 > self.frame.cp_len:
            raise ValueError(f"{self.n_taps}-tap channel is longer than the {self.frame.cp_len}-sample CP")

    @classmethod
    def from_link_budget(cls, tx_power_dbm, passive_suppression_db, noise_floor_dbm, snr_db, **kwargs):
        """Scenario from absolute powers: SI arrives at ``tx - passive`` dBm, SOI at ``noise + snr`` dBm."""
        isr = (tx_power_dbm - passive_suppression_db) - (noise_floor_dbm + snr_db)
        return cls(isr_db=isr, snr_db=snr_db, passive_suppression_db=passive_suppression_db,
                   tx_power_dbm=tx_power_dbm, noise_floor_dbm=noise_floor_dbm, **kwargs)

    @property
    def soi_power(self):
        return 10.0 ** (-self.isr_db / 10.0)

    @property
    def noise_power(self):
        return self.soi_power * 10.0 ** (-self.snr_db / 10.0)

    @property
    def si_power_dbm(self):
        if self.tx_power_dbm is None:
            return None
        return self.tx_power_dbm - self.passive_suppression_db

    @property
    def chain_model(self):
        """Calibrated model of a single oscillator chain."""
        if self.p_ici_dbc is None:
            return self.oscillator
        return chain_oscillator(self.oscillator, float(self.p_ici_dbc), self.frame.n_fft)

    @property
    def combined_oscillator(self):
        """Model of ``phi^{t,I} + phi^r``.

        The chains are independent copies, so the structure function doubles;
        ``scaled(2)`` keeps a PLL model at one component per term instead of
        concatenating duplicates.
        """
        return self.chain_model.scaled(2.0)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class ReceivedSignal:
    """Received samples and their separately tracked components (all with CP)."""

    total: np.ndarray
    self_interference: np.ndarray
    signal_of_interest: np.ndarray
    noise: np.ndarray


def _apply(x, pn_tx, h, n):
    return np.convolve(x * pn_tx, h)[:n]


def compose_received(x_i, x_s, h_i, h_s, pn_tx_i, pn_tx_s, pn_rx, scenario, seed=None):
    """Received baseband frame.

    ``y_n = [(x^I_n e^{j phi^{t,I}_n} * h^I) + (x^S_n e^{j phi^{t,S}_n} * h^S)] e^{j phi^r_n} + z_n``
    with the SOI scaled to ``isr_db`` below the unit-power SI and white
    complex Gaussian ``z`` at ``snr_db`` below the SOI.  Pass ``x_s=None``
    to omit the signal of interest.
    """
    rng = check_rng(seed)
    xi = np.asarray(getattr(x_i, "time_samples", x_i), dtype=complex)
    n = xi.size
    xs = np.zeros(n, complex) if x_s is None else np.asarray(getattr(x_s, "time_samples", x_s), dtype=complex)
    if xs.size != n:
        raise ValueError(f"SI frame has {n} samples but SOI frame has {xs.size}")
    traces = {"pn_tx_i": pn_tx_i, "pn_tx_s": pn_tx_s, "pn_rx": pn_rx}
    jt = {}
    for name, tr in traces.items():
        j = np.ones(n) if tr is None else np.asarray(getattr(tr, "complex_form", tr))
        if j.shape[-1] < n:
            raise ValueError(f"{name} covers {j.shape[-1]} samples, frame needs {n}")
        jt[name] = j[..., :n]
    cp = scenario.frame.cp_len
    hi = np.asarray(getattr(h_i, "taps", h_i), dtype=complex)
    hs = np.asarray(getattr(h_s, "taps", h_s), dtype=complex)
    for name, h in (("h_i", hi), ("h_s", hs)):
        if h.size - 1 > cp:
            raise ValueError(f"{name} has {h.size} taps, longer than the {cp}-sample CP")

    si = _apply(xi, jt["pn_tx_i"], hi, n) * jt["pn_rx"]
    soi = _apply(xs, jt["pn_tx_s"], hs, n) * jt["pn_rx"] * np.sqrt(scenario.soi_power)
    z = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(scenario.noise_power / 2.0)
    return ReceivedSignal(si + soi + z, si, soi, z)
