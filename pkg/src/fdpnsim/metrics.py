"""Cancellation gain, SINR and the Monte-Carlo trial harness.

Residual self-interference is isolated exactly: the SI, SOI and noise
components of every received frame are tracked separately, the canceller
runs on the full received signal, and its SI reconstruction is subtracted
from the SI component alone.  Powers are averaged over trials in the linear
domain and reported as dB of the means.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_count
from .canceller import SelfInterferenceCanceller
from .channel import ChannelKind, compose_received, realize_channel
from .estimator import EstimatorConfig
from .ofdm import build_frame, demodulate
from .opcount import NULL_COUNTER, OpCounter
from .oscillator import generate

__all__ = [
    "CancellationReport",
    "TrialPowers",
    "cancellation_gain",
    "sinr",
    "db",
    "from_db",
    "simulate_trial",
    "run_trials",
    "GAIN_CEILING_DB",
]

GAIN_CEILING_DB = 120.0
_DB_PER_NEPER = 10.0 / np.log(10.0)


def db(x):
    return 10.0 * np.log10(x)


def from_db(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def cancellation_gain(incoming_si_power, residual_si_power, ceiling_db=GAIN_CEILING_DB):
    """Gain in dB and whether it was clipped to ``ceiling_db``.

    A zero residual (or one below ``incoming / 10^(ceiling/10)``) reports the
    ceiling.
    """
    if not incoming_si_power > 0:
        raise ValueError(f"incoming SI power must be > 0, got {incoming_si_power}")
    if residual_si_power < 0:
        raise ValueError(f"residual SI power must be >= 0, got {residual_si_power}")
    if residual_si_power == 0 or incoming_si_power / residual_si_power > from_db(ceiling_db):
        return float(ceiling_db), True
    return float(db(incoming_si_power / residual_si_power)), False


def sinr(residual_si_power, soi_power, noise_power):
    """``soi / (residual_si + noise)`` in dB."""
    if min(residual_si_power, soi_power, noise_power) < 0:
        raise ValueError("powers must be non-negative")
    denom = residual_si_power + noise_power
    if denom == 0:
        if soi_power == 0:
            raise ValueError("all powers are zero")
        return float("inf")
    return float(db(soi_power / denom)) if soi_power > 0 else float("-inf")


@dataclass(frozen=True)
class TrialPowers:
    """Mean per-subcarrier powers over the data symbols of one frame."""

    incoming_si: float
    residual_si: float
    soi: float
    noise: float
    ici: float


@dataclass(frozen=True)
class CancellationReport:
    isr_db: float
    p_ici_dbc: float
    snr_db: float
    gain_db: float
    sinr_db: float
    std_err: float
    n_trials: int
    op_counts: dict = field(default_factory=dict)
    gain_capped: bool = False
    label: str = ""
    seed: int = None
    powers: TrialPowers = None

    @property
    def half_duplex_sinr_db(self):
        return self.snr_db


def _spawn(seed):
    """Fresh copy of ``seed`` as a SeedSequence, so spawning never depends on earlier calls."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    return np.random.SeedSequence(seed)


def simulate_trial(scenario, cfg, seed=None, channel="exact", counter=NULL_COUNTER):
    """One frame through composition, cancellation and SI-only accounting.

    ``channel`` is ``"exact"`` (true frequency responses) or ``"estimated"``
    (LS from the frame's training symbols).
    """
    if channel not in ("exact", "estimated"):
        raise ValueError(f"channel must be 'exact' or 'estimated', got {channel!r}")
    frame = scenario.frame
    s_frame_i, s_frame_s, s_h_i, s_h_s, s_tx_i, s_tx_s, s_rx, s_noise = _spawn(seed).spawn(8)
    x_i = build_frame(frame, seed=np.random.default_rng(s_frame_i), cover_row=0)
    x_s = build_frame(frame, seed=np.random.default_rng(s_frame_s), cover_row=1)
    if scenario.flat_si_channel:
        h_i = np.ones(1, dtype=complex)
    else:
        h_i = realize_channel(ChannelKind.SELF_INTERFERENCE, scenario.si_k_db, scenario.n_taps,
                              np.random.default_rng(s_h_i)).taps
    h_s = realize_channel(ChannelKind.SIGNAL_OF_INTEREST, scenario.soi_k_db, scenario.n_taps,
                          np.random.default_rng(s_h_s)).taps
    chain = scenario.chain_model
    n = frame.n_samples
    traces = [generate(chain, n, np.random.default_rng(s)) for s in (s_tx_i, s_tx_s, s_rx)]
    rx = compose_received(x_i, x_s, h_i, h_s, *traces, scenario, np.random.default_rng(s_noise))

    y = demodulate(rx.total, frame)
    y_si = demodulate(rx.self_interference, frame)
    t = frame.n_training
    n_fft = frame.n_fft
    h_i_f = np.fft.fft(h_i, n_fft)
    if channel == "exact":
        known = dict(channel_si=h_i_f, channel_soi=np.sqrt(scenario.soi_power) * np.fft.fft(h_s, n_fft))
    else:
        known = {}
    canceller = SelfInterferenceCanceller(
        scenario.combined_oscillator, cfg.domain, cfg.order_m, cfg.n_observations,
        noise_variance=scenario.noise_power, soi_power=None, omit_cpe=cfg.omit_cpe,
        pilot_set=frame.pilot_set, **known)
    canceller.fit(y[:t], x_i.training, x_s.training)
    recon = canceller.reconstruct(y[t:], x_i.data, counter)
    resid = y_si[t:] - recon

    # ICI actually present: SI after removing each symbol's true common phase
    j_c = (traces[0].complex_form * traces[2].complex_form).reshape(frame.n_symbols, -1)[t:, frame.cp_len:]
    cpe_true = j_c.mean(axis=1, keepdims=True)
    ici = y_si[t:] - x_i.data * h_i_f * cpe_true

    def power(v):
        return float(np.mean(np.abs(v) ** 2))

    soi = demodulate(rx.signal_of_interest, frame)[t:]
    noise = demodulate(rx.noise, frame)[t:]
    return TrialPowers(power(y_si[t:]), power(resid), power(soi), power(noise), power(ici))


def run_trials(scenario, cfg=None, n_trials=100, seed=0, channel="exact", count_ops=False):
    """Monte-Carlo average of :func:`simulate_trial` over ``n_trials`` independent frames.

    Trial ``i`` uses the ``i``-th child of ``SeedSequence(seed)``, so results
    depend only on ``seed`` and ``n_trials``.  ``std_err`` is the standard
    error of the gain estimate (delta method on the mean residual ratio).
    ``op_counts`` holds per-symbol multiply-accumulate counts per stage when
    ``count_ops`` is set.
    """
    n_trials = check_count(n_trials, "n_trials")
    cfg = EstimatorConfig() if cfg is None else cfg
    counter = OpCounter() if count_ops else NULL_COUNTER
    rows = []
    for i, child in enumerate(_spawn(seed).spawn(n_trials)):
        try:
            rows.append(simulate_trial(scenario, cfg, child, channel, counter))
        except Exception as exc:
            raise RuntimeError(f"trial {i} failed: {exc}") from exc
    arr = np.array([[r.incoming_si, r.residual_si, r.soi, r.noise, r.ici] for r in rows])
    mean = TrialPowers(*arr.mean(axis=0))
    gain, capped = cancellation_gain(mean.incoming_si, mean.residual_si)
    ratio = arr[:, 1] / arr[:, 0]
    std_err = 0.0
    if n_trials > 1 and ratio.mean() > 0:
        std_err = float(_DB_PER_NEPER * ratio.std(ddof=1) / (np.sqrt(n_trials) * ratio.mean()))
    n_sym = n_trials * scenario.frame.n_data
    ops = {k: v / n_sym for k, v in sorted(counter.counts.items())} if count_ops else {}
    return CancellationReport(
        isr_db=float(db(mean.incoming_si / mean.soi)) if mean.soi > 0 else float("inf"),
        p_ici_dbc=float(db(mean.ici / mean.incoming_si)),
        snr_db=float(db(mean.soi / mean.noise)) if mean.noise > 0 else float("inf"),
        gain_db=gain,
        sinr_db=sinr(mean.residual_si, mean.soi, mean.noise) if mean.soi > 0 else float("-inf"),
        std_err=std_err,
        n_trials=n_trials,
        op_counts=ops,
        gain_capped=capped,
        label=cfg.label,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
        powers=mean,
    )
