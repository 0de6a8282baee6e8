"""Oscillator phase-noise models.

Two oscillator families are supported:

* free-running oscillators, whose phase error is a Wiener process with
  per-sample increment variance ``4 pi^2 f_c^2 C T_s``;
* PLL-based oscillators, whose phase error is a (possibly zero) Wiener drift
  plus a sum of independent stationary Ornstein-Uhlenbeck components.

For both, ``E[exp(j (phi_m - phi_n))]`` only depends on ``|m - n|`` and is
available in closed form through :func:`autocorrelation`.  Everything the
estimators need (frequency- and time-domain correlation matrices, residual
ICI power) is derived from that function.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import optimize, signal
from scipy.stats import poisson
from scipy.linalg import toeplitz

from ._validation import check_count, check_positive, check_rng

__all__ = [
    "OscillatorKind",
    "PllComponent",
    "OscillatorModel",
    "PhaseNoiseTrace",
    "PhaseSpectrum",
    "generate_free_running",
    "generate_pll",
    "generate",
    "autocorrelation",
    "autocorrelation_terms",
    "correlation_matrix_freq",
    "correlation_matrix_time",
    "residual_ici_power",
    "total_ici_power",
    "calibrate_to_ici_target",
    "combined_model",
    "default_pll",
    "CalibrationError",
]


class OscillatorKind(str, Enum):
    FREE_RUNNING = "free_running"
    PLL = "pll"


class PllComponent(NamedTuple):
    """One Ornstein-Uhlenbeck term of a PLL phase-noise model.

    ``mu + v`` (s^2) sets the stationary variance ``4 pi^2 f_c^2 (mu + v)``,
    ``lam`` (1/s) the decay rate.
    """

    mu: float
    v: float
    lam: float

    @property
    def weight(self):
        return self.mu + self.v


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OscillatorModel:
    kind: OscillatorKind = OscillatorKind.FREE_RUNNING
    carrier_hz: float = 2.4e9
    sample_interval_s: float = 50e-9
    c_param: float = 0.0
    pll_components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "kind", OscillatorKind(self.kind))
        check_positive(self.carrier_hz, "carrier_hz")
        check_positive(self.sample_interval_s, "sample_interval_s")
        check_positive(self.c_param, "c_param", strict=False)
        comps = tuple(PllComponent(*map(float, c)) for c in self.pll_components)
        for c in comps:
            if not c.lam > 0:
                raise ValueError(f"PLL component decay rate must be > 0, got {c.lam}")
            if c.weight < 0:
                raise ValueError(f"PLL component mu + v must be >= 0, got {c.weight}")
        if comps and self.kind is OscillatorKind.FREE_RUNNING:
            raise ValueError("free-running model cannot carry PLL components")
        object.__setattr__(self, "pll_components", comps)

    @classmethod
    def free_running(cls, c_param, carrier_hz=2.4e9, sample_interval_s=50e-9):
        return cls(OscillatorKind.FREE_RUNNING, carrier_hz, sample_interval_s, c_param)

    @classmethod
    def from_3db_bandwidth(cls, f3db_hz, carrier_hz=2.4e9, sample_interval_s=50e-9):
        """Free-running model from the Lorentzian 3 dB bandwidth, ``C = f3dB / (pi f_c^2)``."""
        c = check_positive(f3db_hz, "f3db_hz", strict=False) / (np.pi * carrier_hz**2)
        return cls.free_running(c, carrier_hz, sample_interval_s)

    @classmethod
    def pll(cls, components, c_param=0.0, carrier_hz=2.4e9, sample_interval_s=50e-9):
        return cls(OscillatorKind.PLL, carrier_hz, sample_interval_s, c_param, tuple(components))

    @property
    def phase_scale(self):
        """``4 pi^2 f_c^2``: converts the model's s^2 parameters to rad^2."""
        return 4.0 * np.pi**2 * self.carrier_hz**2

    @property
    def increment_variance(self):
        """Per-sample Wiener increment variance ``sigma^2`` (rad^2)."""
        return self.phase_scale * self.c_param * self.sample_interval_s

    def phase_structure(self, lag):
        """Variance of ``phi_{n+lag} - phi_n`` (rad^2)."""
        d = np.abs(np.asarray(lag, dtype=float))
        out = self.increment_variance * d
        ts = self.sample_interval_s
        for c in self.pll_components:
            out = out + 2.0 * self.phase_scale * c.weight * -np.expm1(-c.lam * ts * d)
        return out

    def scaled(self, factor):
        """Same spectral shape with ``C`` and every ``mu_i + v_i`` multiplied by ``factor``."""
        factor = check_positive(factor, "factor", strict=False)
        comps = tuple(PllComponent(c.mu * factor, c.v * factor, c.lam) for c in self.pll_components)
        return replace(self, c_param=self.c_param * factor, pll_components=comps)

    @property
    def is_noiseless(self):
        return self.c_param == 0 and all(c.weight == 0 for c in self.pll_components)


@dataclass(frozen=True)
class PhaseNoiseTrace:
    """Sampled phase error ``phi_n`` and its complex form ``exp(j phi_n)``.

    ``phases`` may carry leading batch dimensions; the last axis is time.
    """

    phases: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phases", np.asarray(self.phases, dtype=float))

    @property
    def complex_form(self):
        return np.exp(1j * self.phases)

    def __len__(self):
        return self.phases.shape[-1]

    def __add__(self, other):
        return PhaseNoiseTrace(self.phases + other.phases)

    def segment(self, start, stop):
        return PhaseNoiseTrace(self.phases[..., start:stop])


@dataclass(frozen=True)
class PhaseSpectrum:
    """DFT coefficients ``J_k`` of a phase-noise symbol, 1/N normalised (``J_0 = 1`` without noise)."""

    coefficients: np.ndarray

    @classmethod
    def from_trace(cls, trace):
        j = trace.complex_form if isinstance(trace, PhaseNoiseTrace) else np.asarray(trace)
        return cls(np.fft.fft(j, axis=-1) / j.shape[-1])

    @property
    def n_fft(self):
        return self.coefficients.shape[-1]

    def at(self, offsets):
        """Coefficients at signed spectral offsets (negative offsets wrap)."""
        return self.coefficients[..., np.asarray(offsets) % self.n_fft]


def _batched_shape(n_samples, n_paths):
    return (n_samples,) if n_paths is None else (check_count(n_paths, "n_paths"), n_samples)


def _wiener(model, n_samples, rng, n_paths):
    shape = _batched_shape(n_samples, n_paths)
    sigma = np.sqrt(model.increment_variance)
    steps = rng.standard_normal(shape) * sigma
    steps[..., 0] = 0.0
    return np.cumsum(steps, axis=-1)


def generate_free_running(model, n_samples, seed=None, n_paths=None):
    """Wiener phase path starting at zero.

    ``phi_0 = 0`` and ``phi_n = phi_{n-1} + alpha_n`` with i.i.d.
    ``alpha_n ~ N(0, 4 pi^2 f_c^2 C T_s)``.  Pass ``n_paths`` to draw a batch
    of independent paths in one call.
    """
    if model.kind is not OscillatorKind.FREE_RUNNING:
        raise ValueError("generate_free_running needs a free-running model")
    n_samples = check_count(n_samples, "n_samples")
    return PhaseNoiseTrace(_wiener(model, n_samples, check_rng(seed), n_paths))


def generate_pll(model, n_samples, seed=None, n_paths=None):
    """PLL phase path: Wiener drift plus stationary OU components.

    Each OU term is sampled exactly through its AR(1) recursion
    ``U_n = rho U_{n-1} + sqrt(s^2 (1 - rho^2)) xi_n`` with ``rho = exp(-lam T_s)``
    and stationary variance ``s^2 = 4 pi^2 f_c^2 (mu + v)``, started from the
    stationary law.
    """
    if model.kind is not OscillatorKind.PLL:
        raise ValueError("generate_pll needs a PLL model")
    n_samples = check_count(n_samples, "n_samples")
    rng = check_rng(seed)
    phases = _wiener(model, n_samples, rng, n_paths)
    shape = _batched_shape(n_samples, n_paths)
    for comp in model.pll_components:
        var = model.phase_scale * comp.weight
        rho = np.exp(-comp.lam * model.sample_interval_s)
        drive = rng.standard_normal(shape)
        drive[..., 1:] *= np.sqrt(var * -np.expm1(-2.0 * comp.lam * model.sample_interval_s))
        drive[..., 0] *= np.sqrt(var)
        phases = phases + signal.lfilter([1.0], [1.0, -rho], drive, axis=-1)
    return PhaseNoiseTrace(phases)


def generate(model, n_samples, seed=None, n_paths=None):
    """Dispatch to the generator matching ``model.kind``."""
    if model.kind is OscillatorKind.PLL:
        return generate_pll(model, n_samples, seed, n_paths)
    return generate_free_running(model, n_samples, seed, n_paths)


def autocorrelation(model, lag):
    """``E[exp(j (phi_m - phi_n))]`` at ``lag = m - n`` samples (free-running or PLL closed form)."""
    return np.exp(-0.5 * model.phase_structure(lag))


def autocorrelation_terms(model, step=1, rtol=1e-20, max_terms=4096):
    """Exponential-sum form of the autocorrelation on a lag grid of spacing ``step``.

    Returns ``(weights, bases)`` with ``autocorrelation(model, d * step)``
    equal to ``sum(weights * bases**d)`` for ``d >= 0``.  Free-running models
    give a single term; each PLL component is expanded through the power
    series of ``exp(s^2 exp(-lam T_s d))``, dropping terms whose weight is
    below ``rtol`` (the dropped mass is at most ``rtol`` per component).
    """
    ts = model.sample_interval_s * step
    weights = np.array([1.0])
    bases = np.array([np.exp(-0.5 * model.increment_variance * step)])
    for comp in model.pll_components:
        s2 = model.phase_scale * comp.weight
        if s2 == 0:
            continue
        rho = np.exp(-comp.lam * ts)
        n_terms = int(s2 + 12.0 * np.sqrt(s2) + 60)
        if n_terms > max_terms:
            raise ValueError(f"PLL component variance {s2:.3g} rad^2 needs {n_terms} series terms (max {max_terms})")
        k = np.arange(n_terms)
        # exp(-s2) s2^k / k!
        pk = poisson.pmf(k, s2)
        keep = pk >= rtol * pk.max()
        keep[: int(np.argmax(pk)) + 1] = True
        pk, k = pk[keep], k[keep]
        weights = np.outer(weights, pk).ravel()
        bases = np.outer(bases, rho**k).ravel()
    order = np.argsort(-weights)
    return weights[order], bases[order]


def _dft_index(indices, n_fft):
    idx = np.asarray(indices, dtype=int)
    if np.any(idx <= -n_fft // 2 - (n_fft % 2)) or np.any(idx > n_fft // 2):
        raise ValueError(f"spectral offsets must lie in (-{n_fft}/2, {n_fft}/2], got {idx.tolist()}")
    return idx % n_fft


def _time_toeplitz(model, n):
    return toeplitz(autocorrelation(model, np.arange(n)))


def correlation_matrix_freq(model, n_fft, indices=None):
    """Correlation ``E[J_p J_q^*]`` of the 1/N-normalised phase-noise DFT coefficients.

    ``R(p, q) = N^-2 sum_m sum_n r(m - n) exp(-j 2 pi (p m - q n) / N)``.
    Without ``indices`` the full matrix is returned in natural FFT order
    (offset ``p`` at row ``p mod N``); otherwise rows/columns follow the
    given signed offsets.
    """
    n_fft = check_count(n_fft, "n_fft", minimum=2)
    full = _freq_correlation_cached(model, n_fft)
    if indices is None:
        return full.copy()
    idx = _dft_index(indices, n_fft)
    return full[np.ix_(idx, idx)]


_FREQ_CACHE = {}


def _freq_correlation_cached(model, n_fft):
    key = (model, n_fft)
    hit = _FREQ_CACHE.get(key)
    if hit is None:
        t = _time_toeplitz(model, n_fft)
        hit = np.fft.ifft(np.fft.fft(t, axis=0), axis=1) / n_fft
        hit = 0.5 * (hit + hit.conj().T)
        hit.setflags(write=False)
        if len(_FREQ_CACHE) > 64:
            _FREQ_CACHE.clear()
        _FREQ_CACHE[key] = hit
    return hit


def correlation_matrix_time(model, positions):
    """Real symmetric ``R(m, n) = autocorrelation(positions[m] - positions[n])``."""
    pos = np.asarray(positions, dtype=int).ravel()
    if np.any(pos < 0):
        raise ValueError("positions must be non-negative")
    if np.unique(pos).size != pos.size:
        raise ValueError("positions must be distinct")
    return autocorrelation(model, pos[:, None] - pos[None, :])


def _estimated_offsets(order):
    half = order // 2
    return np.concatenate([np.arange(half, 0, -1), -np.arange(1, half + 1)])


def residual_ici_power(r_freq, order):
    """ICI power left outside the ``order`` estimated coefficients ``J_{±1..±M/2}``.

    ``r_freq`` is the full frequency correlation matrix in FFT order (or its
    diagonal).  The DC bin is the CPE and never counts as ICI, so
    ``order=0`` returns the total ICI power ``1 - R(0, 0)`` and ``order=N``
    returns 0.
    """
    r_freq = np.asarray(r_freq)
    diag = np.real(np.diagonal(r_freq) if r_freq.ndim == 2 else r_freq)
    n = diag.size
    if order < 0 or order % 2:
        raise ValueError(f"order must be even and >= 0, got {order}")
    if order > n:
        raise ValueError(f"order {order} exceeds n_fft {n}")
    mask = np.ones(n, dtype=bool)
    mask[0] = False
    mask[_estimated_offsets(order) % n] = False
    return float(np.sum(diag[mask]))


def total_ici_power(model, n_fft):
    """Closed form of ``sum_{p != 0} R(p, p) = 1 - R(0, 0)``.

    Uses ``N + 2 sum_d (N - d) = N^2`` to write it as a sum of ``1 - r(d)``
    terms, which stays accurate at very low noise levels.
    """
    d = np.arange(1, n_fft)
    one_minus_r = -np.expm1(-0.5 * model.phase_structure(d))
    return float(2.0 * np.sum((n_fft - d) * one_minus_r) / n_fft**2)


def calibrate_to_ici_target(template, target_ici_dbc, n_fft, bounds=(-30.0, 30.0)):
    """Rescale ``template`` so its total ICI power hits ``target_ici_dbc``.

    The scale multiplies ``C`` and every ``mu_i + v_i``, preserving the PLL
    spectral shape.  The search runs on ``log10(scale)`` within ``bounds``
    and raises :class:`CalibrationError` (with the reachable bracket) when
    the target is out of range.
    """
    if not target_ici_dbc < 0:
        raise ValueError(f"target_ici_dbc must be negative, got {target_ici_dbc}")
    if template.is_noiseless:
        raise CalibrationError("template has no phase noise to scale")
    target = 10.0 ** (target_ici_dbc / 10.0)

    def excess(log_scale):
        return np.log(total_ici_power(template.scaled(10.0**log_scale), n_fft)) - np.log(target)

    lo, hi = bounds
    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo > 0 or f_hi < 0:
        reach = [10 * np.log10(total_ici_power(template.scaled(10.0**b), n_fft)) for b in bounds]
        raise CalibrationError(
            f"ICI target {target_ici_dbc} dBc outside reachable bracket "
            f"[{reach[0]:.2f}, {reach[1]:.2f}] dBc"
        )
    log_scale = optimize.brentq(excess, lo, hi, xtol=1e-12, rtol=1e-14)
    return template.scaled(10.0**log_scale)


def combined_model(*models):
    """Model of the summed phase of independent oscillators sharing ``f_c`` and ``T_s``.

    Phase structure functions add, so ``C`` values add and PLL components
    concatenate.  Two identical free-running chains give ``model.scaled(2)``.
    """
    first = models[0]
    for m in models[1:]:
        if (m.carrier_hz, m.sample_interval_s) != (first.carrier_hz, first.sample_interval_s):
            raise ValueError("combined oscillators must share carrier and sample interval")
    comps = tuple(c for m in models for c in m.pll_components)
    kind = OscillatorKind.PLL if comps or any(m.kind is OscillatorKind.PLL for m in models) else OscillatorKind.FREE_RUNNING
    return OscillatorModel(kind, first.carrier_hz, first.sample_interval_s, sum(m.c_param for m in models), comps)


def default_pll(n_fft=64, carrier_hz=2.4e9, sample_interval_s=50e-9, half_lag=None, drift_fraction=0.0):
    """Single-component PLL preset (before ICI calibration).

    The OU decay is chosen so that ``1 - exp(-lam T_s d)`` reaches one half at
    ``d = half_lag`` samples (default ``n_fft / 4``).  ``drift_fraction`` puts
    that share of the per-symbol phase variance into a residual Wiener drift.
    The absolute level is arbitrary; pass the result to
    :func:`calibrate_to_ici_target`.
    """
    half_lag = n_fft / 4 if half_lag is None else half_lag
    lam = np.log(2.0) / (half_lag * sample_interval_s)
    weight = 1e-20
    c_param = drift_fraction * 2.0 * weight / (n_fft * sample_interval_s)
    return OscillatorModel.pll([(weight, 0.0, lam)], c_param, carrier_hz, sample_interval_s)
