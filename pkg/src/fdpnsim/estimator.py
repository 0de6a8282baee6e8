"""Channel, common-phase-error and MMSE phase-noise estimators.

Frequency domain
    Estimate ``J_{±1..±M/2}`` from CPE-corrected bins ``B = A J + eta`` with
    ``W = R_JJ A^H (A R_JJ A^H + R_eta)^-1``.  ``A`` is a general complex
    matrix, so forming and inverting the normal matrix costs ``O(M^3)``.

Time domain
    Estimate ``j_n`` at ``M`` equally spaced samples from ``y = diag(a) j + zeta``
    with ``w = R_jj a^H (a R_jj a^H + R_zeta)^-1`` and interpolate linearly in
    between.  ``R_jj`` is real symmetric Toeplitz and its generating
    autocorrelation is a short sum of exponentials (one term for a
    free-running oscillator), i.e. the covariance of a low-order Gauss-Markov
    state.  The weight matrix is therefore built with a Kalman/RTS sweep run
    on all ``M`` unit observations at once, ``O(K^2 M^2)`` for ``K``
    exponential terms, instead of a dense inversion.
"""

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complex_array, check_order
from .opcount import NULL_COUNTER
from .oscillator import (
    PhaseSpectrum,
    _estimated_offsets,
    autocorrelation_terms,
    correlation_matrix_freq,
    correlation_matrix_time,
    residual_ici_power,
)

__all__ = [
    "Domain",
    "EstimatorConfig",
    "ChannelEstimate",
    "EstimationError",
    "estimate_channels",
    "estimate_cpe",
    "estimate_pn_freq",
    "estimate_pn_time",
    "estimated_offsets",
    "frequency_observation_bins",
    "time_observation_positions",
    "time_weights",
    "time_weights_dense",
    "FrequencyDomainEstimator",
    "TimeDomainEstimator",
]

_TINY = 1e-300


class EstimationError(ArithmeticError):
    pass


class Domain(str, Enum):
    FREQUENCY = "frequency"
    TIME = "time"


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings of one phase-noise estimator.

    ``observation_indices`` overrides the default observation set (bins
    nearest DC for the frequency domain, an equally spaced grid for the time
    domain); ``n_observations`` only changes its size.
    """

    order_m: int = 0
    domain: Domain = Domain.TIME
    observation_indices: tuple = None
    n_observations: int = None
    assumed_soi_power: float = 0.0
    noise_variance: float = 0.0
    omit_cpe: bool = False
    label: str = None

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        check_order(self.order_m)
        if self.assumed_soi_power < 0 or self.noise_variance < 0:
            raise ValueError("powers must be non-negative")
        if self.observation_indices is not None:
            obs = tuple(int(i) for i in self.observation_indices)
            object.__setattr__(self, "observation_indices", obs)
            if len(obs) < self.order_m:
                raise ValueError(f"need at least M={self.order_m} observations, got {len(obs)}")
        if self.n_observations is not None and self.n_observations < self.order_m:
            raise ValueError(f"n_observations {self.n_observations} < order {self.order_m}")
        if self.label is None:
            object.__setattr__(self, "label", f"{self.domain.value}-M{self.order_m}")

    @property
    def effective_noise(self):
        return self.assumed_soi_power + self.noise_variance


@dataclass(frozen=True)
class ChannelEstimate:
    h_freq: np.ndarray
    source: str = "exact"

    def __len__(self):
        return self.h_freq.size


# --- channel and CPE --------------------------------------------------------


def estimate_channels(received_training, training_si, training_soi):
    """Per-subcarrier LS estimates of both channels, averaged over the training block.

    With orthogonal (Hadamard-covered) training the other transmitter's
    contribution cancels in the average, so in the noise-free case each
    estimate is unbiased.
    """
    y = np.atleast_2d(check_complex_array(received_training, "received_training"))
    out = []
    for name, x in (("training_si", training_si), ("training_soi", training_soi)):
        x = np.atleast_2d(check_complex_array(x, name))
        if x.shape != y.shape:
            raise ValueError(f"{name} has shape {x.shape}, received training has {y.shape}")
        if np.any(np.abs(x) < _TINY):
            raise EstimationError(f"{name} has zero-valued training bins")
        out.append(ChannelEstimate(np.mean(y / x, axis=0), "training"))
    return tuple(out)


def estimate_cpe(y, x_si, h_si, pilot_set, counter=NULL_COUNTER):
    """LS common-phase-error estimate ``mean_{k in U} Y_k / (X_k H_k)``.

    Works on a single symbol (1-D) or a stack of symbols (2-D, one estimate
    per row).
    """
    y = np.asarray(y)
    u = list(pilot_set)
    ref = np.asarray(x_si)[..., u] * np.asarray(getattr(h_si, "h_freq", h_si))[..., u]
    if np.any(np.abs(ref) < _TINY):
        raise EstimationError("pilot reference X^I H^I vanishes on a pilot")
    with counter.stage("cpe"):
        counter.add(ref.size * 2)
    return np.mean(y[..., u] / ref, axis=-1)


# --- frequency domain -------------------------------------------------------


def estimated_offsets(order):
    """Signed offsets of the ``M`` estimated coefficients: ``M/2..1, -1..-M/2``."""
    return _estimated_offsets(check_order(order)).astype(int)


def frequency_observation_bins(n_fft, count, exclude=()):
    """The ``count`` subcarriers closest to DC, skipping ``exclude`` (positive offset first on ties)."""
    offsets = np.arange(n_fft)
    signed = np.where(offsets > n_fft // 2, offsets - n_fft, offsets)
    keep = ~np.isin(offsets, list(exclude))
    cand = offsets[keep]
    order = np.lexsort((-signed[keep], np.abs(signed[keep])))
    if count > cand.size:
        raise ValueError(f"only {cand.size} observation bins available, {count} requested")
    return cand[order[:count]]


def _ici_matrix(a_ref, rows, offsets):
    """``A[i, q] = A_{(rows_i - offsets_q) mod N}``: response of bin ``rows_i`` to ``J_{offsets_q}``."""
    n = a_ref.shape[-1]
    return a_ref[(rows[:, None] - offsets[None, :]) % n]


def estimate_pn_freq(b, a_ref, r_freq, cfg, pilot_set=(), counter=NULL_COUNTER, return_weights=False):
    """MMSE estimate of the non-DC phase-noise coefficients from CPE-corrected bins.

    Parameters
    ----------
    b : (N,) complex
        ``B_k = Y_k - A_k J_0`` for one symbol.
    a_ref : (N,) complex
        ``A_k = X^I_k H^I_k``.
    r_freq : (N, N) complex
        Full phase-noise spectral correlation (FFT order) of the combined
        transmit + receive process.
    cfg : EstimatorConfig
    pilot_set : sequence of int
        Bins excluded from the default observation set.

    Returns
    -------
    PhaseSpectrum
        ``M`` estimated coefficients at their offsets, zeros elsewhere
        (including DC).
    """
    b = check_complex_array(b, "b", ndim=1)
    n = b.size
    a_ref = check_complex_array(a_ref, "a_ref", ndim=1, length=n)
    m = check_order(cfg.order_m, n)
    out = np.zeros(n, dtype=complex)
    if m == 0:
        return (PhaseSpectrum(out), np.zeros((0, 0))) if return_weights else PhaseSpectrum(out)
    if cfg.observation_indices is not None:
        rows = np.asarray(cfg.observation_indices) % n
    else:
        rows = frequency_observation_bins(n, cfg.n_observations or m, exclude=pilot_set)
    if rows.size < m:
        raise EstimationError(f"{rows.size} observations cannot resolve {m} unknowns")
    offsets = estimated_offsets(m)
    r_jj = np.asarray(r_freq)[np.ix_(offsets % n, offsets % n)]
    a_mat = _ici_matrix(a_ref, rows, offsets)

    ici_floor = residual_ici_power(r_freq, m) * np.mean(np.abs(a_ref) ** 2)
    r_eta = cfg.effective_noise + ici_floor
    with counter.stage("estimate"):
        ra_h = counter.matmul(r_jj, a_mat.conj().T)  # M x p
        normal = counter.matmul(a_mat, ra_h)  # p x p
        normal[np.diag_indices_from(normal)] += r_eta
        normal = _load_diagonal(normal)
        # W = R A^H K^-1  <=>  K^H W^H = (R A^H)^H
        weights = counter.solve(normal.conj().T, ra_h.conj().T).conj().T
        est = counter.matmul(weights, b[rows])
    out[offsets % n] = est
    spec = PhaseSpectrum(out)
    return (spec, weights) if return_weights else spec


def _load_diagonal(mat):
    """Diagonal loading ``1e-10 * trace / n`` when the normal matrix is numerically singular."""
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > 1e14:
        eps = 1e-10 * np.real(np.trace(mat)) / mat.shape[0]
        warnings.warn(f"ill-conditioned normal matrix (cond={cond:.3g}); loading diagonal by {eps:.3g}",
                      RuntimeWarning, stacklevel=3)
        mat = mat + eps * np.eye(mat.shape[0])
    return mat


# --- time domain ------------------------------------------------------------


def time_observation_positions(n_fft, count):
    """``count`` equally spaced sample positions, centred in their spacing cells."""
    if count <= 0:
        return np.zeros(0, dtype=int)
    if count > n_fft:
        raise ValueError(f"cannot place {count} observations in {n_fft} samples")
    return (np.arange(count) * n_fft) // count + (n_fft // count - 1) // 2


def time_weights_dense(a_obs, positions, model, noise, counter=NULL_COUNTER):
    """Reference weight matrix ``R a^H (a R a^H + R_zeta)^-1`` by a general dense solve."""
    a_obs = np.asarray(a_obs, dtype=complex)
    r = correlation_matrix_time(model, positions)
    ra_h = r * a_obs.conj()[None, :]
    normal = a_obs[:, None] * ra_h
    normal[np.diag_indices_from(normal)] += noise
    counter.add(a_obs.size**2 * 2)
    return counter.solve(normal.conj().T, ra_h.conj().T).conj().T


def time_weights(a_obs, positions, model, noise, counter=NULL_COUNTER, terms=None):
    """Weight matrix ``w = R_jj a^H (a R_jj a^H + R_zeta)^-1`` from the Markov structure of ``R_jj``.

    ``R_jj(m, n) = sum_k c_k beta_k^|pos_m - pos_n|`` is the covariance of
    ``j = g^T s`` for a diagonal first-order state ``s`` (scaled to unit
    variance, ``g = sqrt(c)``).  The LMMSE estimate of ``j`` at the
    observed positions is the fixed-interval (RTS) smoother of that state.
    Running the smoother on all ``M`` unit observation vectors at once yields
    the ``M x M`` weight matrix in ``O(K^2 M^2)`` operations; all covariances
    stay real because ``R_jj`` is real and only ``|a|^2`` enters them.

    ``noise`` is a scalar or per-position effective noise variance.
    """
    a_obs = np.asarray(a_obs, dtype=complex)
    pos = np.asarray(positions, dtype=int)
    m = a_obs.size
    if m == 0:
        return np.zeros((0, 0), dtype=complex)
    if np.any(np.diff(pos) <= 0):
        raise ValueError("positions must be strictly increasing")
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (m,))
    weights_c, bases = autocorrelation_terms(model) if terms is None else terms
    g = np.sqrt(weights_c)
    k = g.size
    gaps = np.diff(pos)
    f_gap = bases[None, :] ** gaps[:, None]  # (m-1, k)
    q_gap = -np.expm1(2.0 * gaps[:, None] * np.log(np.maximum(bases, _TINY))[None, :])
    q_gap[:, bases >= 1.0] = 0.0

    rhs = np.eye(m, dtype=complex)
    means = np.empty((m, k, m), dtype=complex)  # filtered means
    pred_means = np.empty((m, k, m), dtype=complex)
    covs = np.empty((m, k, k))
    pred_covs = np.empty((m, k, k))
    mean_pred = np.zeros((k, m), dtype=complex)
    cov_pred = np.eye(k)
    abs_a2 = np.abs(a_obs) ** 2
    for i in range(m):
        pred_means[i] = mean_pred
        pred_covs[i] = cov_pred
        pg = cov_pred @ g
        s = abs_a2[i] * (g @ pg) + noise[i]
        if not s > 0:
            raise EstimationError(f"zero innovation variance at observation {i}")
        gain = pg * (np.conj(a_obs[i]) / s)
        innov = rhs[i][None, :] - a_obs[i] * (g @ mean_pred)[None, :]
        mean = mean_pred + gain[:, None] * innov
        cov = cov_pred - np.outer(pg, pg) * (abs_a2[i] / s)
        means[i] = mean
        covs[i] = cov
        if i + 1 < m:
            f = f_gap[i]
            mean_pred = f[:, None] * mean
            cov_pred = f[:, None] * cov * f[None, :] + np.diag(q_gap[i])
    counter.add(m * (3 * k * m + k * k))

    smoothed = means[-1]
    out = np.empty((m, m), dtype=complex)
    out[-1] = g @ smoothed
    for i in range(m - 2, -1, -1):
        f = f_gap[i]
        gain = np.linalg.solve(pred_covs[i + 1], (covs[i] * f[None, :]).T).T
        smoothed = means[i] + gain @ (smoothed - pred_means[i + 1])
        out[i] = g @ smoothed
    counter.add((m - 1) * (k**3 + 2 * k * k * m + k * m))
    return out


def estimate_pn_time(y, a, model, cfg, cpe=None, counter=NULL_COUNTER, positions=None, dense=False):
    """MMSE estimate of ``j_n`` over one symbol from time samples ``y_n = a_n j_n + zeta_n``.

    ``model`` is the combined (transmit + receive) oscillator model.  With
    ``M = 0`` the estimate is the constant ``cpe``.  Observation positions
    where ``a_n`` vanishes are dropped with a warning; between the remaining
    estimates ``j`` is interpolated linearly, and held constant past the
    first and last ones.
    """
    y = check_complex_array(y, "y", ndim=1)
    n = y.size
    a = check_complex_array(a, "a", ndim=1, length=n)
    m = check_order(cfg.order_m, n)
    if m == 0:
        if cpe is None:
            raise ValueError("order 0 needs a CPE estimate")
        return np.full(n, complex(cpe))
    if positions is None:
        positions = (np.asarray(cfg.observation_indices) if cfg.observation_indices is not None
                     else time_observation_positions(n, cfg.n_observations or m))
    positions = np.sort(np.asarray(positions, dtype=int))
    a_obs = a[positions]
    scale = np.sqrt(np.mean(np.abs(a) ** 2)) or 1.0
    live = np.abs(a_obs) > 1e-12 * scale
    if not np.all(live):
        warnings.warn(f"dropping {np.count_nonzero(~live)} time observation(s) with a_n = 0",
                      RuntimeWarning, stacklevel=2)
        positions, a_obs = positions[live], a_obs[live]
        if positions.size == 0:
            raise EstimationError("no usable time observations")
    noise = cfg.effective_noise
    if noise <= 0:
        noise = 1e-12 * scale**2
    with counter.stage("estimate"):
        terms = None
        if not dense:
            try:
                terms = autocorrelation_terms(model)
            except ValueError:
                # phase variance too large for a compact exponential sum
                dense = True
        if dense:
            w = time_weights_dense(a_obs, positions, model, noise, counter)
        else:
            w = time_weights(a_obs, positions, model, noise, counter, terms)
        j_obs = counter.matmul(w, y[positions])
    with counter.stage("cancel"):
        counter.add(2 * n)
        grid = np.arange(n)
        return np.interp(grid, positions, j_obs.real) + 1j * np.interp(grid, positions, j_obs.imag)


# --- estimator objects ------------------------------------------------------


class _PhaseNoiseEstimatorBase(BaseEstimator):
    _domain = None

    def __init__(self, oscillator=None, order=32, n_observations=None, noise_variance=0.0,
                 soi_power=0.0, pilot_set=None, omit_cpe=False):
        self.oscillator = oscillator
        self.order = order
        self.n_observations = n_observations
        self.noise_variance = noise_variance
        self.soi_power = soi_power
        self.pilot_set = pilot_set
        self.omit_cpe = omit_cpe

    def _config(self):
        return EstimatorConfig(self.order, self._domain, n_observations=self.n_observations,
                               assumed_soi_power=self.soi_power, noise_variance=self.noise_variance,
                               omit_cpe=self.omit_cpe)

    def fit(self, X, y=None):
        """Record the symbol length from reference symbols ``X`` (``A = X^I H^I``) and precompute statistics."""
        X = np.atleast_2d(check_complex_array(X, "X", ndim=(1, 2)))
        self.n_features_in_ = X.shape[1]
        check_order(self.order, self.n_features_in_)
        if self.oscillator is None:
            raise ValueError("an oscillator model is required")
        if self.pilot_set is None:
            from .ofdm import default_pilots

            self.pilots_ = np.asarray(default_pilots(self.n_features_in_))
        else:
            self.pilots_ = np.asarray(self.pilot_set, dtype=int)
        self.config_ = self._config()
        self._precompute()
        return self

    def _precompute(self):
        pass

    def _check_inputs(self, Y, reference):
        check_is_fitted(self, "config_")
        Y = np.atleast_2d(check_complex_array(Y, "Y", ndim=(1, 2), length=self.n_features_in_))
        A = np.broadcast_to(check_complex_array(reference, "reference", length=self.n_features_in_), Y.shape)
        return Y, A

    def cpe(self, Y, reference, counter=NULL_COUNTER):
        """Per-symbol common-phase-error estimates (ones when CPE estimation is omitted)."""
        Y, A = self._check_inputs(Y, reference)
        if self.omit_cpe:
            return np.ones(Y.shape[0], dtype=complex)
        return estimate_cpe(Y, A, np.ones(self.n_features_in_), self.pilots_, counter)


class FrequencyDomainEstimator(_PhaseNoiseEstimatorBase):
    """MMSE estimator of phase-noise DFT coefficients around DC.

    ``predict(Y, reference)`` takes received frequency-domain symbols and
    ``A = X^I H^I`` and returns the estimated spectra (DC holds the CPE
    estimate, ``M`` coefficients around it, zeros elsewhere).
    """

    _domain = Domain.FREQUENCY

    def _precompute(self):
        self.r_freq_ = correlation_matrix_freq(self.oscillator, self.n_features_in_)

    def predict(self, Y, reference, counter=NULL_COUNTER):
        Y, A = self._check_inputs(Y, reference)
        cpe = self.cpe(Y, A, counter)
        out = np.empty_like(Y)
        for t in range(Y.shape[0]):
            b = Y[t] - A[t] * cpe[t]
            spec = estimate_pn_freq(b, A[t], self.r_freq_, self.config_, self.pilots_, counter)
            out[t] = spec.coefficients
            out[t, 0] = cpe[t]
        return out


class TimeDomainEstimator(_PhaseNoiseEstimatorBase):
    """MMSE estimator of the phase-noise samples with linear interpolation.

    ``predict(Y, reference)`` takes received frequency-domain symbols and
    ``A = X^I H^I`` and returns the estimated ``j_n`` for every sample of each
    symbol.
    """

    _domain = Domain.TIME

    def predict(self, Y, reference, counter=NULL_COUNTER):
        Y, A = self._check_inputs(Y, reference)
        n = self.n_features_in_
        cpe = self.cpe(Y, A, counter) if self.order == 0 else [None] * Y.shape[0]
        with counter.stage("transform"):
            y_t = counter.fft(Y, axis=1, inverse=True) * np.sqrt(n)
            a_t = counter.fft(A, axis=1, inverse=True) * np.sqrt(n)
        return np.stack([
            estimate_pn_time(y_t[t], a_t[t], self.oscillator, self.config_, cpe[t], counter)
            for t in range(Y.shape[0])
        ])
