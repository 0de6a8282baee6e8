"""Digital self-interference cancellation with CPE and ICI compensation.

The subtraction stages are pure functions of the received symbols and the
estimates; :class:`SelfInterferenceCanceller` wires channel estimation, an
MMSE phase-noise estimator and those stages together behind a
fit/transform interface.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complex_array
from .estimator import (
    ChannelEstimate,
    Domain,
    FrequencyDomainEstimator,
    TimeDomainEstimator,
    estimate_channels,
    estimated_offsets,
)
from .opcount import NULL_COUNTER

__all__ = [
    "CancellationResult",
    "cancel_cpe",
    "cancel_ici_freq",
    "ici_reconstruction",
    "cancel_time",
    "SelfInterferenceCanceller",
]


@dataclass(frozen=True)
class CancellationResult:
    """Residual after cancellation plus the residual power after each stage.

    ``stages`` maps ``"input"``, ``"cpe"`` and ``"ici"`` to mean powers.
    """

    residual: np.ndarray
    reconstruction: np.ndarray
    stages: dict


def cancel_cpe(Y, x_si, h_si, cpe):
    """``B_k = Y_k - X_k H_k J_0``; ``cpe`` is a scalar or one value per symbol row."""
    Y = np.asarray(Y)
    a = np.asarray(x_si) * np.asarray(getattr(h_si, "h_freq", h_si))
    return Y - a * np.asarray(cpe)[..., None]


def ici_reconstruction(a_ref, spectrum, counter=NULL_COUNTER, offsets=None):
    """``sum_{l != k} A_l J_{k-l}`` with circular indexing over the off-DC ``offsets``.

    ``offsets`` defaults to the nonzero off-DC coefficients.  Costs ``N``
    multiply-accumulates per offset, i.e. ``N M``.
    """
    a_ref = np.asarray(a_ref)
    j = np.asarray(getattr(spectrum, "coefficients", spectrum))
    out = np.zeros(np.broadcast_shapes(a_ref.shape, j.shape), dtype=complex)
    n = j.shape[-1]
    if offsets is None:
        offsets = np.flatnonzero(np.any(np.atleast_2d(j)[:, 1:] != 0, axis=0)) + 1
    offsets = np.asarray(offsets) % n
    for q in offsets:
        # bin k picks up A_{k-q} J_q
        out += np.roll(a_ref, q, axis=-1) * j[..., q : q + 1]
    counter.add(out.shape[-1] * offsets.size * (out.size // out.shape[-1]))
    return out


def cancel_ici_freq(B, x_si, h_si, spectrum, counter=NULL_COUNTER):
    """``B_k - sum_{l != k} X_l H_l J_{k-l}``."""
    a_ref = np.asarray(x_si) * np.asarray(getattr(h_si, "h_freq", h_si))
    return np.asarray(B) - ici_reconstruction(a_ref, spectrum, counter)


def cancel_time(y, a_time, j_est, counter=NULL_COUNTER):
    """``y_n - (x * h)_n j_n`` for time-domain symbols (CP removed)."""
    y = np.asarray(y)
    counter.add(y.size)
    return y - np.asarray(a_time) * np.asarray(j_est)


def _mean_power(x):
    return float(np.mean(np.abs(x) ** 2))


class SelfInterferenceCanceller(BaseEstimator, TransformerMixin):
    """Channel estimation, phase-noise estimation and SI subtraction per OFDM symbol.

    Parameters
    ----------
    oscillator : OscillatorModel
        Model of the combined transmit + receive phase noise seen by the SI.
    domain : {"time", "frequency"}
    order : int
        Estimation order ``M`` (0 compensates the CPE only).
    n_observations : int, optional
        Observation count ``p >= M`` (default ``M``).
    noise_variance : float
        Thermal noise variance per subcarrier.
    soi_power : float, optional
        Assumed signal-of-interest power per subcarrier.  Defaults to the mean
        of ``|H^S|^2`` from the fitted SOI channel.
    pilot_set : sequence of int, optional
    omit_cpe : bool
        Skip per-symbol CPE estimation (useful with PLL oscillators).
    channel_si, channel_soi : array-like, optional
        Known frequency responses.  When both are given, ``fit`` uses them
        instead of estimating from training.

    Notes
    -----
    ``fit(Y_train, X_si_train, X_soi_train)`` estimates both channels from
    orthogonal training symbols.  ``transform(Y, X_si)`` returns the
    frequency-domain residual of each data symbol; :meth:`reconstruct`
    returns the SI estimate that was subtracted.
    """

    def __init__(self, oscillator=None, domain="time", order=32, n_observations=None,
                 noise_variance=0.0, soi_power=None, pilot_set=None, omit_cpe=False,
                 channel_si=None, channel_soi=None):
        self.oscillator = oscillator
        self.domain = domain
        self.order = order
        self.n_observations = n_observations
        self.noise_variance = noise_variance
        self.soi_power = soi_power
        self.pilot_set = pilot_set
        self.omit_cpe = omit_cpe
        self.channel_si = channel_si
        self.channel_soi = channel_soi

    def fit(self, X, x_si=None, x_soi=None):
        """Estimate channels from received training symbols ``X`` and prepare the estimator."""
        X = np.atleast_2d(check_complex_array(X, "X", ndim=(1, 2)))
        n = X.shape[1]
        self.n_features_in_ = n
        if self.channel_si is not None and self.channel_soi is not None:
            h_si = ChannelEstimate(check_complex_array(self.channel_si, "channel_si", length=n), "exact")
            h_soi = ChannelEstimate(check_complex_array(self.channel_soi, "channel_soi", length=n), "exact")
        else:
            if x_si is None or x_soi is None:
                raise ValueError("training references x_si and x_soi are needed to estimate channels")
            h_si, h_soi = estimate_channels(X, x_si, x_soi)
        self.channel_si_, self.channel_soi_ = h_si, h_soi
        soi = float(np.mean(np.abs(h_soi.h_freq) ** 2)) if self.soi_power is None else float(self.soi_power)
        self.assumed_soi_power_ = soi
        cls = TimeDomainEstimator if Domain(self.domain) is Domain.TIME else FrequencyDomainEstimator
        self.estimator_ = cls(self.oscillator, self.order, self.n_observations, self.noise_variance,
                              soi, self.pilot_set, self.omit_cpe)
        self.estimator_.fit(h_si.h_freq[None, :])
        return self

    def reconstruct(self, Y, x_si, counter=NULL_COUNTER):
        """Estimated SI in the frequency domain for each symbol of ``Y``."""
        check_is_fitted(self, "estimator_")
        Y = np.atleast_2d(check_complex_array(Y, "Y", ndim=(1, 2), length=self.n_features_in_))
        x_si = np.broadcast_to(check_complex_array(x_si, "x_si", length=self.n_features_in_), Y.shape)
        a_ref = x_si * self.channel_si_.h_freq
        est = self.estimator_
        n = self.n_features_in_
        if isinstance(est, TimeDomainEstimator):
            j = est.predict(Y, a_ref, counter)
            with counter.stage("transform"):
                a_time = counter.fft(a_ref, axis=1, inverse=True) * np.sqrt(n)
            with counter.stage("cancel"):
                counter.add(j.size)
                recon_t = a_time * j
            return np.fft.fft(recon_t, axis=1) / np.sqrt(n)
        spec = est.predict(Y, a_ref, counter)
        with counter.stage("cancel"):
            counter.add(a_ref.size)
            recon = a_ref * spec[:, :1]
            recon = recon + ici_reconstruction(a_ref, spec, counter, estimated_offsets(self.order))
        return recon

    def transform(self, Y, x_si=None, counter=NULL_COUNTER):
        if x_si is None:
            raise ValueError("the transmitted SI symbols x_si are required")
        Y = np.atleast_2d(np.asarray(Y))
        return Y - self.reconstruct(Y, x_si, counter)

    def cancel(self, Y, x_si):
        """Full result with per-stage residual powers (CPE only, then with ICI)."""
        check_is_fitted(self, "estimator_")
        Y = np.atleast_2d(check_complex_array(Y, "Y", ndim=(1, 2), length=self.n_features_in_))
        x_si = np.broadcast_to(np.asarray(x_si), Y.shape)
        cpe = self.estimator_.cpe(Y, x_si * self.channel_si_.h_freq)
        after_cpe = cancel_cpe(Y, x_si, self.channel_si_, cpe)
        recon = self.reconstruct(Y, x_si)
        residual = Y - recon
        stages = {"input": _mean_power(Y), "cpe": _mean_power(after_cpe), "ici": _mean_power(residual)}
        return CancellationResult(residual, recon, stages)
