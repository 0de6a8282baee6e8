import numpy as np
import pytest
from sklearn.base import clone

from fdpnsim.canceller import (
    SelfInterferenceCanceller,
    cancel_cpe,
    cancel_ici_freq,
    cancel_time,
    ici_reconstruction,
)
from fdpnsim.ofdm import FrameConfig, build_frame
from fdpnsim.opcount import OpCounter
from fdpnsim.oscillator import generate

PILOTS = FrameConfig().pilot_set


def cgauss(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def through_phase_noise(a_freq, j):
    """``Y_k = sum_l A_l J_{k-l}`` via the time domain (unitary DFT)."""
    return np.fft.fft(np.fft.ifft(a_freq, axis=-1) * j, axis=-1)


def test_cpe_stage_trivial(rng):
    x, h = cgauss(rng, 64), cgauss(rng, 64)
    np.testing.assert_allclose(cancel_cpe(x * h, x, h, 1.0), 0, atol=1e-14)
    y = cgauss(rng, 64)
    np.testing.assert_array_equal(cancel_cpe(y, np.zeros(64), h, 0.3), y)
    rows = cgauss(rng, 3, 64)
    cpe = np.array([1.0, 1j, -1.0])
    np.testing.assert_allclose(cancel_cpe(rows * h * cpe[:, None], rows, h, cpe), 0, atol=1e-14)


def test_exact_spectrum_cancels_completely(rng, fr_50):
    n = 8
    for _ in range(20):
        a = cgauss(rng, n)
        j = generate(fr_50.scaled(1e3), n, rng).complex_form
        J = np.fft.fft(j) / n
        y = through_phase_noise(a, j)
        b = cancel_cpe(y, a, np.ones(n), J[0])
        np.testing.assert_allclose(cancel_ici_freq(b, a, np.ones(n), J), 0, atol=1e-12)
        a_t = np.fft.ifft(a) * np.sqrt(n)
        np.testing.assert_allclose(cancel_time(np.fft.ifft(y) * np.sqrt(n), a_t, j), 0, atol=1e-12)


def test_frequency_and_time_cancellation_agree(rng, fr_50):
    n = 64
    a = cgauss(rng, n)
    y = through_phase_noise(a, generate(fr_50, n, rng).complex_form) + 1e-3 * cgauss(rng, n)
    # any estimate: compare the two subtraction paths for the same j
    j_est = generate(fr_50, n, rng).complex_form
    J_est = np.fft.fft(j_est) / n
    freq = cancel_ici_freq(cancel_cpe(y, a, np.ones(n), J_est[0]), a, np.ones(n), J_est)
    time = cancel_time(np.fft.ifft(y) * np.sqrt(n), np.fft.ifft(a) * np.sqrt(n), j_est)
    np.testing.assert_allclose(freq, np.fft.fft(time) / np.sqrt(n), atol=1e-8)


def test_ici_reconstruction_sparse_cost(rng):
    a = cgauss(rng, 64)
    spec = np.zeros(64, complex)
    spec[[1, 2, 62, 63]] = 1e-3
    c = OpCounter()
    ici_reconstruction(a, spec, c)
    assert c["other"] == 64 * 4
    np.testing.assert_array_equal(ici_reconstruction(a, np.zeros(64)), 0)


def si_frames(fr, n_sym, rng, noise=1e-7):
    cfg = FrameConfig(n_training=0, n_data=n_sym)
    x = build_frame(cfg, seed=rng).data
    h = np.fft.fft(np.array([1.0, 0.1 + 0.05j]), 64)
    j = generate(fr, 64, rng, n_paths=n_sym).complex_form
    return through_phase_noise(x * h, j) + np.sqrt(noise) * cgauss(rng, n_sym, 64), x, h


def fitted(fr, domain, order, h):
    return SelfInterferenceCanceller(fr, domain, order, noise_variance=1e-7, soi_power=0.0,
                                     pilot_set=PILOTS, channel_si=h, channel_soi=np.zeros(64)).fit(
        np.zeros((1, 64)))


@pytest.mark.parametrize("domain", ["frequency", "time"])
def test_stage_powers_non_increasing(domain, fr_50):
    rng = np.random.default_rng(100)
    y, x, h = si_frames(fr_50, 100, rng)
    res = fitted(fr_50, domain, 32, h).cancel(y, x)
    assert res.stages["input"] >= res.stages["cpe"] >= res.stages["ici"]
    # also per symbol over 100 seeds
    canc = fitted(fr_50, domain, 32, h)
    worse = 0
    for t in range(100):
        st = canc.cancel(y[t], x[t]).stages
        worse += not (st["input"] >= st["cpe"] >= st["ici"])
    assert worse == 0


@pytest.mark.parametrize("domain", ["frequency", "time"])
def test_reconstruction_is_linear_in_received(domain, fr_50, rng):
    y, x, h = si_frames(fr_50, 2, rng)
    canc = fitted(fr_50, domain, 16, h)
    z = cgauss(rng, 2, 64)
    lhs = canc.reconstruct(2.0 * y - 0.5j * z, x)
    rhs = 2.0 * canc.reconstruct(y, x) - 0.5j * canc.reconstruct(z, x)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_canceller_api(fr_50, rng):
    y, x, h = si_frames(fr_50, 3, rng)
    canc = SelfInterferenceCanceller(fr_50, "time", 8, pilot_set=PILOTS)
    assert clone(canc).get_params()["order"] == 8
    with pytest.raises(ValueError, match="training references"):
        canc.fit(y)
    canc = fitted(fr_50, "time", 8, h)
    out = canc.transform(y, x)
    assert out.shape == (3, 64)
    assert np.mean(np.abs(out) ** 2) < 1e-3 * np.mean(np.abs(y) ** 2)
    with pytest.raises(ValueError):
        canc.transform(y)
    np.testing.assert_allclose(canc.transform(y, x), y - canc.reconstruct(y, x))


def test_fit_from_training(fr_50, rng):
    cfg = FrameConfig()
    xi = build_frame(cfg, seed=0, cover_row=0).training
    xs = build_frame(cfg, seed=1, cover_row=1).training
    h, g = cgauss(rng, 64), 0.01 * cgauss(rng, 64)
    canc = SelfInterferenceCanceller(fr_50, "frequency", 8, pilot_set=PILOTS).fit(xi * h + xs * g, xi, xs)
    np.testing.assert_allclose(canc.channel_si_.h_freq, h, atol=1e-12)
    assert canc.assumed_soi_power_ == pytest.approx(np.mean(np.abs(g) ** 2))
    assert canc.channel_si_.source == "training"


def test_cancel_op_costs(fr_50, rng):
    y, x, h = si_frames(fr_50, 1, rng)
    for domain, m, want in (("frequency", 16, 64 * 17), ("time", 16, 3 * 64)):
        c = OpCounter()
        fitted(fr_50, domain, m, h).reconstruct(y, x, c)
        assert c["cancel"] == want
