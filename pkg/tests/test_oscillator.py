import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdpnsim.oscillator import (
    CalibrationError,
    OscillatorKind,
    OscillatorModel,
    PhaseNoiseTrace,
    PhaseSpectrum,
    autocorrelation,
    autocorrelation_terms,
    calibrate_to_ici_target,
    combined_model,
    correlation_matrix_freq,
    correlation_matrix_time,
    default_pll,
    generate,
    generate_free_running,
    generate_pll,
    residual_ici_power,
    total_ici_power,
)

from conftest import model_with_sigma2

QUIET = OscillatorModel.free_running(0.0)


def mc_autocorr(phases, lag):
    return np.mean(np.exp(1j * (phases[:, lag] - phases[:, 0]))).real


# --- generators -------------------------------------------------------------


def test_zero_c_gives_zero_phase():
    tr = generate_free_running(QUIET, 100, seed=1)
    assert np.all(tr.phases == 0)
    np.testing.assert_array_equal(tr.complex_form, np.ones(100))


def test_free_running_starts_at_zero_and_is_seeded():
    m = model_with_sigma2(0.01)
    a = generate_free_running(m, 50, seed=7)
    b = generate_free_running(m, 50, seed=7)
    assert a.phases[0] == 0
    np.testing.assert_array_equal(a.phases, b.phases)


def test_free_running_increment_variance():
    m = model_with_sigma2(0.02)
    ph = generate_free_running(m, 2000, seed=3, n_paths=200).phases
    assert np.var(np.diff(ph, axis=1)) == pytest.approx(0.02, rel=0.02)


def test_free_running_lag10_monte_carlo():
    m = model_with_sigma2(0.02)
    ph = generate_free_running(m, 11, seed=11, n_paths=100_000).phases
    assert mc_autocorr(ph, 10) == pytest.approx(np.exp(-0.1), abs=0.003)
    assert autocorrelation(m, 10) == pytest.approx(np.exp(-0.1), rel=1e-12)


def test_generators_reject_wrong_kind(pll_40, fr_50):
    with pytest.raises(ValueError):
        generate_free_running(pll_40, 10)
    with pytest.raises(ValueError):
        generate_pll(fr_50, 10)


def test_pll_without_noise_is_flat():
    m = OscillatorModel.pll([(0.0, 0.0, 1e6)])
    assert np.all(generate_pll(m, 64, seed=0).phases == 0)


def test_pll_rejects_negative_weight():
    with pytest.raises(ValueError):
        OscillatorModel.pll([(-1e-20, 0.0, 1e6)])


def test_pll_stationary_variance():
    m = default_pll(64).scaled(0.15)
    comp = m.pll_components[0]
    ph = generate_pll(m, 256, seed=5, n_paths=4000).phases
    want = m.phase_scale * comp.weight
    assert np.var(ph[:, 0]) == pytest.approx(want, rel=0.06)
    assert np.var(ph[:, -1]) == pytest.approx(want, rel=0.06)


@pytest.mark.parametrize("lag", [1, 8, 64])
def test_pll_autocorrelation_monte_carlo(lag):
    m = default_pll(64, half_lag=8).scaled(0.15)  # stationary variance ~0.34 rad^2
    ph = generate_pll(m, lag + 1, seed=lag, n_paths=100_000).phases
    assert mc_autocorr(ph, lag) == pytest.approx(autocorrelation(m, lag), rel=0.005)


def test_pll_fast_loop_limit():
    m = OscillatorModel.pll([(2e-21, 1e-21, 1e15)], c_param=1e-19)
    s = m.phase_scale
    want = np.exp(-0.5 * s * (m.c_param * m.sample_interval_s + 2 * 3e-21))
    assert autocorrelation(m, 1) == pytest.approx(want, rel=1e-12)


def test_trace_invariants():
    tr = generate(model_with_sigma2(0.5), 300, seed=2)
    np.testing.assert_allclose(np.abs(tr.complex_form), 1.0, atol=1e-12)
    np.testing.assert_allclose(tr.complex_form, np.exp(1j * tr.phases))
    both = tr + tr
    np.testing.assert_allclose(both.phases, 2 * tr.phases)
    assert len(tr.segment(10, 20)) == 10


# --- closed-form statistics ---------------------------------------------------


def test_autocorrelation_basics(pll_40, fr_50):
    for m in (pll_40, fr_50):
        assert autocorrelation(m, 0) == 1.0
        lags = np.arange(-40, 41)
        r = autocorrelation(m, lags)
        np.testing.assert_array_equal(r, r[::-1])
        assert np.all((r > 0) & (r <= 1))
    r = autocorrelation(fr_50, np.arange(200))
    assert np.all(np.diff(r) < 0)


@given(sigma2=st.floats(1e-8, 1.0), lag=st.integers(-500, 500))
def test_autocorrelation_free_running_form(sigma2, lag):
    m = model_with_sigma2(sigma2)
    assert autocorrelation(m, lag) == pytest.approx(np.exp(-sigma2 * abs(lag) / 2), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(half_lag=st.floats(0.5, 64), log_var=st.floats(-12, 1), drift=st.floats(0.0, 0.8))
def test_exponential_terms_reproduce_autocorrelation(half_lag, log_var, drift):
    # stationary phase variance from 1e-12 to 10 rad^2
    m = default_pll(64, half_lag=half_lag, drift_fraction=drift)
    m = m.scaled(10.0**log_var / (m.phase_scale * m.pll_components[0].weight))
    w, b = autocorrelation_terms(m)
    d = np.arange(0, 130)
    approx = (w[None, :] * b[None, :] ** d[:, None]).sum(axis=1)
    np.testing.assert_allclose(approx, autocorrelation(m, d), rtol=1e-11, atol=1e-14)


def test_exponential_terms_refuse_huge_variance():
    m = default_pll(64).scaled(1e5)
    with pytest.raises(ValueError, match="series terms"):
        autocorrelation_terms(m)


def test_time_correlation_matrix(fr_50):
    m = model_with_sigma2(0.02)
    r = correlation_matrix_time(m, [0, 10])
    assert r[0, 1] == pytest.approx(np.exp(-0.1))
    np.testing.assert_array_equal(np.diag(r), 1.0)
    np.testing.assert_array_equal(correlation_matrix_time(QUIET, [0, 3, 9]), np.ones((3, 3)))
    big = correlation_matrix_time(fr_50, np.arange(0, 64, 3))
    assert np.isrealobj(big)
    np.testing.assert_array_equal(big, big.T)
    assert np.linalg.eigvalsh(big).min() > -1e-10
    with pytest.raises(ValueError):
        correlation_matrix_time(fr_50, [1, 1])


def test_freq_matrix_zero_noise():
    r = correlation_matrix_freq(QUIET, 16)
    want = np.zeros((16, 16))
    want[0, 0] = 1
    np.testing.assert_allclose(r, want, atol=1e-15)


@pytest.mark.parametrize("n", [8, 64, 256])
def test_parseval_trace(n, pll_40):
    for m in (model_with_sigma2(0.3), pll_40, model_with_sigma2(1e-9)):
        assert np.trace(correlation_matrix_freq(m, n)).real == pytest.approx(1.0, abs=1e-9)


def test_freq_matrix_hermitian_psd(pll_40, fr_50):
    for m in (pll_40, fr_50, model_with_sigma2(0.1)):
        r = correlation_matrix_freq(m, 32)
        np.testing.assert_allclose(r, r.conj().T, atol=1e-15)
        assert np.linalg.eigvalsh(r).min() > -1e-10


def test_freq_matrix_matches_monte_carlo():
    m = model_with_sigma2(0.01)
    ph = generate_free_running(m, 8, seed=8, n_paths=100_000).phases
    spec = np.fft.fft(np.exp(1j * ph), axis=1) / 8
    emp = np.mean(np.abs(spec) ** 2, axis=0)
    np.testing.assert_allclose(emp, np.diag(correlation_matrix_freq(m, 8)).real, rtol=0.01)


def test_freq_matrix_index_subset(fr_50):
    full = correlation_matrix_freq(fr_50, 16)
    sub = correlation_matrix_freq(fr_50, 16, [2, -1, 8])
    np.testing.assert_allclose(sub, full[np.ix_([2, 15, 8], [2, 15, 8])])
    with pytest.raises(ValueError):
        correlation_matrix_freq(fr_50, 16, [-8])


def test_phase_spectrum_parseval():
    tr = generate(model_with_sigma2(0.2), 64, seed=4)
    spec = PhaseSpectrum.from_trace(tr)
    assert np.sum(np.abs(spec.coefficients) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert PhaseSpectrum.from_trace(PhaseNoiseTrace(np.zeros(8))).coefficients[0] == pytest.approx(1.0)


# --- ICI power and calibration ------------------------------------------------


def test_residual_ici(fr_50):
    r = correlation_matrix_freq(fr_50, 64)
    assert residual_ici_power(r, 0) == pytest.approx(1 - r[0, 0].real, rel=1e-9)
    assert residual_ici_power(r, 0) == pytest.approx(total_ici_power(fr_50, 64), rel=1e-8)
    vals = [residual_ici_power(r, m) for m in range(0, 65, 2)]
    assert np.all(np.diff(vals) <= 1e-18)
    assert vals[-1] == 0.0
    assert residual_ici_power(np.diag(r), 8) == pytest.approx(residual_ici_power(r, 8))
    with pytest.raises(ValueError):
        residual_ici_power(r, 3)


@pytest.mark.parametrize("target", [-50.0, -40.0])
@pytest.mark.parametrize("template", [OscillatorModel.free_running(1e-18), default_pll(64)])
def test_calibration_hits_target(target, template):
    m = calibrate_to_ici_target(template, target, 64)
    got = residual_ici_power(correlation_matrix_freq(m, 64), 0)
    assert 10 * np.log10(got) == pytest.approx(target, abs=0.05)
    assert m.kind == template.kind


def test_calibration_errors():
    assert total_ici_power(OscillatorModel.free_running(1e-18).scaled(0.0), 64) == 0.0
    with pytest.raises(CalibrationError, match="bracket"):
        calibrate_to_ici_target(OscillatorModel.free_running(1e-18), -1e-6, 64, bounds=(-3, 0))
    with pytest.raises(CalibrationError):
        calibrate_to_ici_target(QUIET, -50, 64)
    with pytest.raises(ValueError):
        calibrate_to_ici_target(OscillatorModel.free_running(1e-18), 3.0, 64)


def test_pll_spectrum_is_flatter(pll_40):
    fr = calibrate_to_ici_target(OscillatorModel.free_running(1e-18), -40.0, 64)
    d_fr = np.diag(correlation_matrix_freq(fr, 64)).real
    d_pll = np.diag(correlation_matrix_freq(pll_40, 64)).real
    assert d_fr[1] > d_pll[1]
    assert d_pll[32] > d_fr[32]


def test_combined_model_adds_structure(fr_50, pll_40):
    both = combined_model(fr_50, pll_40)
    assert both.kind is OscillatorKind.PLL
    lag = np.arange(20)
    np.testing.assert_allclose(both.phase_structure(lag), fr_50.phase_structure(lag) + pll_40.phase_structure(lag))
    np.testing.assert_allclose(combined_model(fr_50, fr_50).phase_structure(lag), fr_50.scaled(2).phase_structure(lag))
