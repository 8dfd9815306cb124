import math

import numpy as np
import pytest

from dlczsim import (DecayParams, DegenerateDataError, EnsembleGeometry,
                     FitConvergenceError, ParameterError, fit_decay,
                     motional_lifetime, retrieval_decay)

MEASURED_DECAY = DecayParams(r0=0.77, tau0=1e-3)
# The three efficiency/storage-time points quoted for the measured decay
REPORTED_POINTS = [(0.0, 0.77), (0.23e-3, 0.667), (0.54e-3, 0.50)]


def test_decay_zero_delay_is_r0():
    assert retrieval_decay(MEASURED_DECAY, 0.0) == 0.77
    assert retrieval_decay(DecayParams(0.31, 7e-3), 0.0) == 0.31


def test_decay_direct_evaluations():
    assert retrieval_decay(MEASURED_DECAY, 0.23e-3) == pytest.approx(
        0.6710582562256414, rel=1e-12)
    assert retrieval_decay(MEASURED_DECAY, 0.54e-3) == pytest.approx(
        0.5119789888718064, rel=1e-12)
    # quoted rounded values sit within 0.02 of the model
    assert abs(retrieval_decay(MEASURED_DECAY, 0.23e-3) - 0.667) < 0.02
    assert abs(retrieval_decay(MEASURED_DECAY, 0.54e-3) - 0.50) < 0.02


def test_decay_one_over_e_point():
    # both exponentials equal 1/e at t = tau0
    assert retrieval_decay(MEASURED_DECAY, 1e-3) == pytest.approx(
        0.77 / math.e, rel=1e-12)


def test_decay_bounded_by_r0():
    t = np.linspace(0.0, 10e-3, 200)
    r = retrieval_decay(MEASURED_DECAY, t)
    assert np.all(r <= 0.77)
    assert np.all(np.diff(r) < 0)  # strictly decreasing


def test_decay_domain_errors():
    with pytest.raises(ParameterError):
        retrieval_decay(MEASURED_DECAY, -1e-6)
    with pytest.raises(ParameterError):
        DecayParams(0.77, 0.0)
    with pytest.raises(ParameterError):
        DecayParams(1.2, 1e-3)


LAB_GEOMETRY = EnsembleGeometry(wavelength=795e-9, temperature=100e-6,
                                  atomic_mass=87 * 1.66053906660e-27,
                                  bd_separation=5.5e-3, f_btd=2.0, f0=1.5)


def test_motional_lifetime_reported_value():
    assert motional_lifetime(LAB_GEOMETRY) == pytest.approx(1.4e-3,
                                                              abs=1e-4)


def test_motional_lifetime_halves_with_doubled_angle():
    doubled = EnsembleGeometry(795e-9, 100e-6, 87 * 1.66053906660e-27,
                               11e-3, 2.0, 1.5)
    tau = motional_lifetime(doubled)
    assert tau == pytest.approx(0.70e-3, abs=1e-5)
    assert tau == pytest.approx(motional_lifetime(LAB_GEOMETRY) / 2,
                                rel=1e-6)


def test_motional_lifetime_temperature_angle_scaling():
    # T -> 4T doubles the thermal speed, theta -> theta/2 halves |dk|
    scaled = EnsembleGeometry(795e-9, 400e-6, 87 * 1.66053906660e-27,
                              5.5e-3 / 2, 2.0, 1.5)
    assert motional_lifetime(scaled) == pytest.approx(
        motional_lifetime(LAB_GEOMETRY), rel=1e-6)


def _model_samples(r0, tau0, times):
    p = DecayParams(r0, tau0)
    return [(t, retrieval_decay(p, t)) for t in times]


def test_fit_recovers_exact_synthetic_data():
    samples = _model_samples(0.5, 2e-3, np.linspace(0.0, 6e-3, 12))
    fitted, residual = fit_decay(samples)
    assert fitted.r0 == pytest.approx(0.5, rel=1e-6)
    assert fitted.tau0 == pytest.approx(2e-3, rel=1e-6)
    assert residual < 1e-12


def test_fit_operating_points():
    fitted, _ = fit_decay(REPORTED_POINTS)
    assert fitted.r0 == pytest.approx(0.77, abs=0.03)
    assert fitted.tau0 == pytest.approx(1.0e-3, abs=0.15e-3)


def test_fit_noisy_synthetic_data():
    rng = np.random.default_rng(1234)
    truth = DecayParams(0.77, 1e-3)
    times = np.linspace(0.0, 3e-3, 20)
    clean = retrieval_decay(truth, times)
    noisy = clean * (1.0 + 0.01 * rng.standard_normal(times.size))
    fitted, _ = fit_decay(list(zip(times, noisy)))
    assert fitted.r0 == pytest.approx(truth.r0, rel=0.03)
    assert fitted.tau0 == pytest.approx(truth.tau0, rel=0.03)


def test_fit_weighted_downweights_outlier():
    times = np.linspace(0.0, 4e-3, 10)
    samples = [(t, retrieval_decay(DecayParams(0.6, 1.5e-3), t), 0.005)
               for t in times]
    t_out, r_out, _ = samples[5]
    samples[5] = (t_out, r_out + 0.3, 1e3)  # huge sigma: ignored
    fitted, _ = fit_decay(samples)
    assert fitted.r0 == pytest.approx(0.6, rel=1e-4)
    assert fitted.tau0 == pytest.approx(1.5e-3, rel=1e-4)


def test_fit_idempotent_on_its_own_curve():
    fitted, _ = fit_decay(REPORTED_POINTS)
    resampled = _model_samples(fitted.r0, fitted.tau0,
                               [t for t, _ in REPORTED_POINTS])
    refit, _ = fit_decay(resampled)
    assert refit.r0 == pytest.approx(fitted.r0, rel=1e-9, abs=1e-9)
    assert refit.tau0 == pytest.approx(fitted.tau0, rel=1e-9)


def test_fit_input_validation():
    with pytest.raises(ParameterError):
        fit_decay([(0.0, 0.7), (1e-3, 0.5)])  # too few points
    with pytest.raises(DegenerateDataError):
        fit_decay([(1e-3, 0.7), (1e-3, 0.6), (1e-3, 0.5)])
    with pytest.raises(ParameterError):
        fit_decay([(0.0, 0.7, 0.0), (1e-3, 0.5, 0.01), (2e-3, 0.3, 0.01)])
    with pytest.raises(ParameterError):
        fit_decay([(0.0, 0.7, 0.01), (1e-3, 0.5), (2e-3, 0.3, 0.01)])


def test_fit_iteration_budget():
    samples = _model_samples(0.5, 2e-3, np.linspace(0.0, 6e-3, 12))
    with pytest.raises(FitConvergenceError):
        fit_decay(samples, max_iter=1)
