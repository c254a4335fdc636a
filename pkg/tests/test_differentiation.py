"""Tests for the numerical differentiation helpers."""

import numpy as np
import pytest

from sindy_rl.differentiation import central_difference, smoothed_finite_difference


def test_smoothed_constant_sequence_is_zero():
    states = np.full((20, 1), 5.0)
    estimate = smoothed_finite_difference(states, dt=0.3, window=7, poly_order=3)
    assert np.max(np.abs(estimate.values)) < 1e-12


def test_smoothed_linear_ramp():
    t = np.arange(30) * 0.1
    estimate = smoothed_finite_difference((2.0 * t)[:, None], dt=0.1,
                                          window=7, poly_order=3)
    valid = estimate.values[estimate.valid_slice]
    assert np.max(np.abs(valid - 2.0)) < 1e-10


def test_smoothed_sine_matches_cosine():
    t = np.arange(200) * 0.02
    estimate = smoothed_finite_difference(np.sin(t)[:, None], dt=0.02,
                                          window=7, poly_order=3)
    valid = estimate.values[estimate.valid_slice]
    truth = np.cos(t)[estimate.valid_slice]
    assert np.max(np.abs(valid[:, 0] - truth)) <= 1e-4


def test_smoothed_polynomial_exactness():
    """Exact on polynomials up to the fitting order."""
    t = np.arange(50) * 0.05
    for degree in (1, 2, 3):
        signal = t**degree
        estimate = smoothed_finite_difference(signal[:, None], dt=0.05,
                                              window=7, poly_order=3)
        truth = degree * t ** (degree - 1)
        valid = estimate.valid_slice
        assert np.max(np.abs(estimate.values[valid, 0] - truth[valid])) <= 1e-9


def test_smoothed_linearity():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 2))
    y = rng.normal(size=(40, 2))
    a, b = 1.7, -0.4
    combined = smoothed_finite_difference(a * x + b * y, dt=0.1, window=7, poly_order=3)
    separate = (a * smoothed_finite_difference(x, dt=0.1, window=7, poly_order=3).values
                + b * smoothed_finite_difference(y, dt=0.1, window=7, poly_order=3).values)
    assert np.max(np.abs(combined.values - separate)) < 1e-10


def test_smoothed_validation_errors():
    with pytest.raises(ValueError):
        smoothed_finite_difference(np.zeros((4, 1)), dt=0.1, window=7, poly_order=3)
    with pytest.raises(ValueError):
        smoothed_finite_difference(np.zeros((20, 1)), dt=-0.1, window=7, poly_order=3)


def test_central_difference_linear():
    estimate = central_difference(np.array([0.0, 1.0, 2.0])[:, None], dt=1.0)
    assert np.allclose(estimate.values[:, 0], [1.0, 1.0, 1.0])


def test_central_difference_exact_on_quadratics():
    t = np.arange(20) * 0.5
    estimate = central_difference((t**2)[:, None], dt=0.5)
    interior = slice(1, -1)
    assert np.max(np.abs(estimate.values[interior, 0] - 2.0 * t[interior])) < 1e-10


def test_central_difference_truncation_order():
    t = np.arange(100) * 0.01
    estimate = central_difference(np.sin(t)[:, None], dt=0.01)
    interior = slice(1, -1)
    error = np.max(np.abs(estimate.values[interior, 0] - np.cos(t)[interior]))
    assert error <= 0.01**2


def test_central_difference_halving_dt_reduces_error():
    def interior_error(dt):
        t = np.arange(int(2.0 / dt)) * dt
        estimate = central_difference(np.sin(t)[:, None], dt=dt)
        return np.max(np.abs(estimate.values[1:-1, 0] - np.cos(t)[1:-1]))

    assert interior_error(0.02) / interior_error(0.01) >= 3.5


def test_central_difference_length_error():
    with pytest.raises(ValueError):
        central_difference(np.zeros((2, 1)), dt=0.1)
