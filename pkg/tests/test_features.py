"""Tests for feature library construction, parsing, and evaluation."""

import math
from pathlib import Path

import numpy as np
import pytest

from sindy_rl.features import (cartpole_library, combine_libraries,
                               evaluate_library, fourier_library,
                               library_from_name, mountain_car_library,
                               parse_custom_features, parse_expression,
                               pendulum_library, polynomial_library)

GOLDEN = Path(__file__).parent / "golden"


def test_polynomial_degree_one_with_bias():
    lib = polynomial_library(2, degree=1, include_bias=True)
    assert lib.names == ["1", "x0", "x1"]


def test_polynomial_degree_two_count():
    lib = polynomial_library(2, degree=2, include_bias=True)
    assert lib.size == 6
    assert set(lib.names) == {"1", "x0", "x1", "x0^2", "x0*x1", "x1^2"}


def test_polynomial_binomial_count():
    assert polynomial_library(4, degree=2, include_bias=True).size == 15


def test_fourier_three_harmonics():
    lib = fourier_library(2, target_indices=(0,), k_max=3)
    assert lib.size == 6


def test_fourier_single_harmonic_names_and_values():
    lib = fourier_library(1, target_indices=(0,), k_max=1)
    assert lib.names == ["sin(x0)", "cos(x0)"]
    values = evaluate_library(lib, np.array([[0.0]]), None)
    assert np.allclose(values, [[0.0, 1.0]])


def test_fourier_empty_index_list_rejected():
    with pytest.raises(ValueError):
        fourier_library(2, target_indices=(), k_max=1)


def test_cartpole_library_size_and_parameter_count():
    lib = cartpole_library()
    assert lib.size == 41
    assert 4 * lib.size == 164


def test_cartpole_library_matches_golden_name_list():
    expected = (GOLDEN / "cartpole_features.txt").read_text().splitlines()
    assert cartpole_library().names == expected


def test_cartpole_library_at_zero_state():
    lib = cartpole_library()
    values = evaluate_library(lib, np.zeros((1, 4)), np.zeros((1, 1)))[0]
    by_name = dict(zip(lib.names, values))
    assert by_name["1"] == 1.0
    nonzero = [name for name, v in by_name.items() if v != 0.0]
    assert nonzero == ["1"]


def test_mountain_car_library_parameter_count():
    assert 2 * mountain_car_library().size == 50


def test_pendulum_library_composition():
    lib = pendulum_library()
    assert lib.size == 12
    assert "sin(x0)" in lib.names and "cos(x0)" in lib.names


def test_evaluate_library_direct_example():
    lib = parse_custom_features(["1", "x0", "x0^2"], 1, 0)
    values = evaluate_library(lib, np.array([[2.0], [3.0]]), None)
    assert np.allclose(values, [[1.0, 2.0, 4.0], [1.0, 3.0, 9.0]])


def test_evaluate_library_matches_scalar_loop():
    rng = np.random.default_rng(0)
    lib = cartpole_library()
    states = rng.normal(size=(20, 4))
    actions = rng.normal(size=(20, 1))
    fast = evaluate_library(lib, states, actions)
    inputs = np.hstack([states, actions])
    slow = np.array([[f(inputs[t]) for f in lib.functions] for t in range(20)])
    assert np.max(np.abs(fast - slow)) < 1e-12


def test_evaluate_library_nonfinite_value_reported():
    lib = parse_custom_features(["1/x0"], 1, 0)
    with pytest.raises(ValueError, match="1/x0"):
        evaluate_library(lib, np.array([[0.0]]), None)


def test_parse_custom_feature_examples():
    lib = parse_custom_features(["x1", "sin(3*x0)", "x0^2*x1"], 2, 0)
    point = np.array([[math.pi / 6.0, 5.0]])
    values = evaluate_library(lib, point, None)[0]
    assert values[0] == pytest.approx(5.0)
    assert values[1] == pytest.approx(1.0)
    point2 = np.array([[2.0, 5.0]])
    assert evaluate_library(lib, point2, None)[0][2] == pytest.approx(20.0)


def test_parse_rejects_bad_expressions():
    with pytest.raises(ValueError):
        parse_expression("x0 +", 2)
    with pytest.raises(ValueError):
        parse_expression("tan(x0)", 2)
    with pytest.raises(ValueError):
        parse_expression("x5", 2)


def test_builtin_names_round_trip_through_parser():
    """Re-parsing every built-in library's printed names reproduces it."""
    rng = np.random.default_rng(1)
    for name in ("cartpole", "mountain_car", "pendulum", "inverted_pendulum"):
        lib = library_from_name(name)
        reparsed = parse_custom_features(lib.names, lib.input_dim - 1, 1)
        points = rng.uniform(-2.0, 2.0, size=(1000, lib.input_dim))
        original = evaluate_library(lib, points[:, :-1], points[:, -1:])
        again = evaluate_library(reparsed, points[:, :-1], points[:, -1:])
        assert np.max(np.abs(original - again)) <= 1e-12


def test_construction_order_is_stable():
    assert polynomial_library(3, degree=2).names == polynomial_library(3, degree=2).names
    assert cartpole_library().names == cartpole_library().names


def test_combine_libraries_preserves_order_and_rejects_duplicates():
    poly = polynomial_library(2, degree=1, include_bias=False)
    fourier = fourier_library(2, target_indices=(0,), k_max=1)
    combined = combine_libraries(poly, fourier)
    assert combined.names == poly.names + fourier.names
    with pytest.raises(ValueError):
        combine_libraries(poly, poly)


def test_empty_action_matrix_supported():
    lib = parse_custom_features(["x0", "x1"], 2, 0)
    values = evaluate_library(lib, np.array([[1.0, 2.0]]), np.zeros((1, 0)))
    assert np.allclose(values, [[1.0, 2.0]])
