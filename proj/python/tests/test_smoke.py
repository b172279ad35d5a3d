import json
import math

import numpy as np
import pytest

import hjmcal

THETA = [0.35, 0.65, 8.5, 34.45, -1.25, 0.7, 4.75]


def test_degenerate_volatility_gives_intrinsic_value():
    theta = [0.0, 0.65, 8.5, 32.0, 0.0, 0.0, 4.75]
    assert hjmcal.call_price(theta, 31.6, 0.5) == pytest.approx(0.4, abs=1e-12)


def test_closed_form_variance_matches_quadrature():
    closed = hjmcal.sigma_sq(THETA, 0.0, 0.5)
    quad = hjmcal.sigma_sq_quad(THETA, 0.0, 0.5)
    assert closed > 0
    assert abs(closed - quad) <= 1e-6 * max(1.0, abs(closed))


def test_price_grid_shape_and_monotonicity():
    grid = np.asarray(hjmcal.price_grid(THETA))
    assert grid.shape == (7, 9)
    assert np.all(np.diff(grid, axis=1) < 0)


def test_sample_theta_inside_box():
    lo = np.array([0.2, 0.5, 8.0, 34.2, -1.5, 0.2, 4.5])
    hi = np.array([0.5, 0.8, 9.0, 34.7, -1.0, 1.2, 5.0])
    draws = np.asarray(hjmcal.sample_theta(50, 0, 3))
    assert draws.shape == (50, 7)
    assert np.all(draws >= lo) and np.all(draws <= hi)
    assert np.array_equal(draws, np.asarray(hjmcal.sample_theta(50, 0, 3)))


def test_cluster_assign_corners():
    assert hjmcal.cluster_assign(1 / 12, 31.6) == (0, 0)
    assert hjmcal.cluster_assign(1.0, 33.2) == (6, 8)


def test_network_round_trip():
    net = hjmcal.grid_network(4)
    assert net.parameter_count == 4053
    assert hjmcal.parameter_count([9, 30, 30, 30, 1]) == 2191
    copy = hjmcal.Network.from_json(net.to_json())
    x = np.array(THETA)
    np.testing.assert_array_equal(net.forward(x), copy.forward(x))
    assert json.loads(net.to_json())["dims"] == [7, 30, 30, 30, 63]


def test_bidask_bands():
    grid = np.asarray(hjmcal.price_grid(THETA))
    bid, ask = hjmcal.make_bidask(grid, 0.9, 1.1)
    np.testing.assert_allclose(bid, 0.9 * grid)
    np.testing.assert_allclose(ask, 1.1 * grid)


def test_linear_embed_suite_passes():
    assert hjmcal.verify("linear-embed", 1) == {"linear-embed": True}
    assert math.isfinite(hjmcal.covariance_kernel(8.5, 0.3))
