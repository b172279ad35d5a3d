"""Python bindings for the hjmcal C++ library."""

from ._core import (
    ModelParams,
    Network,
    call_price,
    cluster_assign,
    covariance_kernel,
    grid_network,
    make_bidask,
    mu_drift,
    parameter_count,
    pointwise_network,
    price_grid,
    sample_theta,
    sigma_sq,
    sigma_sq_quad,
    verify,
    xi_sq,
)

__all__ = [
    "ModelParams",
    "Network",
    "call_price",
    "cluster_assign",
    "covariance_kernel",
    "grid_network",
    "make_bidask",
    "mu_drift",
    "parameter_count",
    "pointwise_network",
    "price_grid",
    "sample_theta",
    "sigma_sq",
    "sigma_sq_quad",
    "verify",
    "xi_sq",
]
