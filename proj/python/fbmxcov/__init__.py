"""Covariance of divergence integrals of fractional Brownian motion."""

from ._fbmxcov import (
    ConfigError,
    GFunction,
    NonConvergenceError,
    QuadratureError,
    SingularPointError,
    SpecParseError,
    __version__,
    brownian_limit_study,
    covariance_rh,
    cross_covariance,
    finiteness_check,
    gamma_kernel,
    integrand_at,
    m_kernel,
    mc_cross_covariance,
    not_fbm_test,
    p_kernel,
    run,
    sample_paths,
)

__all__ = [
    "ConfigError",
    "GFunction",
    "NonConvergenceError",
    "QuadratureError",
    "SingularPointError",
    "SpecParseError",
    "__version__",
    "brownian_limit_study",
    "covariance_rh",
    "cross_covariance",
    "finiteness_check",
    "gamma_kernel",
    "integrand_at",
    "m_kernel",
    "mc_cross_covariance",
    "not_fbm_test",
    "p_kernel",
    "run",
    "sample_paths",
]
