"""Monotone catch-efficiency maps from the shared index to survey log-means.

Two families: a four-parameter logistic curve, and an I-spline expansion of a
logistic squashing of the index.  Both are monotone non-decreasing in the
index by construction (strictly increasing for the logistic family).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .splines import SplineBasisConfig, _ispline_all


def _sigmoid(z, xp=np):
    # numerically stable in both branches; safe for numpy and jax backends
    pos = 1.0 / (1.0 + xp.exp(-xp.where(z >= 0, z, 0.0)))
    ez = xp.exp(xp.where(z < 0, z, 0.0))
    neg = ez / (1.0 + ez)
    return xp.where(z >= 0, pos, neg)


@dataclass(frozen=True)
class FourPLParams:
    """gamma1: span (> 0); gamma2: lower asymptote; gamma3: location;
    gamma4: rate (> 0)."""

    gamma1: float
    gamma2: float
    gamma3: float
    gamma4: float

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma4 <= 0:
            raise ConfigurationError("gamma1 and gamma4 must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma1, self.gamma2, self.gamma3, self.gamma4])


@dataclass(frozen=True)
class SplineLinkParams:
    """Intercept plus non-negative I-spline coefficients, with the location
    and scale of the logistic transform applied to the index first."""

    intercept_coef: float
    basis_coefs: np.ndarray
    tau0: float
    tau1: float

    def __post_init__(self):
        coefs = np.asarray(self.basis_coefs, dtype=float)
        if np.any(coefs < 0):
            raise ConfigurationError("basis_coefs must be non-negative")
        if self.tau1 <= 0:
            raise ConfigurationError("tau1 must be positive")
        object.__setattr__(self, "basis_coefs", coefs)


def fourpl(kappa, params: FourPLParams, xp=np):
    """gamma1 / (1 + exp(-gamma4*kappa + gamma3)) + gamma2."""
    z = params.gamma4 * xp.asarray(kappa) - params.gamma3
    return params.gamma1 * _sigmoid(z, xp=xp) + params.gamma2


def fourpl_deriv(kappa, params: FourPLParams):
    """Analytic d/dkappa of the four-parameter logistic."""
    s = _sigmoid(params.gamma4 * np.asarray(kappa) - params.gamma3)
    return params.gamma1 * params.gamma4 * s * (1.0 - s)


def logistic_transform(kappa, tau0: float, tau1: float, xp=np):
    """Squash the index into (0, 1): 1 / (1 + exp(-tau1*kappa + tau0))."""
    if tau1 <= 0:
        raise ConfigurationError("tau1 must be positive")
    return _sigmoid(tau1 * xp.asarray(kappa) - tau0, xp=xp)


def spline_link(kappa, params: SplineLinkParams, spline: SplineBasisConfig):
    """intercept + sum_v coef_v * I_v(G(kappa)); bounded and non-decreasing."""
    g = logistic_transform(kappa, params.tau0, params.tau1)
    vals = _ispline_all(np.asarray(g, dtype=float), spline)  # (V,) + shape
    coefs = params.basis_coefs.reshape((-1,) + (1,) * np.asarray(g).ndim)
    return params.intercept_coef + np.sum(coefs * vals, axis=0)
