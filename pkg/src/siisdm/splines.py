"""Monotone spline bases: M-splines and their integrated I-spline counterparts.

The basis is built on a knot vector with (k+2)-fold repeated boundary knots
and equally spaced interior knots.  ``ispline_basis`` returns V components,
each non-decreasing on [L, U] with value 0 at L and 1 at U, so non-negative
coefficients yield a monotone non-decreasing curve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class SplineBasisConfig:
    """Knot layout for a family of V I-splines of degree k on [lower, upper]."""

    degree: int
    count: int
    lower: float
    upper: float
    knots: np.ndarray = field(repr=False)

    def __post_init__(self):
        k, V = self.degree, self.count
        kn = np.asarray(self.knots, dtype=float)
        if kn.shape != (V + k + 3,):
            raise ConfigurationError(
                f"knot vector must have length V+k+3={V + k + 3}, got {kn.shape}"
            )
        if np.any(np.diff(kn) < 0):
            raise ConfigurationError("knots must be non-decreasing")
        if not (np.all(kn[: k + 2] == self.lower) and np.all(kn[V + 1 :] == self.upper)):
            raise ConfigurationError("boundary knots must repeat k+2 times at each end")
        interior = kn[k + 2 : V + 1]
        if interior.size and np.any(np.diff(interior) <= 0):
            raise ConfigurationError("interior knots must be strictly increasing")
        object.__setattr__(self, "knots", kn)

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "count": self.count,
            "lower": self.lower,
            "upper": self.upper,
        }


def make_knots(lower: float, upper: float, degree: int, count: int) -> SplineBasisConfig:
    """Build the knot vector: (k+2)-fold boundary knots, equally spaced interior.

    Requires count >= degree + 1 so the interior knot count (V - k - 1) is
    non-negative.
    """
    if not lower < upper:
        raise ConfigurationError(f"need lower < upper, got [{lower}, {upper}]")
    if degree < 0:
        raise ConfigurationError("degree must be >= 0")
    if count < degree + 1:
        raise ConfigurationError(
            f"count={count} too small for degree={degree} (need count >= degree+1)"
        )
    n_interior = count - degree - 1
    interior = np.linspace(lower, upper, n_interior + 2)[1:-1]
    knots = np.concatenate(
        [np.full(degree + 2, float(lower)), interior, np.full(degree + 2, float(upper))]
    )
    return SplineBasisConfig(degree=degree, count=count, lower=float(lower),
                             upper=float(upper), knots=knots)


def _mspline_all(x, knots, order, xp=np):
    """All M-splines of the given order, stacked along the first axis.

    Returns an array of shape (len(knots) - order,) + x.shape.  Works with
    numpy or jax.numpy as ``xp`` (x may be a traced array; knots are concrete).

    Base case: M_1,i = 1/(v_{i+1}-v_i) on [v_i, v_{i+1}), 0 elsewhere; repeated
    knots give an empty interval and a zero function.  The last non-degenerate
    interval is closed on the right so the upper boundary is covered.
    """
    knots = np.asarray(knots, dtype=float)
    n = len(knots)
    upper = knots[-1]
    x = xp.asarray(x)

    widths = knots[1:] - knots[:-1]
    ms = []
    for i in range(n - 1):
        if widths[i] <= 0.0:
            ms.append(xp.zeros_like(x))
            continue
        in_half_open = (x >= knots[i]) & (x < knots[i + 1])
        closes_domain = knots[i + 1] == upper
        inside = in_half_open | (closes_domain & (x == knots[i + 1]))
        ms.append(xp.where(inside, 1.0 / widths[i], 0.0))
    m_prev = xp.stack(ms)

    for j in range(1, order):
        rows = []
        for i in range(n - j - 1):
            span = knots[i + j + 1] - knots[i]
            if span <= 0.0:
                rows.append(xp.zeros_like(x))
                continue
            coef = (j + 1) / (j * span)
            rows.append(coef * ((x - knots[i]) * m_prev[i]
                                + (knots[i + j + 1] - x) * m_prev[i + 1]))
        m_prev = xp.stack(rows)
    return m_prev


def mspline(x, config: SplineBasisConfig, order: int, index: int):
    """Evaluate M_{order, index} (index is 1-based, as in the recursion)."""
    n_bases = len(config.knots) - order
    if not 1 <= order <= config.degree + 2:
        raise ConfigurationError(f"order must be in 1..{config.degree + 2}")
    if not 1 <= index <= n_bases:
        raise ConfigurationError(f"index must be in 1..{n_bases} for order {order}")
    vals = _mspline_all(np.asarray(x, dtype=float), config.knots, order)
    return vals[index - 1]


def _ispline_all(x, config: SplineBasisConfig, xp=np):
    """I-spline values, shape (V,) + x.shape.  x must already lie in [L, U]."""
    k, V = config.degree, config.count
    knots = config.knots
    m_top = _mspline_all(x, knots, k + 2, xp=xp)  # V+1 splines of order k+2
    w = (knots[k + 2 :] - knots[: V + 1]) / (k + 2.0)
    weighted = w.reshape((-1,) + (1,) * (xp.asarray(x).ndim)) * m_top
    # I_b = sum_{l >= b+1} w_l M_l  (0-based b)
    tail = xp.cumsum(weighted[::-1], axis=0)[::-1]
    return tail[1:]


def ispline_basis(x, config: SplineBasisConfig, warn_on_clamp: bool = True):
    """Evaluate the V I-spline basis functions at x.

    x outside [lower, upper] is clamped to the boundary (the basis saturates
    at 0/1 there), with a warning unless suppressed.
    """
    x = np.asarray(x, dtype=float)
    out_of_range = (x < config.lower) | (x > config.upper)
    if np.any(out_of_range):
        if warn_on_clamp:
            warnings.warn(
                f"{int(np.sum(out_of_range))} evaluation point(s) outside "
                f"[{config.lower}, {config.upper}] clamped to the boundary",
                stacklevel=2,
            )
        x = np.clip(x, config.lower, config.upper)
    vals = _ispline_all(x, config)
    # components along the last axis for array input, flat vector for scalars
    return np.moveaxis(vals, 0, -1)
