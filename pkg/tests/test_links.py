"""Catch-efficiency link tests: four-parameter logistic and I-spline forms."""

import numpy as np
import pytest

from siisdm.exceptions import ConfigurationError
from siisdm.links import (
    FourPLParams,
    SplineLinkParams,
    fourpl,
    fourpl_deriv,
    logistic_transform,
    spline_link,
)
from siisdm.splines import make_knots


def test_fourpl_midpoint():
    p = FourPLParams(5.0, 0.0, 0.0, 1.0)
    assert fourpl(0.0, p) == pytest.approx(2.5)


def test_fourpl_frozen_value():
    # 5 / (1 + exp(-kappa - 2)) - 1 at kappa = 0, hand-computed
    p = FourPLParams(5.0, -1.0, -2.0, 1.0)
    assert fourpl(0.0, p) == pytest.approx(3.4039853898894116, abs=1e-12)


def test_fourpl_asymptotes():
    p = FourPLParams(5.0, -1.0, 1.0, 1.0)
    assert fourpl(40.0, p) == pytest.approx(4.0, abs=1e-8)
    assert fourpl(-40.0, p) == pytest.approx(-1.0, abs=1e-8)


def test_fourpl_positivity_constraints():
    with pytest.raises(ConfigurationError):
        FourPLParams(-1.0, 0.0, 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        FourPLParams(1.0, 0.0, 0.0, 0.0)


def test_fourpl_strictly_monotone_property():
    rng = np.random.default_rng(5)
    for _ in range(200):
        p = FourPLParams(
            gamma1=float(rng.uniform(0.1, 10)),
            gamma2=float(rng.uniform(-5, 5)),
            gamma3=float(rng.uniform(-5, 5)),
            gamma4=float(rng.uniform(0.1, 5)),
        )
        k1, k2 = np.sort(rng.uniform(-10, 10, size=2))
        if k1 == k2:
            continue
        assert fourpl(k1, p) <= fourpl(k2, p)
        # strictness is only numerically visible outside deep saturation
        k1, k2 = np.sort(rng.uniform(-3, 3, size=2))
        if p.gamma4 <= 3 and k1 < k2:
            assert fourpl(k1, p) < fourpl(k2, p)


def test_fourpl_derivative_matches_fd():
    rng = np.random.default_rng(17)
    for _ in range(50):
        p = FourPLParams(
            gamma1=float(rng.uniform(0.5, 8)),
            gamma2=float(rng.uniform(-3, 3)),
            gamma3=float(rng.uniform(-3, 3)),
            gamma4=float(rng.uniform(0.2, 3)),
        )
        k = float(rng.uniform(-5, 5))
        h = 1e-6
        fd = (fourpl(k + h, p) - fourpl(k - h, p)) / (2 * h)
        assert fourpl_deriv(k, p) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_logistic_transform_range_and_errors():
    assert logistic_transform(0.0, 0.0, 1.0) == pytest.approx(0.5)
    assert 0 < logistic_transform(-30.0, 0.0, 1.0) < 1e-10
    with pytest.raises(ConfigurationError):
        logistic_transform(0.0, 0.0, -1.0)


def test_spline_link_zero_coefs_is_constant():
    cfg = make_knots(0.0, 1.0, 2, 7)
    p = SplineLinkParams(intercept_coef=3.0, basis_coefs=np.zeros(7), tau0=0.0, tau1=1.0)
    ks = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(spline_link(ks, p, cfg), np.full(11, 3.0), atol=1e-12)


def test_spline_link_monotone_and_bounded():
    rng = np.random.default_rng(23)
    cfg = make_knots(0.0, 1.0, 2, 7)
    for _ in range(50):
        p = SplineLinkParams(
            intercept_coef=float(rng.uniform(-2, 2)),
            basis_coefs=rng.uniform(0, 2, size=7),
            tau0=float(rng.uniform(-2, 2)),
            tau1=float(rng.uniform(0.2, 3)),
        )
        ks = np.linspace(-15, 15, 101)
        h = spline_link(ks, p, cfg)
        assert np.all(np.diff(h) >= -1e-10)
        # saturates at intercept and intercept + sum(coefs)
        lo, hi = spline_link(np.array([-250.0, 250.0]), p, cfg)
        assert lo == pytest.approx(p.intercept_coef, abs=1e-8)
        assert hi == pytest.approx(p.intercept_coef + p.basis_coefs.sum(), abs=1e-8)


def test_spline_link_param_constraints():
    with pytest.raises(ConfigurationError):
        SplineLinkParams(0.0, np.array([-0.1, 1.0]), 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        SplineLinkParams(0.0, np.ones(3), 0.0, 0.0)
