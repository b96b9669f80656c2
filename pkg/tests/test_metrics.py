"""Predictive score tests against hand-enumerated and integral oracles."""

import numpy as np
import pytest

from siisdm.exceptions import ConfigurationError
from siisdm.metrics import (
    ScoreReport,
    crps_sample,
    interval_score,
    rmspe,
    score_draws,
    scrps_sample,
)


def crps_integral_oracle(truth, draws):
    """Exact CRPS of the empirical CDF: integral of (F(z) - 1{z >= y})^2."""
    x = np.sort(np.asarray(draws, dtype=float))
    breaks = np.unique(np.concatenate([x, [truth]]))
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        mid = 0.5 * (a + b)
        F = np.mean(x <= mid)
        ind = 1.0 if mid >= truth else 0.0
        total += (F - ind) ** 2 * (b - a)
    return total


def test_crps_two_point_oracle():
    # draws {0, 2}, truth 0: mean|y-X| = 1, mean|X-X'| = 1 -> 1 - 0.5 = 0.5
    assert crps_sample(0.0, [0.0, 2.0]) == pytest.approx(0.5, abs=1e-14)


def test_scrps_two_point_oracle():
    # -1/1 - 0.5*log(1) = -1
    assert scrps_sample(0.0, [0.0, 2.0]) == pytest.approx(-1.0, abs=1e-14)


def test_scrps_scale_shift():
    rng = np.random.default_rng(8)
    draws = rng.gamma(2.0, 3.0, size=200)
    y = 4.0
    base = scrps_sample(y, draws)
    for c in (2.0, 10.0, 0.5):
        scaled = scrps_sample(c * y, c * draws)
        assert scaled == pytest.approx(base - 0.5 * np.log(c), abs=1e-10)


def test_scrps_undefined_when_degenerate():
    assert np.isnan(scrps_sample(1.0, np.full(20, 3.0)))
    out = score_draws(np.full((20, 2), 3.0), np.array([3.0, 4.0]), trim_fraction=0.0)
    assert out["scrps_undefined"] == 2
    assert np.isnan(out["scrps"])


def test_crps_matches_pairwise_bruteforce():
    rng = np.random.default_rng(21)
    for _ in range(20):
        x = rng.normal(size=int(rng.integers(2, 40)))
        y = float(rng.normal())
        brute = np.mean(np.abs(x - y)) - 0.5 * np.mean(
            np.abs(x[:, None] - x[None, :])
        )
        assert crps_sample(y, x) == pytest.approx(brute, abs=1e-12)


def test_crps_matches_integral_oracle():
    rng = np.random.default_rng(99)
    for _ in range(25):
        x = rng.gamma(2.0, 2.0, size=int(rng.integers(3, 60)))
        y = float(rng.uniform(x.min(), x.max()))
        assert crps_sample(y, x) == pytest.approx(
            crps_integral_oracle(y, x), abs=1e-8
        )


def test_interval_score_branches():
    # covered: just the width
    assert interval_score(5.0, 0.0, 10.0, level=0.95) == pytest.approx(10.0)
    # below: width + (2/alpha)(l - y)
    assert interval_score(-1.0, 0.0, 10.0, level=0.95) == pytest.approx(10.0 + 40.0)
    # above: width + (2/alpha)(y - u)
    assert interval_score(12.0, 0.0, 10.0, level=0.95) == pytest.approx(10.0 + 80.0)
    with pytest.raises(ConfigurationError):
        interval_score(0.0, 0.0, 1.0, level=1.5)


def test_rmspe():
    assert rmspe([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))


def test_score_draws_trims_outliers():
    rng = np.random.default_rng(4)
    draws = rng.poisson(5.0, size=(200, 3)).astype(float)
    draws[0] = 1e9  # one rogue draw per location
    clean = score_draws(draws, np.array([5.0, 4.0, 6.0]), trim_fraction=0.025)
    assert clean["crps"] < 10.0
    dirty = score_draws(draws, np.array([5.0, 4.0, 6.0]), trim_fraction=0.0)
    assert dirty["crps"] > 1e4


def test_score_draws_shape_check():
    with pytest.raises(ConfigurationError):
        score_draws(np.zeros((10, 3)), np.zeros(4))


def test_score_report_frame():
    rep = ScoreReport(method="AC")
    rep.add_survey(1, {"rmspe": 1.0, "crps": 0.5, "scrps": -1.0,
                       "interval_score": 3.0, "scrps_undefined": 0, "n": 10})
    rep.add_survey(2, {"rmspe": 2.0, "crps": 0.7, "scrps": -0.9,
                       "interval_score": 4.0, "scrps_undefined": 1, "n": 12})
    df = rep.to_frame()
    assert list(df.columns)[:2] == ["method", "survey"]
    assert df.shape[0] == 2
    assert set(df["method"]) == {"AC"}
