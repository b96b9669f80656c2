"""Simulation-based prediction tests: determinism, trimming, covariance repair."""

import numpy as np
import pytest

from siisdm.exceptions import ConfigurationError
from siisdm.prediction import (
    PredictionDraws,
    PredictionTargets,
    _sampling_transform,
    draw_predictions,
    predict_index,
    summarize,
    trim_draws,
)


def targets_from(data, survey_id, limit=25):
    mask = data.test.survey_ids == survey_id
    return PredictionTargets(
        coords=data.test.coords[mask][:limit],
        covariates=data.test.covariates[mask][:limit],
    )


def test_trim_draws_arange():
    # T=40, trim 0.025 -> drop ceil(1)=1 from each tail of 1..40
    vals = np.arange(1.0, 41.0).reshape(40, 1)
    kept = trim_draws(vals, 0.025)
    assert kept.shape == (38, 1)
    assert kept.min() == 2.0 and kept.max() == 39.0
    assert kept.mean() == pytest.approx(20.5)


def test_summarize_point_is_trimmed_mean():
    vals = np.arange(1.0, 41.0).reshape(40, 1)
    draws = PredictionDraws(
        targets=PredictionTargets(np.zeros((1, 2)), np.zeros((1, 1))),
        survey_id=1,
        draws=vals.astype(np.int64),
        index_draws=None,
        trim_fraction=0.025,
    )
    point, lower, upper = summarize(draws, interval_level=0.8)
    assert point[0] == pytest.approx(20.5)
    assert lower[0] < point[0] < upper[0]


def test_summarize_guards():
    base = PredictionDraws(
        targets=PredictionTargets(np.zeros((1, 2)), np.zeros((1, 1))),
        survey_id=1,
        draws=np.arange(12, dtype=np.int64).reshape(12, 1),
        index_draws=None,
        trim_fraction=0.2,
    )
    with pytest.raises(ConfigurationError, match="need >= 10"):
        summarize(base)
    bad = PredictionDraws(
        targets=base.targets, survey_id=1, draws=base.draws,
        index_draws=None, trim_fraction=0.49,
    )
    with pytest.raises(ConfigurationError, match="below 0.5"):
        summarize(bad, interval_level=0.95)


def test_sampling_transform_zeroes_dead_directions():
    info = np.diag([1.0, 0.0])
    with pytest.warns(UserWarning, match="unidentified direction"):
        L = _sampling_transform(info)
    np.testing.assert_allclose(L @ L.T, np.diag([1.0, 0.0]), atol=1e-12)


def test_sampling_transform_caps_weak_directions():
    L = _sampling_transform(np.diag([0.01]))
    # 1/0.01 = 100 would be the naive variance; capped at 4
    np.testing.assert_allclose(L @ L.T, [[4.0]], atol=1e-12)


def test_sampling_transform_regular_matrix():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(5, 5))
    info = A @ A.T + 5.0 * np.eye(5)
    L = _sampling_transform(info)
    np.testing.assert_allclose(L @ L.T, np.linalg.inv(info), atol=1e-10)


def test_draws_deterministic(ac_fit_small, af_data_small):
    t = targets_from(af_data_small, 1)
    d1 = draw_predictions(ac_fit_small, t, survey_id=1, T=50, seed=7)
    d2 = draw_predictions(ac_fit_small, t, survey_id=1, T=50, seed=7)
    np.testing.assert_array_equal(d1.draws, d2.draws)
    d3 = draw_predictions(ac_fit_small, t, survey_id=1, T=50, seed=8)
    assert np.any(d3.draws != d1.draws)


def test_draws_shape_and_type(ac_fit_small, af_data_small):
    t = targets_from(af_data_small, 2, limit=8)
    d = draw_predictions(ac_fit_small, t, survey_id=2, T=30, seed=1)
    assert d.draws.shape == (30, 8)
    assert d.draws.dtype == np.int64
    assert np.all(d.draws >= 0)
    assert d.index_draws is None  # not a single-index fit


def test_survey_bounds_checked(ac_fit_small, af_data_small):
    t = targets_from(af_data_small, 1, limit=5)
    with pytest.raises(ConfigurationError):
        draw_predictions(ac_fit_small, t, survey_id=3, T=20)
    with pytest.raises(ConfigurationError):
        draw_predictions(ac_fit_small, t, survey_id=1, T=1)


def test_predict_index_matches_plugin(si_fit_small, si_data_small):
    from siisdm.basis import basis_matrix

    t = targets_from(si_data_small, 1, limit=20)
    T = 1500
    mean, sd = predict_index(si_fit_small, t, T=T, seed=5)
    beta = np.concatenate([[1.0], si_fit_small.theta["beta_free"]])
    Bt = basis_matrix(t.coords, si_fit_small.spec.basis_config, warn_uncovered=False)
    plugin = t.covariates @ beta + Bt @ si_fit_small.effects["alpha"]
    # draws are Gaussian around the plug-in index, so the MC error of the
    # mean is sd/sqrt(T) per location
    assert np.all(np.abs(mean - plugin) <= 6.0 * sd / np.sqrt(T) + 1e-8)
    assert np.all(sd >= 0)


def test_predict_index_requires_single_index(ac_fit_small, af_data_small):
    t = targets_from(af_data_small, 1, limit=5)
    with pytest.raises(ConfigurationError):
        predict_index(ac_fit_small, t)


def test_targets_alignment_checked():
    with pytest.raises(Exception):
        PredictionTargets(coords=np.zeros((3, 2)), covariates=np.zeros((2, 1)))
