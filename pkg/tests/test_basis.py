"""Bisquare basis and centroid-covariance tests."""

import numpy as np
import pytest

from siisdm.basis import (
    BasisConfig,
    basis_matrix,
    bisquare,
    build_centroid_grid,
    build_for_resolution,
    exp_covariance,
)
from siisdm.exceptions import ConfigurationError


def test_bisquare_half_range():
    # {1 - (1/2)^2}^2 = 0.5625
    assert bisquare([0.5, 0.0], [0.0, 0.0], range=1.0) == pytest.approx(0.5625)


def test_bisquare_compact_support():
    assert bisquare([1.5, 0.0], [0.0, 0.0], range=1.0) == 0.0
    assert bisquare([1.0, 0.0], [0.0, 0.0], range=1.0) == 0.0
    assert bisquare([0.0, 0.0], [0.0, 0.0], range=1.0) == 1.0


def test_unit_square_lattice():
    cfg = build_centroid_grid((0.0, 1.0, 0.0, 1.0), (5, 5), range_multiplier=1.5)
    assert cfg.n_basis == 25
    assert cfg.range == pytest.approx(1.5 * 0.25)


def test_single_centroid_at_center():
    cfg = build_centroid_grid((0.0, 2.0, 0.0, 4.0), (1, 1))
    np.testing.assert_allclose(cfg.centroids, [[1.0, 2.0]])
    assert cfg.range == pytest.approx(1.5 * 4.0)


def test_resolution_presets():
    for res, n in ((1, 6), (2, 10), (3, 17)):
        cfg = build_for_resolution((0.0, 1.0, 0.0, 1.0), res)
        assert cfg.n_basis == n * n
        assert cfg.resolution == res
    with pytest.raises(ConfigurationError):
        build_for_resolution((0.0, 1.0, 0.0, 1.0), 4)


def test_exp_covariance_at_scale_distance():
    c = np.array([[0.0, 0.0], [1.0, 0.0]])
    cov = exp_covariance(c, sigma2=2.0, scale=1.0)
    assert cov[0, 0] == pytest.approx(2.0)
    assert cov[0, 1] == pytest.approx(2.0 * np.exp(-1.0))


def test_exp_covariance_rejects_duplicates():
    # duplicated centroids are rejected at config level...
    with pytest.raises(ConfigurationError):
        BasisConfig(centroids=np.zeros((2, 2)), range=1.0)
    # ...and a raw duplicated set fails the SPD check
    with pytest.raises(ConfigurationError):
        exp_covariance(np.zeros((2, 2)), sigma2=1.0, scale=1.0)


def test_basis_matrix_shape_and_coverage_warning():
    cfg = build_centroid_grid((0.0, 1.0, 0.0, 1.0), (3, 3))
    mat = basis_matrix(np.array([[0.5, 0.5]]), cfg)
    assert mat.shape == (1, 9)
    with pytest.warns(UserWarning):
        basis_matrix(np.array([[50.0, 50.0]]), cfg)


def test_basis_config_roundtrip():
    cfg = build_centroid_grid((0.0, 1.0, 0.0, 1.0), (4, 4))
    again = BasisConfig.from_dict(cfg.to_dict())
    np.testing.assert_allclose(again.centroids, cfg.centroids)
    assert again.range == cfg.range


def test_invalid_configs():
    with pytest.raises(ConfigurationError):
        BasisConfig(centroids=np.array([[0.0, 0.0]]), range=-1.0)
    with pytest.raises(ConfigurationError):
        build_centroid_grid((0.0, 0.0, 0.0, 1.0), (2, 2))
    with pytest.raises(ConfigurationError):
        exp_covariance(np.array([[0.0, 0.0]]), sigma2=0.0, scale=1.0)
