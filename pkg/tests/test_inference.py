"""Laplace estimation tests: gradients, quadrature comparison, fit round trip."""

import numpy as np
import pytest
from scipy.integrate import quad

from siisdm.basis import build_centroid_grid
from siisdm.data import ModelSpec, SurveyDataset
from siisdm.exceptions import ConfigurationError
from siisdm.inference import (
    FitOptions,
    FittedModel,
    initial_theta,
    inner_mode,
    laplace_nll,
)
from siisdm.model import ModelAssembly

SMALL_BASIS = build_centroid_grid((0.0, 1.0, 0.0, 1.0), (3, 3))


def one_survey_dataset(seed=0, n=20):
    rng = np.random.default_rng(seed)
    return SurveyDataset(
        survey_ids=np.ones(n, dtype=int),
        coords=rng.uniform(0, 1, size=(n, 2)),
        counts=rng.poisson(4.0, size=n),
        log_offsets=np.zeros(n),
        covariates=rng.normal(size=(n, 1)),
    )


def test_laplace_matches_quadrature_single_field():
    """With one basis weight the marginal likelihood is a 1-D integral."""
    ds = one_survey_dataset(seed=4)
    basis = build_centroid_grid((0.0, 1.0, 0.0, 1.0), (1, 1))
    asm = ModelAssembly(ds, ModelSpec(variant="additive_constant", basis_config=basis))
    theta = asm.pack(
        {
            "intercepts": np.array([1.2]),
            "beta": np.array([0.3]),
            "phi": np.array([0.7]),
            "sigma2_alpha": np.array([0.8]),
            "l_alpha": np.array([0.2]),
        }
    )
    lap, _ = laplace_nll(asm, theta)
    exact, _ = quad(
        lambda a: np.exp(-asm.joint_nll(theta, np.array([a]))), -12.0, 12.0,
        limit=200,
    )
    assert np.exp(-lap) == pytest.approx(exact, rel=1e-2)


def test_outer_gradient_matches_fd(af_data_small):
    asm = ModelAssembly(
        af_data_small.train,
        ModelSpec(variant="additive_constant", basis_config=SMALL_BASIS),
    )
    theta = initial_theta(asm)
    u, _, conv, _ = inner_mode(asm, theta)
    assert conv
    _, grad = asm.laplace_value_and_grad(theta, u)

    step = 1e-5
    for i in (0, 2, 5):
        e = np.zeros_like(theta)
        e[i] = step
        vp, _ = laplace_nll(asm, theta + e, warm_effects=u)
        vm, _ = laplace_nll(asm, theta - e, warm_effects=u)
        fd = (vp - vm) / (2 * step)
        assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_fit_recovers_regression_effects(ac_fit_small, af_data_small):
    fitted = ac_fit_small
    assert fitted.converged
    # loose sanity bounds only: n is tiny here and the spatial field partly
    # confounds the smoothest covariate; accuracy is covered by the larger
    # replicated checks in test_acceptance.py
    truth = af_data_small.truth
    np.testing.assert_allclose(fitted.parameters.beta, truth["beta"], atol=1.5)
    np.testing.assert_allclose(
        fitted.parameters.intercepts, truth["intercepts"], atol=1.0
    )
    assert np.all(np.sign(fitted.parameters.beta) == np.sign(truth["beta"]))


def test_standard_errors_finite(ac_fit_small):
    ses = ac_fit_small.standard_errors
    assert ses is not None
    for name in ("intercepts", "beta", "phi"):
        assert np.all(np.isfinite(ses[name]))
        assert np.all(ses[name] > 0)


def test_save_load_round_trip(ac_fit_small, tmp_path):
    path = tmp_path / "fit.json"
    ac_fit_small.save(path)
    loaded = FittedModel.load(path)
    np.testing.assert_allclose(loaded.theta_u, ac_fit_small.theta_u)
    np.testing.assert_allclose(loaded.effects_vector, ac_fit_small.effects_vector)
    assert loaded.laplace_nll_value == pytest.approx(ac_fit_small.laplace_nll_value)
    np.testing.assert_allclose(
        loaded.observed_information, ac_fit_small.observed_information
    )
    np.testing.assert_allclose(loaded.parameters.beta, ac_fit_small.parameters.beta)
    assert loaded.covariate_names == ac_fit_small.covariate_names


def test_fit_options_validation():
    with pytest.raises(ConfigurationError):
        FitOptions(inner_tol=-1.0)
    with pytest.raises(ConfigurationError):
        FitOptions(outer_tol=0.0)


def test_fit_rejects_incompatible_spec(af_data_small):
    # single_index with a constant covariate column is a hard validation error
    ds = af_data_small.train
    bad = SurveyDataset(
        survey_ids=ds.survey_ids,
        coords=ds.coords,
        counts=ds.counts,
        log_offsets=ds.log_offsets,
        covariates=np.column_stack([ds.covariates[:, 0], np.ones(ds.n_obs)]),
    )
    from siisdm.inference import fit

    with pytest.raises(ConfigurationError):
        fit(bad, ModelSpec(variant="single_index", link="fourpl",
                           basis_config=SMALL_BASIS))


def test_single_index_fit_basics(si_fit_small):
    fitted = si_fit_small
    assert fitted.parameters.beta[0] == 1.0  # identifiability constraint
    assert len(fitted.parameters.psi) == 2
    for psi in fitted.parameters.psi:
        assert psi.gamma1 > 0 and psi.gamma4 > 0
    assert np.isfinite(fitted.laplace_nll_value)
