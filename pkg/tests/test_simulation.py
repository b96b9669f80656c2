"""Synthetic data generator tests: sizes, link geometry, reproducibility."""

import numpy as np
import pytest

from siisdm.exceptions import ConfigurationError
from siisdm.links import FourPLParams, fourpl
from siisdm.simulation import (
    ADDITIVE_FIELD_VARIANCES,
    SCENARIO_FOURPL,
    AdditiveFieldSpec,
    ScenarioSpec,
    generate_additive_field,
    generate_siisdm,
    grid_locations,
    method_spec,
    run_study,
    simulate_gp,
)


def test_grid_locations():
    locs = grid_locations(51)
    assert locs.shape == (2601, 2)
    assert locs.min() == 0.0 and locs.max() == 1.0
    assert len(np.unique(locs[:, 0])) == 51


def test_default_design_sizes():
    data = generate_siisdm(ScenarioSpec(scenario=1))
    # survey 1: round(0.8 * 2601) = 2081; survey 2: lower half has 26*51 =
    # 1326 sites, round(0.8 * 1326) = 1061
    np.testing.assert_array_equal(data.train.survey_sizes(), [2081, 1061])
    np.testing.assert_array_equal(data.test.survey_sizes(), [2601 - 2081, 1326 - 1061])
    assert data.train.n_covariates == 4


def test_survey_two_restricted_to_lower_half():
    data = generate_siisdm(ScenarioSpec(scenario=1, grid_side=21))
    for ds in (data.train, data.test):
        assert np.all(ds.coords[ds.survey_ids == 2, 1] <= 0.5)
    # survey 1 covers the full domain
    assert data.train.coords[data.train.survey_ids == 1, 1].max() > 0.5


def test_train_test_disjoint_per_survey():
    data = generate_siisdm(ScenarioSpec(scenario=2, grid_side=15))
    for j in (1, 2):
        tr = {tuple(c) for c in data.train.coords[data.train.survey_ids == j]}
        te = {tuple(c) for c in data.test.coords[data.test.survey_ids == j]}
        assert not tr & te
        assert tr | te  # non-empty


def test_scenario_one_constant_link_offset():
    # scenario 1 curves differ only in the lower asymptote: h2 - h1 = 2
    p1, p2 = (FourPLParams(*g) for g in SCENARIO_FOURPL[1])
    ks = np.linspace(-8, 8, 101)
    np.testing.assert_allclose(fourpl(ks, p2) - fourpl(ks, p1), 2.0, atol=1e-12)


def test_scenario_two_asymmetric_asymptotes():
    p1, p2 = (FourPLParams(*g) for g in SCENARIO_FOURPL[2])
    assert fourpl(20.0, p1) == pytest.approx(4.0, abs=1e-6)
    assert fourpl(-20.0, p1) == pytest.approx(-1.0, abs=1e-6)
    assert fourpl(20.0, p2) == pytest.approx(4.0, abs=1e-6)
    # survey 2 saturates much earlier (gamma3 = -2)
    assert fourpl(0.0, p2) > fourpl(0.0, p1)


def test_all_scenario_links_monotone():
    ks = np.linspace(-10, 10, 201)
    for gs in SCENARIO_FOURPL.values():
        for g in gs:
            h = fourpl(ks, FourPLParams(*g))
            assert np.all(np.diff(h) >= 0)


def test_seed_reproducibility():
    a = generate_siisdm(ScenarioSpec(scenario=1, grid_side=13, seed=42))
    b = generate_siisdm(ScenarioSpec(scenario=1, grid_side=13, seed=42))
    np.testing.assert_array_equal(a.train.counts, b.train.counts)
    np.testing.assert_allclose(a.train.covariates, b.train.covariates)
    c = generate_siisdm(ScenarioSpec(scenario=1, grid_side=13, seed=43))
    assert np.any(c.train.counts != a.train.counts)


def test_additive_field_case_variances():
    for case, var in zip((1, 2, 3), ADDITIVE_FIELD_VARIANCES):
        assert AdditiveFieldSpec(case=case).extra_variance == var
    explicit = AdditiveFieldSpec(case=1, extra_variance=0.3)
    assert explicit.extra_variance == 0.3


def test_additive_field_zero_variance_limit():
    data = generate_additive_field(
        AdditiveFieldSpec(case=1, grid_side=11, seed=1, extra_variance=0.0)
    )
    eta = data.truth["eta"]
    # with no discrepancy field the two log-means differ by the intercepts
    np.testing.assert_allclose(eta[:, 1] - eta[:, 0], 1.0, atol=1e-12)
    assert np.all(data.truth["extra_field"] == 0.0)


def test_simulate_gp_moments():
    locs = grid_locations(9)
    rng = np.random.default_rng(0)
    draws = np.array([simulate_gp(locs, 1.0, 0.1, rng) for _ in range(150)])
    assert abs(draws.mean()) < 0.1
    assert draws.var() == pytest.approx(1.0, rel=0.15)
    with pytest.raises(ConfigurationError):
        simulate_gp(locs, -1.0, 0.1, 0)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ScenarioSpec(scenario=4)
    with pytest.raises(ConfigurationError):
        ScenarioSpec(scenario=1, subsample_fraction=0.0)
    with pytest.raises(ConfigurationError):
        AdditiveFieldSpec(case=0)


def test_method_spec_mapping():
    from siisdm.basis import build_centroid_grid

    basis = build_centroid_grid((0.0, 1.0, 0.0, 1.0), (2, 2))
    assert method_spec("ID", basis).variant == "independent"
    assert method_spec("ac", basis).variant == "additive_constant"
    af = method_spec("AF", basis)
    assert af.variant == "additive_field" and af.reference_survey == 1
    si = method_spec("SI", basis)
    assert si.variant == "single_index" and si.link == "fourpl"
    with pytest.raises(ConfigurationError):
        method_spec("XX", basis)


def test_run_study_smoke(tmp_path):
    out = tmp_path / "study.csv"
    table = run_study(
        AdditiveFieldSpec(case=1, grid_side=9),
        replicates=1,
        methods=("AC",),
        master_seed=5,
        n_draws=60,
        basis_resolution=1,
        out_path=out,
    )
    assert set(table.columns) == {
        "replicate", "scenario", "method", "survey", "metric", "value"
    }
    assert set(table["metric"]) == {"rmspe", "crps", "scrps", "interval_score"}
    assert set(table["survey"]) == {1, 2}
    assert np.all(np.isfinite(table["value"]))
    first = out.read_text().splitlines()[0]
    assert first.startswith("# schema_version=") and "seed=5" in first
