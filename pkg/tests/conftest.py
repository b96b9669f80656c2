"""Shared small fitted models (session-scoped: fitting dominates test time)."""

import numpy as np
import pytest

from siisdm.basis import build_centroid_grid
from siisdm.data import ModelSpec
from siisdm.inference import FitOptions, fit
from siisdm.simulation import (
    AdditiveFieldSpec,
    ScenarioSpec,
    generate_additive_field,
    generate_siisdm,
)

SMALL_BASIS = build_centroid_grid((0.0, 1.0, 0.0, 1.0), (3, 3))


@pytest.fixture(scope="session")
def af_data_small():
    return generate_additive_field(AdditiveFieldSpec(case=1, grid_side=9, seed=3))


@pytest.fixture(scope="session")
def ac_fit_small(af_data_small):
    spec = ModelSpec(variant="additive_constant", basis_config=SMALL_BASIS)
    return fit(af_data_small.train, spec, options=FitOptions(seed=0))


@pytest.fixture(scope="session")
def si_data_small():
    return generate_siisdm(ScenarioSpec(scenario=1, grid_side=9, seed=2))


@pytest.fixture(scope="session")
def si_fit_small(si_data_small):
    spec = ModelSpec(variant="single_index", link="fourpl", basis_config=SMALL_BASIS)
    return fit(si_data_small.train, spec, options=FitOptions(seed=0, n_starts=1))
