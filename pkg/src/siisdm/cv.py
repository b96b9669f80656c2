"""Spatial block cross-validation: rectangular blocks over the pooled data
bounding box, block-level fold labels, per-fold fit/predict/score."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import ModelSpec, SurveyDataset
from .exceptions import ConfigurationError
from .metrics import METRIC_NAMES, ScoreReport, score_draws

DEFAULT_BLOCKS = (5, 5)
DEFAULT_FOLDS = 5
MAX_RESHUFFLES = 10


@dataclass(frozen=True)
class BlockAssignment:
    fold: np.ndarray            # (N,) labels in 1..K
    blocks_x: int
    blocks_y: int
    n_folds: int
    seed: int

    def __post_init__(self):
        f = np.asarray(self.fold, dtype=int)
        if f.size and (f.min() < 1 or f.max() > self.n_folds):
            raise ConfigurationError("fold labels must lie in 1..K")
        object.__setattr__(self, "fold", f)


def assign_blocks(
    locations,
    blocks_x: int = DEFAULT_BLOCKS[0],
    blocks_y: int = DEFAULT_BLOCKS[1],
    n_folds: int = DEFAULT_FOLDS,
    seed: int = 0,
) -> BlockAssignment:
    """Partition locations into rectangular blocks, then blocks into folds.

    Block-to-fold labels are assigned round-robin after a seeded shuffle, so
    all observations inside one block share a fold.  If any fold ends up
    empty, the shuffle is retried up to MAX_RESHUFFLES times.
    """
    locs = np.atleast_2d(np.asarray(locations, dtype=float))
    if blocks_x * blocks_y < n_folds:
        raise ConfigurationError("need at least as many blocks as folds")
    if n_folds < 2:
        raise ConfigurationError("need at least 2 folds")

    xmin, ymin = locs.min(axis=0)
    xmax, ymax = locs.max(axis=0)
    span_x = max(xmax - xmin, np.finfo(float).eps)
    span_y = max(ymax - ymin, np.finfo(float).eps)
    ix = np.minimum((blocks_x * (locs[:, 0] - xmin) / span_x).astype(int), blocks_x - 1)
    iy = np.minimum((blocks_y * (locs[:, 1] - ymin) / span_y).astype(int), blocks_y - 1)
    block = iy * blocks_x + ix

    n_blocks = blocks_x * blocks_y
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RESHUFFLES):
        order = rng.permutation(n_blocks)
        block_fold = np.empty(n_blocks, dtype=int)
        block_fold[order] = 1 + np.arange(n_blocks) % n_folds
        fold = block_fold[block]
        if len(np.unique(fold)) == n_folds:
            return BlockAssignment(
                fold=fold,
                blocks_x=blocks_x,
                blocks_y=blocks_y,
                n_folds=n_folds,
                seed=seed,
            )
    raise ConfigurationError(
        f"could not produce {n_folds} nonempty folds after {MAX_RESHUFFLES} shuffles; "
        "reduce the fold count or the block grid"
    )


def run_cv(
    dataset: SurveyDataset,
    spec: ModelSpec,
    n_folds: int = DEFAULT_FOLDS,
    blocks: tuple[int, int] = DEFAULT_BLOCKS,
    seed: int = 0,
    n_draws: int = 200,
    fit_options=None,
    method_name: str | None = None,
):
    """K-fold spatial block cross-validation of one model specification.

    Each fold is held out in turn; the model is fitted to the remaining
    observations of every survey, predictions are drawn at the held-out
    sites, and all four metrics are computed per survey.  Failed folds are
    skipped with a warning and the aggregate averages the successes.

    Returns (per_fold_frame, aggregate_report, assignment).
    """
    from .inference import FitOptions, fit as fit_model
    from .prediction import PredictionTargets, draw_predictions

    options = fit_options or FitOptions()
    assignment = assign_blocks(
        dataset.coords, blocks[0], blocks[1], n_folds=n_folds, seed=seed
    )
    name = method_name or spec.variant

    fold_rows: list[dict] = []
    failed_folds: list[int] = []
    for k in range(1, n_folds + 1):
        held = assignment.fold == k
        train = dataset.subset(~held)
        test = dataset.subset(held)
        if train.n_surveys < dataset.n_surveys:
            warnings.warn(f"fold {k}: a survey has no training rows; skipped")
            failed_folds.append(k)
            continue
        try:
            fitted = fit_model(train, spec, options=options)
        except Exception as exc:  # noqa: BLE001 - fold isolation
            warnings.warn(f"fold {k}: fit failed ({exc})")
            failed_folds.append(k)
            continue
        for j in range(1, dataset.n_surveys + 1):
            mask = test.survey_ids == j
            if not np.any(mask):
                continue
            targets = PredictionTargets(
                coords=test.coords[mask],
                covariates=test.covariates[mask],
                log_offsets=test.log_offsets[mask],
            )
            draws = draw_predictions(
                fitted, targets, survey_id=j, T=n_draws, seed=seed * 1000 + k * 10 + j
            )
            scores = score_draws(draws.draws, test.counts[mask])
            fold_rows.append({"fold": k, "survey": j, **scores})

    per_fold = pd.DataFrame(fold_rows)
    report = ScoreReport(method=name)
    if len(per_fold):
        for j in sorted(per_fold["survey"].unique()):
            sub = per_fold[per_fold["survey"] == j]
            agg = {m: float(sub[m].mean()) for m in METRIC_NAMES}
            agg["n"] = int(sub["n"].sum())
            agg["scrps_undefined"] = int(sub["scrps_undefined"].sum())
            agg["n_folds_used"] = int(len(sub))
            report.add_survey(int(j), agg)
    if failed_folds:
        warnings.warn(
            f"{len(failed_folds)} of {n_folds} folds failed: {failed_folds}; "
            "aggregate averages the remaining folds"
        )
    return per_fold, report, assignment
