"""Sample-based predictive scores: RMSPE, CRPS, SCRPS, and the interval
score, plus a per-survey report assembled from prediction draws."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import ConfigurationError
from .prediction import PredictionDraws, summarize, trim_draws

METRIC_NAMES = ("rmspe", "crps", "scrps", "interval_score")


def rmspe(truth, point) -> float:
    truth = np.asarray(truth, dtype=float)
    point = np.asarray(point, dtype=float)
    return float(np.sqrt(np.mean((truth - point) ** 2)))


def _mean_abs_pairwise(x: np.ndarray) -> float:
    # E|X - X'| over all ordered pairs, including i == j (which contribute 0)
    T = len(x)
    s = np.sort(x)
    # sum_{i<j} (s_j - s_i) via prefix weights, O(T log T)
    weights = 2.0 * np.arange(T) - (T - 1)
    return float(2.0 * np.sum(weights * s) / (T * T))


def crps_sample(truth: float, draws) -> float:
    """CRPS estimated from an empirical sample:
    mean |y - X| - 0.5 * mean |X - X'| (all ordered pairs)."""
    x = np.asarray(draws, dtype=float)
    return float(np.mean(np.abs(x - truth)) - 0.5 * _mean_abs_pairwise(x))


def scrps_sample(truth: float, draws) -> float:
    """Scaled CRPS from an empirical sample:
    -E|X - y| / E|X - X'| - 0.5 * log E|X - X'|.

    Undefined (NaN) when all draws are identical, since the spread term
    E|X - X'| is zero.
    """
    x = np.asarray(draws, dtype=float)
    spread = _mean_abs_pairwise(x)
    if spread <= 0.0:
        return float("nan")
    return float(-np.mean(np.abs(x - truth)) / spread - 0.5 * np.log(spread))


def interval_score(truth, lower, upper, level: float = 0.95) -> float:
    """Mean interval score at the given central level."""
    if not 0 < level < 1:
        raise ConfigurationError("level must be in (0, 1)")
    alpha = 1.0 - level
    y = np.asarray(truth, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    score = (hi - lo) + (2.0 / alpha) * (lo - y) * (y < lo) + (
        2.0 / alpha
    ) * (y - hi) * (y > hi)
    return float(np.mean(score))


def score_draws(
    draws_matrix: np.ndarray,
    truth: np.ndarray,
    trim_fraction: float = 0.025,
    interval_level: float = 0.95,
) -> dict:
    """All four scores from a (T, n) draw matrix and length-n truths.

    All four scores are computed from the tail-trimmed draw sample; trimming
    guards every metric against the rare extreme draws that simulation-based
    prediction produces for overdispersed counts.  SCRPS is averaged over the
    locations where it is defined; the count of undefined locations is
    reported under ``scrps_undefined``.
    """
    x = np.asarray(draws_matrix, dtype=float)
    y = np.asarray(truth, dtype=float)
    if x.ndim != 2 or x.shape[1] != len(y):
        raise ConfigurationError(
            f"draws matrix {x.shape} does not align with {len(y)} truths"
        )
    retained = trim_draws(x, trim_fraction)
    x = retained
    point = retained.mean(axis=0)
    alpha = 1.0 - interval_level
    lower = np.quantile(retained, alpha / 2.0, axis=0)
    upper = np.quantile(retained, 1.0 - alpha / 2.0, axis=0)

    crps_vals = np.array([crps_sample(y[i], x[:, i]) for i in range(len(y))])
    scrps_vals = np.array([scrps_sample(y[i], x[:, i]) for i in range(len(y))])
    n_undef = int(np.isnan(scrps_vals).sum())
    scrps_mean = float(np.nanmean(scrps_vals)) if n_undef < len(y) else float("nan")
    return {
        "rmspe": rmspe(y, point),
        "crps": float(np.mean(crps_vals)),
        "scrps": scrps_mean,
        "interval_score": interval_score(y, lower, upper, interval_level),
        "scrps_undefined": n_undef,
        "n": len(y),
    }


@dataclass
class ScoreReport:
    """Per-survey scores (rows) across metrics (columns)."""

    method: str
    rows: list[dict] = field(default_factory=list)

    def add_survey(self, survey_id: int, scores: dict) -> None:
        self.rows.append({"survey": survey_id, **scores})

    def to_frame(self) -> pd.DataFrame:
        cols = ["survey", *METRIC_NAMES, "scrps_undefined", "n"]
        df = pd.DataFrame(self.rows)
        df = df[[c for c in cols if c in df.columns]]
        df.insert(0, "method", self.method)
        return df

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def score_predictions(
    draws: PredictionDraws,
    truth,
    interval_level: float = 0.95,
) -> dict:
    """Score one survey's prediction draws against held-out counts."""
    y = np.asarray(truth, dtype=float)
    if len(y) != draws.draws.shape[1]:
        raise ConfigurationError("truth length does not match prediction targets")
    # reuse summarize() so scoring and reporting use identical summaries
    point, lower, upper = summarize(draws, interval_level)
    x = trim_draws(draws.draws.astype(float), draws.trim_fraction)
    crps_vals = np.array([crps_sample(y[i], x[:, i]) for i in range(len(y))])
    scrps_vals = np.array([scrps_sample(y[i], x[:, i]) for i in range(len(y))])
    n_undef = int(np.isnan(scrps_vals).sum())
    return {
        "rmspe": rmspe(y, point),
        "crps": float(np.mean(crps_vals)),
        "scrps": float(np.nanmean(scrps_vals)) if n_undef < len(y) else float("nan"),
        "interval_score": interval_score(y, lower, upper, interval_level),
        "scrps_undefined": n_undef,
        "n": len(y),
    }
