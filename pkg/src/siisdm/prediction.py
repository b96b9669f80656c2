"""Simulation-based prediction: joint sampling of (parameters, basis weights)
from the large-sample normal, fresh fine-scale noise at targets, and trimmed
point/interval summaries."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .basis import basis_matrix
from .exceptions import ConfigurationError, DataError
from .links import _sigmoid
from .splines import _ispline_all, make_knots

DEFAULT_T = 500
DEFAULT_TRIM = 0.025
EIG_FLOOR = 1e-10
VARIANCE_CAP = 4.0


@dataclass(frozen=True)
class PredictionTargets:
    coords: np.ndarray                  # (n, 2)
    covariates: np.ndarray              # (n, p)
    log_offsets: np.ndarray | None = None

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(len(coords), -1)
        off = (
            np.zeros(len(coords))
            if self.log_offsets is None
            else np.asarray(self.log_offsets, dtype=float)
        )
        if len(cov) != len(coords) or len(off) != len(coords):
            raise DataError("targets: covariates/offsets must align with coords")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "log_offsets", off)

    @property
    def n(self) -> int:
        return len(self.coords)


@dataclass
class PredictionDraws:
    targets: PredictionTargets
    survey_id: int
    draws: np.ndarray                       # (T, n) sampled responses
    index_draws: np.ndarray | None          # (T, n) sampled single-index values
    trim_fraction: float = DEFAULT_TRIM

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


def _unpack_theta_np(theta_layout, theta_u: np.ndarray) -> dict:
    out, pos = {}, 0
    for name, size, tr in theta_layout:
        v = theta_u[pos : pos + size]
        # clamp before exp so extreme tail draws stay finite
        out[name] = np.exp(np.clip(v, -40.0, 40.0)) if tr == "log" else v
        pos += size
    return out


def _effects_named(effects_layout, u: np.ndarray) -> dict:
    out, pos = {}, 0
    for name, size in effects_layout:
        out[name] = u[pos : pos + size]
        pos += size
    return out


def _sampling_transform(information: np.ndarray) -> np.ndarray:
    """Square root of the repaired inverse information.

    Directions with information at or below the eigenvalue floor are not
    identified by the data; they get zero sampling variance (held at the
    plug-in estimate) rather than an exploding one.  Live directions have
    their variance capped: the normal approximation is only trustworthy
    locally, and sampling tens of standard units along a likelihood ridge
    produces meaningless predictions.
    """
    info = 0.5 * (information + information.T)
    evals, evecs = np.linalg.eigh(info)
    tol = max(float(evals.max()) * EIG_FLOOR, EIG_FLOOR)
    dead = evals <= tol
    if np.any(dead):
        warnings.warn(
            "observed information repaired: "
            f"{int(dead.sum())} unidentified direction(s) held at the estimate"
        )
    inv_evals = np.where(
        dead, 0.0, np.minimum(1.0 / np.where(dead, 1.0, evals), VARIANCE_CAP)
    )
    return evecs * np.sqrt(inv_evals)


def _target_eta(fit, theta: dict, eff: dict, kappa_or_none, Xt, Bt, xi, j0, log_off):
    """Log-mean at targets for survey j0 (0-based), given one parameter draw."""
    variant = fit.spec.variant
    m = len(np.atleast_1d(theta["phi"]))
    if variant == "single_index":
        kappa = kappa_or_none
        if fit.spec.link == "fourpl":
            g1 = theta["gamma1"][j0]
            g2 = theta["gamma2"][j0]
            g3 = theta["gamma3"][j0]
            g4 = theta["gamma4"][j0]
            h = g1 * _sigmoid(g4 * kappa - g3) + g2
        else:
            V = fit.spec.spline_count
            scfg = make_knots(0.0, 1.0, fit.spec.spline_degree, V)
            g = _sigmoid(theta["tau1"][j0] * kappa - theta["tau0"][j0])
            ivals = _ispline_all(g, scfg)
            coefs = theta["link_coefs"].reshape(m, V)[j0]
            h = theta["link_intercept"][j0] + coefs @ ivals
        return h + log_off
    lin = theta["intercepts"][j0]
    if variant == "independent":
        B = Bt.shape[1]
        p = Xt.shape[1]
        beta = theta["beta"].reshape(m, p)[j0]
        u = Bt @ eff["alpha"].reshape(m, B)[j0]
        return lin + Xt @ beta + u + xi + log_off
    if variant == "additive_constant":
        return lin + Xt @ theta["beta"] + Bt @ eff["alpha"] + xi + log_off
    # additive_field
    ref = (fit.spec.reference_survey or 1) - 1
    u = Bt @ eff["alpha"]
    if j0 != ref:
        B = Bt.shape[1]
        nonref = [j for j in range(m) if j != ref]
        k = nonref.index(j0)
        u = u + Bt @ eff["alpha_extra"].reshape(m - 1, B)[k]
    return lin + Xt @ theta["beta"] + u + xi + log_off


def _target_kappa(theta: dict, eff: dict, Xt, Bt, xi):
    beta = np.concatenate([[1.0], theta["beta_free"]])
    return Xt @ beta + Bt @ eff["alpha"] + xi


def _fine_scale_sd(fit, theta: dict, j0: int) -> float:
    """SD of fresh fine-scale noise at an unobserved target location."""
    if not fit.spec.include_fine_scale:
        return 0.0
    s2 = np.atleast_1d(theta["sigma2_xi"])
    variant = fit.spec.variant
    if variant == "independent":
        return float(np.sqrt(s2[j0]))
    if variant == "additive_field":
        ref = (fit.spec.reference_survey or 1) - 1
        var = s2[ref] + (s2[j0] if j0 != ref else 0.0)
        return float(np.sqrt(var))
    return float(np.sqrt(s2[0]))


def draw_predictions(
    fit,
    targets: PredictionTargets,
    survey_id: int,
    T: int = DEFAULT_T,
    seed: int = 0,
    trim_fraction: float = DEFAULT_TRIM,
) -> PredictionDraws:
    """Sample T responses per target location for the given survey.

    (theta, effects) are drawn jointly from the normal with covariance equal
    to the repaired inverse observed information; fine-scale terms are drawn
    independently at each target.
    """
    if fit.observed_information is None:
        raise ConfigurationError("fit has no observed information; refit with "
                                 "compute_information=True")
    if T < 2:
        raise ConfigurationError("need at least T=2 draws")
    m = len(np.atleast_1d(fit.theta["phi"]))
    if not 1 <= survey_id <= m:
        raise ConfigurationError(f"survey_id must be in 1..{m}")
    j0 = survey_id - 1

    rng = np.random.default_rng(seed)
    nt = sum(e[1] for e in fit.theta_layout)
    center = np.concatenate([fit.theta_u, fit.effects_vector])
    L = _sampling_transform(fit.observed_information)

    Bt = basis_matrix(targets.coords, fit.spec.basis_config, warn_uncovered=False)
    Xt = targets.covariates
    off = targets.log_offsets
    n = targets.n

    y_draws = np.empty((T, n), dtype=np.int64)
    k_draws = (
        np.empty((T, n)) if fit.spec.variant == "single_index" else None
    )
    for t in range(T):
        z = rng.standard_normal(len(center))
        draw = center + L @ z
        theta = _unpack_theta_np(fit.theta_layout, draw[:nt])
        eff = _effects_named(fit.effects_layout, draw[nt:])
        xi_sd = _fine_scale_sd(fit, theta, j0)
        xi = xi_sd * rng.standard_normal(n) if xi_sd > 0 else np.zeros(n)
        if fit.spec.variant == "single_index":
            kappa = _target_kappa(theta, eff, Xt, Bt, xi)
            k_draws[t] = kappa
            eta = _target_eta(fit, theta, eff, kappa, Xt, Bt, xi, j0, off)
        else:
            eta = _target_eta(fit, theta, eff, None, Xt, Bt, xi, j0, off)
        mu = np.exp(np.clip(eta, -30.0, 30.0))
        phi = float(theta["phi"][j0])
        r = 1.0 / max(phi, 1e-8)
        p = np.clip(r / (r + mu), 1e-12, 1.0)
        y_draws[t] = rng.negative_binomial(r, p)
    return PredictionDraws(
        targets=targets,
        survey_id=survey_id,
        draws=y_draws,
        index_draws=k_draws,
        trim_fraction=trim_fraction,
    )


def trim_draws(values: np.ndarray, trim_fraction: float) -> np.ndarray:
    """Sort draws (axis 0) and drop ceil(trim*T) from each tail."""
    T = values.shape[0]
    n_cut = int(np.ceil(trim_fraction * T))
    s = np.sort(values, axis=0)
    return s[n_cut : T - n_cut] if n_cut else s


def summarize(draws: PredictionDraws, interval_level: float = 0.95):
    """Trimmed point predictions and central prediction intervals.

    Returns (point, lower, upper) arrays over target locations.
    """
    trim = draws.trim_fraction
    if not 0 <= trim < 0.5:
        raise ConfigurationError("trim fraction must be in [0, 0.5)")
    alpha = 1.0 - interval_level
    if trim + alpha / 2.0 >= 0.5:
        raise ConfigurationError("trim + (1-level)/2 must be below 0.5")
    retained = trim_draws(draws.draws.astype(float), trim)
    if retained.shape[0] < 10:
        raise ConfigurationError(
            f"only {retained.shape[0]} draws retained after trimming; need >= 10"
        )
    point = retained.mean(axis=0)
    lower = np.quantile(retained, alpha / 2.0, axis=0)
    upper = np.quantile(retained, 1.0 - alpha / 2.0, axis=0)
    return point, lower, upper


def predict_index(fit, targets: PredictionTargets, T: int = DEFAULT_T, seed: int = 0):
    """Per-location mean and SD of the sampled single index.

    Returns (mean, sd) arrays.
    """
    if fit.spec.variant != "single_index":
        raise ConfigurationError("the index is defined for the single_index variant")
    draws = draw_predictions(fit, targets, survey_id=1, T=T, seed=seed)
    k = draws.index_draws
    return k.mean(axis=0), k.std(axis=0, ddof=1)
