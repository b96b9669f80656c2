"""Laplace-approximated maximum likelihood: inner mode search, outer
quasi-Newton optimization, observed information and standard errors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .data import ModelSpec, SurveyDataset, validate
from .exceptions import ConfigurationError, FitError
from .model import (
    LOG_2PI,
    ModelAssembly,
    ParameterVector,
    layout_slices,
    parameter_vector,
)

RESULT_SCHEMA_VERSION = 1

LOG_BOUND_LO = -16.0
LOG_BOUND_HI = 10.0


@dataclass
class FitOptions:
    inner_tol: float = 1e-8         # gradient inf-norm at the inner mode
    inner_max_iter: int = 200
    outer_tol: float = 1e-6         # projected gradient inf-norm
    outer_max_iter: int = 500
    fd_check: bool = False          # spot-check the outer gradient numerically
    seed: int = 0
    compute_information: bool = True
    n_starts: int | None = None     # None: 3 for single_index, else 1

    def __post_init__(self):
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise ConfigurationError("tolerances must be positive")


@dataclass
class RandomEffectState:
    alpha: np.ndarray
    xi: np.ndarray | None = None


@dataclass
class FittedModel:
    spec: ModelSpec
    theta_u: np.ndarray                  # unconstrained parameter vector
    theta: dict                          # named natural-scale parameters
    parameters: ParameterVector
    effects_vector: np.ndarray           # joint random-effect mode
    effects: dict                        # named blocks of the mode
    laplace_nll_value: float
    converged: bool
    n_outer_iter: int
    n_inner_iter: int
    covariate_names: tuple
    theta_layout: tuple
    effects_layout: tuple
    observed_information: np.ndarray | None = None
    standard_errors: dict | None = None
    message: str = ""
    fd_check_max_rel_err: float | None = None
    assembly: ModelAssembly | None = field(default=None, repr=False)

    @property
    def effects_state(self) -> RandomEffectState:
        return RandomEffectState(
            alpha=self.effects.get("alpha"), xi=self.effects.get("xi")
        )

    def to_json_dict(self) -> dict:
        return {
            "schema_version": RESULT_SCHEMA_VERSION,
            "spec": self.spec.to_dict(),
            "theta_u": self.theta_u.tolist(),
            "theta": {k: np.asarray(v).tolist() for k, v in self.theta.items()},
            "parameters": self.parameters.to_dict(),
            "effects_vector": self.effects_vector.tolist(),
            "laplace_nll_value": self.laplace_nll_value,
            "converged": self.converged,
            "n_outer_iter": self.n_outer_iter,
            "n_inner_iter": self.n_inner_iter,
            "covariate_names": list(self.covariate_names),
            "theta_layout": [list(e) for e in self.theta_layout],
            "effects_layout": [list(e) for e in self.effects_layout],
            "observed_information": None
            if self.observed_information is None
            else self.observed_information.tolist(),
            "standard_errors": None
            if self.standard_errors is None
            else {k: np.asarray(v).tolist() for k, v in self.standard_errors.items()},
            "message": self.message,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @staticmethod
    def load(path) -> "FittedModel":
        d = json.loads(Path(path).read_text())
        spec = ModelSpec.from_dict(d["spec"])
        theta = {k: np.asarray(v) for k, v in d["theta"].items()}
        theta_layout = tuple(tuple(e) for e in d["theta_layout"])
        effects_layout = tuple(tuple(e) for e in d["effects_layout"])
        eff_vec = np.asarray(d["effects_vector"])
        effects = {
            name: eff_vec[s] for name, s in layout_slices(effects_layout).items()
        }
        cfg = _cfg_from_layout(spec, theta, effects, theta_layout)
        return FittedModel(
            spec=spec,
            theta_u=np.asarray(d["theta_u"]),
            theta=theta,
            parameters=parameter_vector(cfg, theta),
            effects_vector=eff_vec,
            effects=effects,
            laplace_nll_value=d["laplace_nll_value"],
            converged=d["converged"],
            n_outer_iter=d["n_outer_iter"],
            n_inner_iter=d["n_inner_iter"],
            covariate_names=tuple(d["covariate_names"]),
            theta_layout=theta_layout,
            effects_layout=effects_layout,
            observed_information=None
            if d["observed_information"] is None
            else np.asarray(d["observed_information"]),
            standard_errors=None
            if d["standard_errors"] is None
            else {k: np.asarray(v) for k, v in d["standard_errors"].items()},
            message=d.get("message", ""),
        )


def _cfg_from_layout(spec, theta, effects, theta_layout):
    """Minimal StaticCfg reconstruction for a deserialized fit."""
    from .model import StaticCfg

    m = len(np.atleast_1d(theta["phi"]))
    if spec.variant == "single_index":
        p = len(np.atleast_1d(theta["beta_free"])) + 1
    elif spec.variant == "independent":
        p = len(np.atleast_1d(theta["beta"])) // m
    else:
        p = len(np.atleast_1d(theta["beta"]))
    B = spec.basis_config.n_basis if spec.basis_config is not None else 0
    knots = ()
    if spec.variant == "single_index" and spec.link == "ispline":
        from .splines import make_knots

        knots = tuple(make_knots(0.0, 1.0, spec.spline_degree, spec.spline_count).knots)
    return StaticCfg(
        variant=spec.variant,
        link=spec.link,
        p=p,
        m=m,
        B=B,
        n_obs=0,
        fine=spec.include_fine_scale,
        reference=(spec.reference_survey or 1) - 1,
        n_ref=0,
        spline_degree=spec.spline_degree,
        spline_count=spec.spline_count,
        spline_knots=knots,
    )


# --------------------------------------------------------------------------
# inner problem
# --------------------------------------------------------------------------

def inner_mode(
    assembly: ModelAssembly,
    theta_u: np.ndarray,
    init_effects: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
):
    """Damped Newton search for the random-effect mode.

    Returns (mode, H, converged, n_iter) where H is the (dense, PD) negative
    Hessian of the joint log-density with respect to the effects at the mode.
    """
    d = assembly.n_effects
    if d == 0:
        return np.zeros(0), np.zeros((0, 0)), True, 0

    u = np.zeros(d) if init_effects is None else np.array(init_effects, dtype=float)
    f = assembly.joint_nll(theta_u, u)
    if not np.isfinite(f):
        u = np.zeros(d)
        f = assembly.joint_nll(theta_u, u)
        if not np.isfinite(f):
            raise FitError("joint negative log-density not finite at the zero mode")

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # gradient tolerance scaled by |f|: float64 cannot resolve objective
        # decreases below ~eps*|f|, so an absolute cutoff would stall
        g = assembly.joint_grad_u(theta_u, u)
        if np.max(np.abs(g)) <= tol * max(1.0, abs(f)):
            converged = True
            it -= 1
            break
        H = assembly.joint_hess_u(theta_u, u)
        step = _damped_solve(H, g)
        descent = float(g @ step)
        t = 1.0
        accepted = False
        while t > 1e-12:
            cand = u - t * step
            fc = assembly.joint_nll(theta_u, cand)
            if np.isfinite(fc) and fc <= f - 1e-4 * t * max(descent, 0.0):
                u, f = cand, fc
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    else:
        it = max_iter

    H = assembly.joint_hess_u(theta_u, u)
    if not converged:
        gmax = np.max(np.abs(assembly.joint_grad_u(theta_u, u)))
        converged = gmax <= tol * max(1.0, abs(f))
    return u, H, converged, it


def _damped_solve(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve H x = g with increasing Levenberg damping until H is PD."""
    lam = 0.0
    eye = np.eye(H.shape[0])
    for _ in range(40):
        try:
            c = sla.cho_factor(H + lam * eye, lower=True)
            return sla.cho_solve(c, g)
        except np.linalg.LinAlgError:
            lam = max(lam * 10.0, 1e-8)
    raise FitError("inner Hessian could not be made positive definite")


def laplace_nll(
    assembly: ModelAssembly,
    theta_u: np.ndarray,
    warm_effects: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
):
    """Negative Laplace-approximated marginal log-likelihood at theta.

    Returns (value, mode).
    """
    if assembly.n_effects == 0:
        v, _ = assembly.nll_value_and_grad_theta(theta_u, np.zeros(0))
        return v, np.zeros(0)
    u, _H, converged, _ = inner_mode(assembly, theta_u, warm_effects, tol, max_iter)
    if not converged:
        raise FitError("inner mode search did not converge")
    return assembly.laplace_value(theta_u, u), u


# --------------------------------------------------------------------------
# initialization
# --------------------------------------------------------------------------

def _lstsq_loglinear(X, z):
    """Least-squares slopes of z on X with an intercept column."""
    Xi = np.column_stack([np.ones(len(z)), X])
    coef, *_ = np.linalg.lstsq(Xi, z, rcond=None)
    return coef[0], coef[1:]


def initial_theta(assembly: ModelAssembly) -> np.ndarray:
    """Heuristic start: log-linear regression for the mean structure, 0.5 for
    variances, near-identity catch-efficiency links."""
    cfg = assembly.cfg
    ds = assembly.dataset
    z = np.log(ds.counts + 1.0) - ds.log_offsets
    X = ds.covariates
    sv = ds.survey_ids - 1

    values: dict[str, np.ndarray] = {"phi": np.ones(cfg.m)}
    n_fields = cfg.m if cfg.variant in ("independent", "additive_field") else 1
    values["sigma2_alpha"] = np.full(n_fields, 0.5)
    xmin, xmax, ymin, ymax = ds.bounding_box()
    diam = float(np.hypot(xmax - xmin, ymax - ymin))
    values["l_alpha"] = np.full(n_fields, max(0.15 * diam, 1e-3))
    if cfg.fine:
        values["sigma2_xi"] = np.full(n_fields, 0.5)

    if cfg.variant == "independent":
        intercepts, betas = [], []
        for j in range(cfg.m):
            mask = sv == j
            b0, b = _lstsq_loglinear(X[mask], z[mask])
            intercepts.append(b0)
            betas.append(b)
        values["intercepts"] = np.array(intercepts)
        values["beta"] = np.concatenate(betas)
    elif cfg.variant in ("additive_constant", "additive_field"):
        _b0, b = _lstsq_loglinear(X, z)
        values["beta"] = b
        resid = z - X @ b
        values["intercepts"] = np.array(
            [resid[sv == j].mean() for j in range(cfg.m)]
        )
    else:  # single_index
        _b0, b = _lstsq_loglinear(X, z)
        if abs(b[0]) > 1e-3:
            # rescaled slopes can explode when the first slope is small;
            # keep the start in a sane region
            beta_free = np.clip(b[1:] / b[0], -5.0, 5.0)
        else:
            beta_free = np.zeros(cfg.p - 1)
        values["beta_free"] = beta_free
        if cfg.link == "fourpl":
            g1, g2 = [], []
            for j in range(cfg.m):
                zj = z[sv == j]
                g1.append(max(np.ptp(zj), 1.0))
                g2.append(zj.min())
            values["gamma1"] = np.array(g1)
            values["gamma2"] = np.array(g2)
            values["gamma3"] = np.zeros(cfg.m)
            values["gamma4"] = np.ones(cfg.m)
        else:
            lo, coefs = [], []
            for j in range(cfg.m):
                zj = z[sv == j]
                lo.append(zj.min())
                coefs.append(np.full(cfg.spline_count,
                                     max(np.ptp(zj), 1.0) / cfg.spline_count))
            values["link_intercept"] = np.array(lo)
            values["link_coefs"] = np.concatenate(coefs)
            values["tau0"] = np.zeros(cfg.m)
            values["tau1"] = np.ones(cfg.m)
    return assembly.pack(values)


def _bounds(assembly: ModelAssembly):
    bounds = []
    for _name, size, tr in assembly.theta_layout:
        lohi = (LOG_BOUND_LO, LOG_BOUND_HI) if tr == "log" else (None, None)
        bounds.extend([lohi] * size)
    return bounds


# --------------------------------------------------------------------------
# outer problem
# --------------------------------------------------------------------------

def fit(
    dataset: SurveyDataset,
    spec: ModelSpec,
    options: FitOptions | None = None,
    init: np.ndarray | dict | None = None,
) -> FittedModel:
    """Maximize the Laplace-approximated marginal likelihood."""
    options = options or FitOptions()
    violations = validate(dataset, spec)
    hard = [v for v in violations if "p=1" not in v]
    if hard:
        raise ConfigurationError("; ".join(hard))

    assembly = ModelAssembly(dataset, spec)
    if isinstance(init, dict):
        theta0 = assembly.pack(init)
    elif init is not None:
        theta0 = np.asarray(init, dtype=float)
    else:
        theta0 = initial_theta(assembly)

    state = {"warm": np.zeros(assembly.n_effects), "inner_iters": 0}

    def objective(theta_u):
        if assembly.n_effects == 0:
            v, g = assembly.nll_value_and_grad_theta(theta_u, np.zeros(0))
            return (v, g) if np.isfinite(v) else (1e12, np.zeros_like(theta_u))
        try:
            u, _H, conv, it = inner_mode(
                assembly, theta_u, state["warm"],
                tol=options.inner_tol, max_iter=options.inner_max_iter,
            )
        except FitError:
            return 1e12, np.zeros_like(theta_u)
        state["inner_iters"] += it
        if not conv:
            return 1e12, np.zeros_like(theta_u)
        state["warm"] = u
        v, g = assembly.laplace_value_and_grad(theta_u, u)
        if not (np.isfinite(v) and np.all(np.isfinite(g))):
            return 1e12, np.zeros_like(theta_u)
        return v, g

    # the single-index likelihood is multimodal in the link parameters;
    # a few jittered restarts pick the best local optimum deterministically
    n_starts = options.n_starts
    if n_starts is None:
        n_starts = 3 if spec.variant == "single_index" and init is None else 1
    bounds = _bounds(assembly)
    rng = np.random.default_rng(options.seed)
    starts = [theta0]
    for _ in range(1, n_starts):
        cand = theta0 + rng.normal(0.0, 0.75, size=theta0.shape)
        for i, (lo, hi) in enumerate(bounds):
            if lo is not None:
                cand[i] = min(max(cand[i], lo), hi)
        starts.append(cand)

    res = None
    warm_best = np.zeros(assembly.n_effects)
    total_inner = 0
    for theta_s in starts:
        state["warm"] = np.zeros(assembly.n_effects)
        state["inner_iters"] = 0
        v0, _ = objective(theta_s)
        if v0 >= 1e12:
            continue
        res_s = minimize(
            objective,
            theta_s,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={
                "maxiter": options.outer_max_iter,
                "gtol": options.outer_tol,
                "ftol": 1e-12,
            },
        )
        total_inner += state["inner_iters"]
        if res is None or res_s.fun < res.fun:
            res = res_s
            warm_best = state["warm"].copy()
    if res is None:
        raise FitError("objective not finite at the initial parameter vector")
    state["warm"] = warm_best
    state["inner_iters"] = total_inner

    theta_hat = np.asarray(res.x)
    u_hat, H, _conv, _ = inner_mode(
        assembly, theta_hat, state["warm"],
        tol=options.inner_tol, max_iter=options.inner_max_iter,
    )
    if assembly.n_effects:
        nll_hat = assembly.laplace_value(theta_hat, u_hat)
    else:
        nll_hat = assembly.nll_value_and_grad_theta(theta_hat, u_hat)[0]

    fd_err = None
    if options.fd_check:
        fd_err = _fd_gradient_check(objective, theta_hat)

    theta_named = assembly.unpack(theta_hat)
    esl = layout_slices(assembly.effects_layout)
    effects_named = {name: u_hat[s] for name, s in esl.items()}

    fitted = FittedModel(
        spec=spec,
        theta_u=theta_hat,
        theta=theta_named,
        parameters=parameter_vector(assembly.cfg, theta_named),
        effects_vector=u_hat,
        effects=effects_named,
        laplace_nll_value=float(nll_hat),
        converged=bool(res.success),
        n_outer_iter=int(res.nit),
        n_inner_iter=int(state["inner_iters"]),
        covariate_names=dataset.covariate_names,
        theta_layout=assembly.theta_layout,
        effects_layout=assembly.effects_layout,
        message=str(res.message),
        fd_check_max_rel_err=fd_err,
        assembly=assembly,
    )
    if options.compute_information:
        info, ses = observed_information(fitted, assembly=assembly)
        fitted.observed_information = info
        fitted.standard_errors = ses
    return fitted


def _fd_gradient_check(objective, theta, n_coords: int = 3, step: float = 1e-5):
    """Central finite differences on a few coordinates; returns max rel err."""
    _v, g = objective(theta)
    rng = np.random.default_rng(0)
    coords = rng.choice(len(theta), size=min(n_coords, len(theta)), replace=False)
    worst = 0.0
    for i in coords:
        e = np.zeros_like(theta)
        e[i] = step
        vp, _ = objective(theta + e)
        vm, _ = objective(theta - e)
        fd = (vp - vm) / (2 * step)
        denom = max(abs(fd), abs(g[i]), 1e-8)
        worst = max(worst, abs(fd - g[i]) / denom)
    return worst


def observed_information(
    fitted: FittedModel,
    dataset: SurveyDataset | None = None,
    spec: ModelSpec | None = None,
    assembly: ModelAssembly | None = None,
):
    """Joint observed information over (theta, effects) at the fitted values.

    The information is computed in the unconstrained parameterization (so the
    implied Gaussian for prediction sampling respects positivity); standard
    errors for natural-scale parameters follow by the delta method.
    Returns (information matrix, standard-error dict).
    """
    if assembly is None:
        assembly = fitted.assembly
    if assembly is None:
        if dataset is None:
            raise ConfigurationError("need a dataset (or live assembly) for the Hessian")
        assembly = ModelAssembly(dataset, spec or fitted.spec)

    H = assembly.joint_full_hessian(fitted.theta_u, fitted.effects_vector)
    H = 0.5 * (H + H.T)

    nt = assembly.n_theta
    ses: dict[str, np.ndarray] = {}
    try:
        cov = np.linalg.inv(H)
        se_u = np.sqrt(np.clip(np.diag(cov)[:nt], 0.0, None))
        pos = 0
        for name, size, tr in assembly.theta_layout:
            block = se_u[pos : pos + size]
            if tr == "log":
                block = block * np.asarray(fitted.theta[name])  # delta method
            ses[name] = block
            pos += size
    except np.linalg.LinAlgError:
        import warnings

        warnings.warn("observed information is singular; standard errors undefined")
        ses = {name: np.full(size, np.nan) for name, size, _ in assembly.theta_layout}
    return H, ses
