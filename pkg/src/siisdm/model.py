"""Joint (data + random effect) negative log-density for the four model
variants, with JAX as the derivative backend.

Everything fitting-critical lives in module-level jitted functions keyed on a
hashable static configuration, so repeated fits with identical shapes (e.g.
simulation replicates) reuse compiled code.

Unconstrained parameterization: positive parameters (dispersions, variances,
covariance scales, monotone link coefficients) are optimized on the log
scale; everything else is unconstrained as-is.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np
from jax.scipy.special import gammaln

from . import basis as basis_mod
from .data import ModelSpec, SurveyDataset
from .exceptions import ConfigurationError
from .links import FourPLParams, SplineLinkParams, _sigmoid
from .splines import SplineBasisConfig, _ispline_all, make_knots

jax.config.update("jax_enable_x64", True)

MU_FLOOR = 1e-12
ETA_CAP = 500.0  # keeps exp() finite; far outside any plausible log-mean
LOG_2PI = float(np.log(2.0 * np.pi))


class DataArrays(NamedTuple):
    """Pytree of per-observation arrays consumed by the likelihood."""

    X: jnp.ndarray          # (N, p) covariates (no intercept column)
    y: jnp.ndarray          # (N,) counts
    log_off: jnp.ndarray    # (N,)
    sv: jnp.ndarray         # (N,) survey index, 0-based
    Bmat: jnp.ndarray       # (N, B) bisquare basis values
    Dc: jnp.ndarray         # (B, B) centroid distances
    nonref_idx: tuple       # per non-reference survey: obs index arrays (AF only)


@dataclass(frozen=True)
class StaticCfg:
    """Hashable shape/variant description used as a jit static argument."""

    variant: str
    link: str | None
    p: int
    m: int
    B: int
    n_obs: int
    fine: bool
    reference: int                     # 0-based, additive_field only
    n_ref: int                         # reference-survey obs count (AF only)
    spline_degree: int
    spline_count: int
    spline_knots: tuple


# --------------------------------------------------------------------------
# parameter layout and transforms
# --------------------------------------------------------------------------

def theta_layout(cfg: StaticCfg) -> tuple[tuple[str, int, str], ...]:
    m, p, V = cfg.m, cfg.p, cfg.spline_count
    entries: list[tuple[str, int, str]] = []
    if cfg.variant == "single_index":
        entries.append(("beta_free", p - 1, "id"))
    else:
        entries.append(("intercepts", m, "id"))
        if cfg.variant == "independent":
            entries.append(("beta", m * p, "id"))
        else:
            entries.append(("beta", p, "id"))
    entries.append(("phi", m, "log"))
    n_fields = m if cfg.variant in ("independent", "additive_field") else 1
    entries.append(("sigma2_alpha", n_fields, "log"))
    entries.append(("l_alpha", n_fields, "log"))
    if cfg.fine:
        entries.append(("sigma2_xi", n_fields, "log"))
    if cfg.variant == "single_index":
        if cfg.link == "fourpl":
            entries += [("gamma1", m, "log"), ("gamma2", m, "id"),
                        ("gamma3", m, "id"), ("gamma4", m, "log")]
        else:
            entries += [("link_intercept", m, "id"), ("link_coefs", m * V, "log"),
                        ("tau0", m, "id"), ("tau1", m, "log")]
    return tuple(entries)


def effects_layout(cfg: StaticCfg) -> tuple[tuple[str, int], ...]:
    B, m, N = cfg.B, cfg.m, cfg.n_obs
    if cfg.variant == "independent":
        entries = [("alpha", m * B)]
        if cfg.fine:
            entries.append(("xi", N))
    elif cfg.variant == "additive_field":
        entries = [("alpha", B), ("alpha_extra", (m - 1) * B)]
        if cfg.fine:
            entries += [("xi", N), ("xi_extra", N - cfg.n_ref)]
    else:
        entries = [("alpha", B)]
        if cfg.fine:
            entries.append(("xi", N))
    return tuple(entries)


def layout_size(layout) -> int:
    return sum(e[1] for e in layout)


def layout_slices(layout) -> dict[str, slice]:
    out, pos = {}, 0
    for entry in layout:
        name, size = entry[0], entry[1]
        out[name] = slice(pos, pos + size)
        pos += size
    return out


def unpack_theta(cfg: StaticCfg, theta_u, xp=jnp) -> dict:
    sl = layout_slices(theta_layout(cfg))
    out = {}
    for name, _size, tr in theta_layout(cfg):
        v = theta_u[sl[name]]
        out[name] = xp.exp(v) if tr == "log" else v
    return out


def pack_theta(cfg: StaticCfg, values: dict) -> np.ndarray:
    layout = theta_layout(cfg)
    parts = []
    for name, size, tr in layout:
        v = np.asarray(values[name], dtype=float).ravel()
        if v.size != size:
            raise ConfigurationError(f"parameter {name!r}: expected size {size}, got {v.size}")
        parts.append(np.log(v) if tr == "log" else v)
    return np.concatenate(parts) if parts else np.zeros(0)


# --------------------------------------------------------------------------
# likelihood pieces
# --------------------------------------------------------------------------

def nb_logpmf(y, mu, phi, xp=jnp):
    """Negative binomial log-pmf with mean mu and Var = mu + phi*mu^2."""
    r = 1.0 / phi
    mu = xp.maximum(mu, MU_FLOOR)
    return (
        gammaln(y + r) - gammaln(r) - gammaln(y + 1.0)
        + r * (xp.log(r) - xp.log(r + mu))
        + y * (xp.log(mu) - xp.log(r + mu))
    )


def _field_nll(alpha, sigma2, l, Dc):
    """Negative log-density of N(0, sigma2 * exp(-Dc / l))."""
    cov = sigma2 * jnp.exp(-Dc / l)
    L = jnp.linalg.cholesky(cov)
    w = jax.scipy.linalg.solve_triangular(L, alpha, lower=True)
    return 0.5 * w @ w + jnp.sum(jnp.log(jnp.diag(L))) + 0.5 * alpha.size * LOG_2PI


def _iid_nll(xi, sigma2_per_obs):
    return 0.5 * jnp.sum(xi**2 / sigma2_per_obs) + 0.5 * jnp.sum(
        jnp.log(sigma2_per_obs)
    ) + 0.5 * xi.size * LOG_2PI


def _spline_cfg(cfg: StaticCfg) -> SplineBasisConfig:
    return SplineBasisConfig(
        degree=cfg.spline_degree,
        count=cfg.spline_count,
        lower=0.0,
        upper=1.0,
        knots=np.asarray(cfg.spline_knots),
    )


def _catch_efficiency(cfg: StaticCfg, params: dict, kappa, sv):
    """h_{survey}(kappa) for every observation, vectorized over surveys."""
    if cfg.link == "fourpl":
        g1, g2 = params["gamma1"][sv], params["gamma2"][sv]
        g3, g4 = params["gamma3"][sv], params["gamma4"][sv]
        return g1 * _sigmoid(g4 * kappa - g3, xp=jnp) + g2
    tau0, tau1 = params["tau0"][sv], params["tau1"][sv]
    g = _sigmoid(tau1 * kappa - tau0, xp=jnp)
    ivals = _ispline_all(g, _spline_cfg(cfg), xp=jnp)  # (V, N)
    coefs = params["link_coefs"].reshape(cfg.m, cfg.spline_count)[sv]  # (N, V)
    return params["link_intercept"][sv] + jnp.sum(coefs * ivals.T, axis=1)


def compute_kappa(cfg: StaticCfg, params: dict, eff: dict, A: DataArrays):
    beta = jnp.concatenate([jnp.ones(1), params["beta_free"]])
    kappa = A.X @ beta + A.Bmat @ eff["alpha"]
    if cfg.fine:
        kappa = kappa + eff["xi"]
    return kappa


def compute_eta(cfg: StaticCfg, params: dict, eff: dict, A: DataArrays):
    """Per-observation log-mean (offset included) for any variant."""
    sv = A.sv
    if cfg.variant == "single_index":
        kappa = compute_kappa(cfg, params, eff, A)
        return _catch_efficiency(cfg, params, kappa, sv) + A.log_off

    lin = params["intercepts"][sv]
    if cfg.variant == "independent":
        beta = params["beta"].reshape(cfg.m, cfg.p)
        lin = lin + jnp.sum(A.X * beta[sv], axis=1)
        U = A.Bmat @ eff["alpha"].reshape(cfg.m, cfg.B).T  # (N, m)
        lin = lin + jnp.take_along_axis(U, sv[:, None], axis=1)[:, 0]
        if cfg.fine:
            lin = lin + eff["xi"]
    elif cfg.variant == "additive_constant":
        lin = lin + A.X @ params["beta"] + A.Bmat @ eff["alpha"]
        if cfg.fine:
            lin = lin + eff["xi"]
    else:  # additive_field
        lin = lin + A.X @ params["beta"] + A.Bmat @ eff["alpha"]
        if cfg.fine:
            lin = lin + eff["xi"]
        extra = eff["alpha_extra"].reshape(cfg.m - 1, cfg.B)
        nonref = [j for j in range(cfg.m) if j != cfg.reference]
        pos = 0
        for k, j in enumerate(nonref):
            idx = A.nonref_idx[k]
            contrib = (sv == j) * (A.Bmat @ extra[k])
            lin = lin + contrib
            if cfg.fine:
                n_j = idx.shape[0]
                lin = lin + jnp.zeros(cfg.n_obs).at[idx].add(
                    eff["xi_extra"][pos : pos + n_j]
                )
                pos += n_j
    return lin + A.log_off


def joint_nll_fn(cfg: StaticCfg, theta_u, u, A: DataArrays):
    """Negative joint log-density: data term + Gaussian random-effect terms."""
    params = unpack_theta(cfg, theta_u)
    esl = layout_slices(effects_layout(cfg))
    eff = {name: u[s] for name, s in esl.items()}

    eta = jnp.clip(compute_eta(cfg, params, eff, A), -ETA_CAP, ETA_CAP)
    mu = jnp.exp(eta)
    phi = params["phi"][A.sv]
    nll = -jnp.sum(nb_logpmf(A.y, mu, phi))

    s2a, la = params["sigma2_alpha"], params["l_alpha"]
    if cfg.variant == "independent":
        alpha = eff["alpha"].reshape(cfg.m, cfg.B)
        for j in range(cfg.m):
            nll = nll + _field_nll(alpha[j], s2a[j], la[j], A.Dc)
        if cfg.fine:
            nll = nll + _iid_nll(eff["xi"], params["sigma2_xi"][A.sv])
    elif cfg.variant == "additive_field":
        ref = cfg.reference
        nll = nll + _field_nll(eff["alpha"], s2a[ref], la[ref], A.Dc)
        extra = eff["alpha_extra"].reshape(cfg.m - 1, cfg.B)
        nonref = [j for j in range(cfg.m) if j != cfg.reference]
        for k, j in enumerate(nonref):
            nll = nll + _field_nll(extra[k], s2a[j], la[j], A.Dc)
        if cfg.fine:
            s2xi = params["sigma2_xi"]
            nll = nll + _iid_nll(eff["xi"], jnp.full(cfg.n_obs, s2xi[ref]))
            pos = 0
            for k, j in enumerate(nonref):
                n_j = A.nonref_idx[k].shape[0]
                nll = nll + _iid_nll(
                    eff["xi_extra"][pos : pos + n_j], jnp.full(n_j, s2xi[j])
                )
                pos += n_j
    else:
        nll = nll + _field_nll(eff["alpha"], s2a[0], la[0], A.Dc)
        if cfg.fine:
            nll = nll + _iid_nll(eff["xi"], jnp.full(cfg.n_obs, params["sigma2_xi"][0]))
    return nll


# --------------------------------------------------------------------------
# jitted entry points (cached on cfg + array shapes)
# --------------------------------------------------------------------------

_nll_jit = partial(jax.jit, static_argnums=0)(joint_nll_fn)
_grad_u_jit = partial(jax.jit, static_argnums=0)(jax.grad(joint_nll_fn, argnums=2))
_hess_u_jit = partial(jax.jit, static_argnums=0)(
    jax.jacfwd(jax.grad(joint_nll_fn, argnums=2), argnums=2)
)


def _laplace_objective(cfg: StaticCfg, theta_u, u0, A: DataArrays):
    """Laplace-approximated negative marginal log-likelihood.

    ``u0`` is a converged inner mode treated as a constant; one differentiable
    Newton refinement step makes the theta-gradient include the implicit
    derivative of the mode.
    """
    u = u0
    g = jax.grad(joint_nll_fn, argnums=2)(cfg, theta_u, u, A)
    H = jax.jacfwd(jax.grad(joint_nll_fn, argnums=2), argnums=2)(cfg, theta_u, u, A)
    u = u - jnp.linalg.solve(H, g)
    H = jax.jacfwd(jax.grad(joint_nll_fn, argnums=2), argnums=2)(cfg, theta_u, u, A)
    L = jnp.linalg.cholesky(H)
    logdet = 2.0 * jnp.sum(jnp.log(jnp.diag(L)))
    d = u0.shape[0]
    return joint_nll_fn(cfg, theta_u, u, A) + 0.5 * logdet - 0.5 * d * LOG_2PI


_laplace_vg_jit = partial(jax.jit, static_argnums=0)(
    jax.value_and_grad(_laplace_objective, argnums=1)
)
_laplace_val_jit = partial(jax.jit, static_argnums=0)(_laplace_objective)
_nll_theta_vg_jit = partial(jax.jit, static_argnums=0)(
    jax.value_and_grad(joint_nll_fn, argnums=1)
)


def _joint_full_fn(cfg: StaticCfg, z, A: DataArrays):
    nt = layout_size(theta_layout(cfg))
    return joint_nll_fn(cfg, z[:nt], z[nt:], A)


_joint_full_hess_jit = partial(jax.jit, static_argnums=0)(
    jax.jacfwd(jax.grad(_joint_full_fn, argnums=1), argnums=1)
)


# --------------------------------------------------------------------------
# public parameter container
# --------------------------------------------------------------------------

@dataclass
class ParameterVector:
    """Natural-scale parameters of a model variant."""

    beta: np.ndarray
    phi: np.ndarray
    sigma2_alpha: np.ndarray
    l_alpha: np.ndarray
    sigma2_xi: np.ndarray | None = None
    intercepts: np.ndarray | None = None
    psi: list | None = None  # per-survey link parameters (single_index only)

    def to_dict(self) -> dict:
        d = {
            "beta": self.beta.tolist(),
            "phi": self.phi.tolist(),
            "sigma2_alpha": self.sigma2_alpha.tolist(),
            "l_alpha": self.l_alpha.tolist(),
        }
        if self.sigma2_xi is not None:
            d["sigma2_xi"] = self.sigma2_xi.tolist()
        if self.intercepts is not None:
            d["intercepts"] = self.intercepts.tolist()
        if self.psi is not None:
            d["psi"] = [
                p.as_array().tolist()
                if isinstance(p, FourPLParams)
                else {
                    "intercept_coef": p.intercept_coef,
                    "basis_coefs": p.basis_coefs.tolist(),
                    "tau0": p.tau0,
                    "tau1": p.tau1,
                }
                for p in self.psi
            ]
        return d


def parameter_vector(cfg: StaticCfg, theta: dict) -> ParameterVector:
    """Assemble the public container from the named natural-scale dict."""
    theta = {k: np.asarray(v, dtype=float) for k, v in theta.items()}
    psi = None
    intercepts = theta.get("intercepts")
    if cfg.variant == "single_index":
        beta = np.concatenate([[1.0], theta["beta_free"]])
        if cfg.link == "fourpl":
            psi = [
                FourPLParams(
                    gamma1=float(theta["gamma1"][j]),
                    gamma2=float(theta["gamma2"][j]),
                    gamma3=float(theta["gamma3"][j]),
                    gamma4=float(theta["gamma4"][j]),
                )
                for j in range(cfg.m)
            ]
        else:
            coefs = theta["link_coefs"].reshape(cfg.m, cfg.spline_count)
            psi = [
                SplineLinkParams(
                    intercept_coef=float(theta["link_intercept"][j]),
                    basis_coefs=coefs[j],
                    tau0=float(theta["tau0"][j]),
                    tau1=float(theta["tau1"][j]),
                )
                for j in range(cfg.m)
            ]
    elif cfg.variant == "independent":
        beta = theta["beta"].reshape(cfg.m, cfg.p)
    else:
        beta = theta["beta"]
    return ParameterVector(
        beta=beta,
        phi=theta["phi"],
        sigma2_alpha=theta["sigma2_alpha"],
        l_alpha=theta["l_alpha"],
        sigma2_xi=theta.get("sigma2_xi"),
        intercepts=intercepts,
        psi=psi,
    )


# --------------------------------------------------------------------------
# assembly: dataset + spec -> arrays, cfg, callable surface
# --------------------------------------------------------------------------

class ModelAssembly:
    """Binds a dataset and model spec to the jitted likelihood machinery."""

    def __init__(self, dataset: SurveyDataset, spec: ModelSpec):
        if spec.basis_config is None:
            raise ConfigurationError("ModelSpec.basis_config is required for fitting")
        self.dataset = dataset
        self.spec = spec
        m = dataset.n_surveys
        sv = dataset.survey_ids - 1
        bmat = basis_mod.basis_matrix(dataset.coords, spec.basis_config,
                                      warn_uncovered=False)
        dc = basis_mod.centroid_distances(spec.basis_config)
        reference = (spec.reference_survey or 1) - 1

        if spec.variant == "single_index" and spec.link == "ispline":
            knots = tuple(
                make_knots(0.0, 1.0, spec.spline_degree, spec.spline_count).knots
            )
        else:
            knots = ()
        self.cfg = StaticCfg(
            variant=spec.variant,
            link=spec.link,
            p=dataset.n_covariates,
            m=m,
            B=spec.basis_config.n_basis,
            n_obs=dataset.n_obs,
            fine=spec.include_fine_scale,
            reference=reference,
            n_ref=int(np.sum(sv == reference)) if spec.variant == "additive_field" else 0,
            spline_degree=spec.spline_degree,
            spline_count=spec.spline_count,
            spline_knots=knots,
        )
        nonref_idx = ()
        if spec.variant == "additive_field":
            nonref_idx = tuple(
                jnp.asarray(np.flatnonzero(sv == j))
                for j in range(m)
                if j != reference
            )
        self.arrays = DataArrays(
            X=jnp.asarray(dataset.covariates),
            y=jnp.asarray(dataset.counts, dtype=jnp.float64),
            log_off=jnp.asarray(dataset.log_offsets),
            sv=jnp.asarray(sv),
            Bmat=jnp.asarray(bmat),
            Dc=jnp.asarray(dc),
            nonref_idx=nonref_idx,
        )
        self.theta_layout = theta_layout(self.cfg)
        self.n_theta = layout_size(self.theta_layout)
        self.effects_layout = effects_layout(self.cfg)
        self.n_effects = layout_size(self.effects_layout)

    # thin wrappers over the jitted functions -----------------------------
    def joint_nll(self, theta_u, u) -> float:
        return float(_nll_jit(self.cfg, jnp.asarray(theta_u), jnp.asarray(u), self.arrays))

    def joint_grad_u(self, theta_u, u) -> np.ndarray:
        return np.asarray(_grad_u_jit(self.cfg, jnp.asarray(theta_u), jnp.asarray(u), self.arrays))

    def joint_hess_u(self, theta_u, u) -> np.ndarray:
        return np.asarray(_hess_u_jit(self.cfg, jnp.asarray(theta_u), jnp.asarray(u), self.arrays))

    def laplace_value_and_grad(self, theta_u, u_mode) -> tuple[float, np.ndarray]:
        v, g = _laplace_vg_jit(self.cfg, jnp.asarray(theta_u), jnp.asarray(u_mode), self.arrays)
        return float(v), np.asarray(g)

    def nll_value_and_grad_theta(self, theta_u, u) -> tuple[float, np.ndarray]:
        v, g = _nll_theta_vg_jit(self.cfg, jnp.asarray(theta_u), jnp.asarray(u), self.arrays)
        return float(v), np.asarray(g)

    def laplace_value(self, theta_u, u_mode) -> float:
        return float(_laplace_val_jit(self.cfg, jnp.asarray(theta_u), jnp.asarray(u_mode), self.arrays))

    def joint_full_hessian(self, theta_u, u) -> np.ndarray:
        z = jnp.concatenate([jnp.asarray(theta_u), jnp.asarray(u)])
        return np.asarray(_joint_full_hess_jit(self.cfg, z, self.arrays))

    def unpack(self, theta_u) -> dict:
        return {k: np.asarray(v) for k, v in unpack_theta(self.cfg, np.asarray(theta_u), xp=np).items()}

    def pack(self, values: dict) -> np.ndarray:
        return pack_theta(self.cfg, values)

    def eta(self, theta_u, u) -> np.ndarray:
        params = unpack_theta(self.cfg, jnp.asarray(theta_u))
        esl = layout_slices(effects_layout(self.cfg))
        eff = {name: jnp.asarray(u)[s] for name, s in esl.items()}
        return np.asarray(compute_eta(self.cfg, params, eff, self.arrays))
