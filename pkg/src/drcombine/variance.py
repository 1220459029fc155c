"""Variance estimation for the treatment-effect estimators.

Two routes are provided.  The bias-reduced doubly robust estimator gets a
closed-form plug-in variance (a design part plus a model part, `v1_hat` and
`v2_hat`).  Every two-step estimator gets a stacked sandwich: the point
estimate and its fitted nuisances are written as one estimating-equation
system, differentiated analytically, and the usual A-inverse-B-A-inverse
form is collapsed to per-record influence values.  Penalized two-step fits
add the local-quadratic penalty curvature to the nuisance Jacobian.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .data import (
    CombinedDataset,
    ConfigError,
    ModelSpec,
    NumericalError,
    NuisanceParams,
    PenaltyConfig,
)
from .links import predict
from .penalty import lqa_diag
from .scores import DEFAULT_CLIP, _xtwx, outcome_values, score_u, score_u_joint, weight_values

__all__ = [
    "AteReport",
    "TwoStepFit",
    "V2Parts",
    "dr_se",
    "sandwich_penalized",
    "sandwich_unpenalized",
    "v1_hat",
    "v2_hat",
]

Z_95 = 1.959963984540054  # two-sided 95% normal quantile
COND_LIMIT = 1e12


@dataclass(frozen=True)
class AteReport:
    """Point estimate with its uncertainty summary."""

    theta_hat: float
    se: float
    ci_low: float
    ci_high: float
    variance_parts: Dict[str, float]
    estimator: str
    n_used: int
    N: int


@dataclass(frozen=True)
class V2Parts:
    """Model part of the plug-in variance, term by term."""

    s1: float
    s2: float
    s3: float
    s5: float
    s6: float
    total: float


@dataclass(frozen=True)
class TwoStepFit:
    """Fitted nuisances of a two-step estimator, as the sandwich needs them.

    coefs holds full-length coefficient vectors keyed by block name; cols
    optionally restricts a block to the listed design columns (the fit must
    have been computed on exactly those columns).
    """

    coefs: Mapping[str, np.ndarray]
    theta_hat: float
    cols: Optional[Mapping[str, Sequence[int]]] = None

    def active(self, block: str, d: int) -> np.ndarray:
        if self.cols is not None and block in self.cols:
            return np.asarray(self.cols[block], dtype=np.intp)
        return np.arange(d)


# ---------------------------------------------------------------------------
# plug-in variance for the bias-reduced doubly robust estimator


def v1_hat(dataset: CombinedDataset, mu_hat: NuisanceParams, spec: ModelSpec) -> float:
    """Design part: survey-sampling variability of the regression contrast."""
    a = dataset.a_rows
    if a.size == 0:
        return 0.0
    g1, _, g0, _ = outcome_values(dataset, mu_hat.beta, mu_hat.gamma, spec)
    d_a = dataset.d_a
    terms = d_a * (d_a - 1.0) * (g1[a] - g0[a]) ** 2
    return math.fsum(terms.tolist()) / float(dataset.pop_size) ** 2


def v2_hat(
    dataset: CombinedDataset,
    omega_hat: NuisanceParams,
    theta_hat: float,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> V2Parts:
    """Model part: residual-weighting terms and their covariances."""
    a, b = dataset.a_rows, dataset.b_rows
    g1, _, g0, _ = outcome_values(dataset, omega_hat.beta, omega_hat.gamma, spec)
    n_pop2 = float(dataset.pop_size) ** 2
    tb, yb = dataset.t_b, dataset.y_b
    if omega_hat.parameterization == "joint":
        w1, _, w0, _ = weight_values(dataset, omega_hat, spec, clip)
        p1, p0 = w1, w0
    else:
        pib, _, pit, _ = weight_values(dataset, omega_hat, spec, clip)
        p1, p0 = pib * pit, pib * (1.0 - pit)
    term1 = tb * (yb - g1[b]) / p1
    term0 = (1.0 - tb) * (yb - g0[b]) / p0
    contrast_b = g1[b] - g0[b] - theta_hat
    s1 = math.fsum((term1**2).tolist()) / n_pop2
    s2 = math.fsum((term0**2).tolist()) / n_pop2
    s3 = (
        math.fsum((dataset.d_a * (g1[a] - g0[a] - theta_hat) ** 2).tolist()) / n_pop2
        if a.size
        else 0.0
    )
    s5 = 2.0 * math.fsum((term1 * contrast_b).tolist()) / n_pop2
    s6 = -2.0 * math.fsum((term0 * contrast_b).tolist()) / n_pop2
    total = s1 + s2 + s3 + s5 + s6
    if total < 0.0:
        warnings.warn("model variance part is negative; flooring at zero")
        total = 0.0
    return V2Parts(s1=s1, s2=s2, s3=s3, s5=s5, s6=s6, total=total)


def dr_se(
    dataset: CombinedDataset,
    omega_hat: NuisanceParams,
    theta_hat: float,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> AteReport:
    """Plug-in standard error and Wald interval for the doubly robust fit."""
    v1 = v1_hat(dataset, omega_hat, spec)
    v2 = v2_hat(dataset, omega_hat, theta_hat, spec, clip)
    var = v1 + v2.total
    se = math.sqrt(var)
    label = "dr_joint" if omega_hat.parameterization == "joint" else "dr_combined"
    return AteReport(
        theta_hat=theta_hat,
        se=se,
        ci_low=theta_hat - Z_95 * se,
        ci_high=theta_hat + Z_95 * se,
        variance_parts={
            "v1": v1,
            "v2": v2.total,
            "s1": v2.s1,
            "s2": v2.s2,
            "s3": v2.s3,
            "s5": v2.s5,
            "s6": v2.s6,
        },
        estimator=label,
        n_used=dataset.n,
        N=dataset.pop_size,
    )


# ---------------------------------------------------------------------------
# stacked sandwich for the two-step estimators
#
# Blocks are stacked as (theta, nuisances); the nuisance Jacobian is block
# diagonal because each nuisance is fit from its own equations.  Records
# outside either sample ("phantoms") contribute theta to the theta equation
# and zero elsewhere, which enters only the meat's leading entry.


@dataclass
class _Stack:
    psi_theta: np.ndarray  # per-record theta-equation values
    u: np.ndarray  # per-record nuisance scores, shape (n, p)
    c: np.ndarray  # mean derivative of the theta equation in the nuisances
    d_mat: np.ndarray  # mean nuisance Jacobian, shape (p, p)
    divisor: float  # population size (combined) or the B-sample size
    phantoms: int  # population records outside both samples
    blocks: Dict[str, np.ndarray] = field(default_factory=dict)  # per-block col ids


def _block_diag(mats: Sequence[np.ndarray]) -> np.ndarray:
    p = sum(m.shape[0] for m in mats)
    out = np.zeros((p, p))
    at = 0
    for m in mats:
        k = m.shape[0]
        out[at : at + k, at : at + k] = m
        at += k
    return out


def _var_from_stack(stack: _Stack, theta_hat: float) -> float:
    if stack.u.shape[1] == 0:
        influence = stack.psi_theta
    else:
        if not np.all(np.isfinite(stack.d_mat)) or np.linalg.cond(stack.d_mat) > COND_LIMIT:
            raise NumericalError("ill-conditioned nuisance system in sandwich")
        w = np.linalg.solve(stack.d_mat.T, stack.c)
        influence = stack.psi_theta - stack.u @ w
    total = math.fsum((influence**2).tolist()) + stack.phantoms * theta_hat**2
    return total / stack.divisor**2


def _nuisance(fitted: TwoStepFit, block: str, d: int) -> np.ndarray:
    try:
        return np.asarray(fitted.coefs[block], dtype=np.float64)
    except KeyError as exc:
        raise ConfigError(f"sandwich needs a fitted {block!r} block") from exc


def _pieces_combined_dr(
    ds: CombinedDataset, fitted: TwoStepFit, spec: ModelSpec, clip: float
) -> _Stack:
    d = ds.d
    beta, gamma = _nuisance(fitted, "beta", d), _nuisance(fitted, "gamma", d)
    alpha, tau = _nuisance(fitted, "alpha", d), _nuisance(fitted, "tau", d)
    params = NuisanceParams(beta=beta, gamma=gamma, alpha=alpha, tau=tau)
    g1, g1d, g0, g0d = outcome_values(ds, beta, gamma, spec)
    pib, pibd, pit, pitd = weight_values(ds, params, spec, clip)
    a, b = ds.a_rows, ds.b_rows
    xb, tb, yb = ds.x_b, ds.t_b, ds.y_b
    r1, r0 = yb - g1[b], yb - g0[b]

    contrib = np.zeros(ds.n)
    if a.size:
        contrib[a] = ds.d_a * (g1[a] - g0[a])
    contrib[b] = tb * r1 / (pib * pit) - (1.0 - tb) * r0 / (pib * (1.0 - pit))

    ca = fitted.active("alpha", d)
    ct = fitted.active("tau", d)
    cb = fitted.active("beta", d)
    cg = fitted.active("gamma", d)

    u = np.zeros((ds.n, ca.size + ct.size + cb.size + cg.size))
    at = 0
    if a.size:
        u[np.ix_(a, np.arange(ca.size))] = ds.d_a[:, None] * ds.x_a[:, ca]
    u[np.ix_(b, np.arange(ca.size))] += -xb[:, ca] / pib[:, None]
    at += ca.size
    u[np.ix_(b, at + np.arange(ct.size))] = (pit - tb)[:, None] * xb[:, ct]
    at += ct.size
    u[np.ix_(b, at + np.arange(cb.size))] = (tb * (g1[b] - yb))[:, None] * xb[:, cb]
    at += cb.size
    u[np.ix_(b, at + np.arange(cg.size))] = ((1.0 - tb) * (g0[b] - yb))[:, None] * xb[:, cg]

    n_pop = float(ds.pop_size)
    d_mat = _block_diag(
        [
            _xtwx(xb[:, ca], pibd / pib**2) / n_pop,
            _xtwx(xb[:, ct], pitd) / n_pop,
            _xtwx(xb[:, cb], tb * g1d[b]) / n_pop,
            _xtwx(xb[:, cg], (1.0 - tb) * g0d[b]) / n_pop,
        ]
    )
    sv = score_u(ds, params, spec, clip)
    c = -np.concatenate([sv.u_alpha[ca], sv.u_tau[ct], sv.u_beta[cb], sv.u_gamma[cg]])
    return _Stack(
        psi_theta=fitted.theta_hat - contrib,
        u=u,
        c=c,
        d_mat=d_mat,
        divisor=n_pop,
        phantoms=ds.pop_size - ds.n,
        blocks={"alpha": ca, "tau": ct, "beta": cb, "gamma": cg},
    )


def _pieces_ipw_combined(
    ds: CombinedDataset, fitted: TwoStepFit, spec: ModelSpec, clip: float
) -> _Stack:
    d = ds.d
    alpha, tau = _nuisance(fitted, "alpha", d), _nuisance(fitted, "tau", d)
    params = NuisanceParams(beta=np.zeros(d), gamma=np.zeros(d), alpha=alpha, tau=tau)
    pib, pibd, pit, pitd = weight_values(ds, params, spec, clip)
    a, b = ds.a_rows, ds.b_rows
    xb, tb, yb = ds.x_b, ds.t_b, ds.y_b

    contrib = np.zeros(ds.n)
    contrib[b] = tb * yb / (pib * pit) - (1.0 - tb) * yb / (pib * (1.0 - pit))

    ca = fitted.active("alpha", d)
    ct = fitted.active("tau", d)
    u = np.zeros((ds.n, ca.size + ct.size))
    if a.size:
        u[np.ix_(a, np.arange(ca.size))] = ds.d_a[:, None] * ds.x_a[:, ca]
    u[np.ix_(b, np.arange(ca.size))] += -xb[:, ca] / pib[:, None]
    u[np.ix_(b, ca.size + np.arange(ct.size))] = (pit - tb)[:, None] * xb[:, ct]

    n_pop = float(ds.pop_size)
    d_mat = _block_diag(
        [_xtwx(xb[:, ca], pibd / pib**2) / n_pop, _xtwx(xb[:, ct], pitd) / n_pop]
    )
    ratio = pibd / pib**2
    c_alpha = -(xb[:, ca].T @ ((-tb * yb / pit + (1.0 - tb) * yb / (1.0 - pit)) * ratio)) / n_pop
    c_tau = (
        -(xb[:, ct].T @ ((-tb * yb / pit**2 - (1.0 - tb) * yb / (1.0 - pit) ** 2) * pitd / pib))
        / n_pop
    )
    return _Stack(
        psi_theta=fitted.theta_hat - contrib,
        u=u,
        c=np.concatenate([c_alpha, c_tau]),
        d_mat=d_mat,
        divisor=n_pop,
        phantoms=ds.pop_size - ds.n,
        blocks={"alpha": ca, "tau": ct},
    )


def _pieces_or_combined(
    ds: CombinedDataset, fitted: TwoStepFit, spec: ModelSpec, clip: float
) -> _Stack:
    d = ds.d
    beta, gamma = _nuisance(fitted, "beta", d), _nuisance(fitted, "gamma", d)
    g1, g1d, g0, g0d = outcome_values(ds, beta, gamma, spec)
    a, b = ds.a_rows, ds.b_rows
    xb, tb, yb = ds.x_b, ds.t_b, ds.y_b

    contrib = np.zeros(ds.n)
    if a.size:
        contrib[a] = ds.d_a * (g1[a] - g0[a])

    cb = fitted.active("beta", d)
    cg = fitted.active("gamma", d)
    u = np.zeros((ds.n, cb.size + cg.size))
    u[np.ix_(b, np.arange(cb.size))] = (tb * (g1[b] - yb))[:, None] * xb[:, cb]
    u[np.ix_(b, cb.size + np.arange(cg.size))] = ((1.0 - tb) * (g0[b] - yb))[:, None] * xb[:, cg]

    n_pop = float(ds.pop_size)
    d_mat = _block_diag(
        [_xtwx(xb[:, cb], tb * g1d[b]) / n_pop, _xtwx(xb[:, cg], (1.0 - tb) * g0d[b]) / n_pop]
    )
    if a.size:
        c_beta = -(ds.x_a[:, cb].T @ (ds.d_a * g1d[a])) / n_pop
        c_gamma = (ds.x_a[:, cg].T @ (ds.d_a * g0d[a])) / n_pop
    else:
        c_beta, c_gamma = np.zeros(cb.size), np.zeros(cg.size)
    return _Stack(
        psi_theta=fitted.theta_hat - contrib,
        u=u,
        c=np.concatenate([c_beta, c_gamma]),
        d_mat=d_mat,
        divisor=n_pop,
        phantoms=ds.pop_size - ds.n,
        blocks={"beta": cb, "gamma": cg},
    )


def _pieces_ehr(
    ds: CombinedDataset, fitted: TwoStepFit, spec: ModelSpec, clip: float, kind: str
) -> _Stack:
    """Sample-B-only estimators: the B sample is its own target population."""
    d = ds.d
    b = ds.b_rows
    xb, tb, yb = ds.x_b, ds.t_b, ds.y_b
    n_b = float(b.size)
    use_outcome = kind in ("or_nonprob", "dr_nonprob")
    use_treatment = kind in ("ipw_nonprob", "dr_nonprob")

    mats, c_parts, blocks = [], [], {}
    u_cols = []
    if use_outcome:
        beta, gamma = _nuisance(fitted, "beta", d), _nuisance(fitted, "gamma", d)
        e1 = predict(spec, "outcome1", beta, xb)
        e0 = predict(spec, "outcome0", gamma, xb)
        g1, g1d, g0, g0d = e1.value, e1.dvalue, e0.value, e0.dvalue
    if use_treatment:
        tau = _nuisance(fitted, "tau", d)
        pt = predict(spec, "treatment", tau, xb, clip=clip)
        pit, pitd = pt.value, pt.dvalue

    if kind == "or_nonprob":
        contrib = g1 - g0
    elif kind == "ipw_nonprob":
        contrib = tb * yb / pit - (1.0 - tb) * yb / (1.0 - pit)
    else:  # dr_nonprob
        contrib = (
            g1
            - g0
            + tb * (yb - g1) / pit
            - (1.0 - tb) * (yb - g0) / (1.0 - pit)
        )

    if use_treatment:
        ct = fitted.active("tau", d)
        blocks["tau"] = ct
        u_cols.append((pit - tb)[:, None] * xb[:, ct])
        mats.append(_xtwx(xb[:, ct], pitd) / n_b)
        if kind == "ipw_nonprob":
            mult = tb * yb / pit**2 + (1.0 - tb) * yb / (1.0 - pit) ** 2
        else:
            mult = tb * (yb - g1) / pit**2 + (1.0 - tb) * (yb - g0) / (1.0 - pit) ** 2
        c_parts.append((xb[:, ct].T @ (mult * pitd)) / n_b)
    if use_outcome:
        cb = fitted.active("beta", d)
        cg = fitted.active("gamma", d)
        blocks["beta"], blocks["gamma"] = cb, cg
        u_cols.append((tb * (g1 - yb))[:, None] * xb[:, cb])
        u_cols.append(((1.0 - tb) * (g0 - yb))[:, None] * xb[:, cg])
        mats.append(_xtwx(xb[:, cb], tb * g1d) / n_b)
        mats.append(_xtwx(xb[:, cg], (1.0 - tb) * g0d) / n_b)
        if kind == "or_nonprob":
            w1, w0 = np.ones_like(tb), np.ones_like(tb)
        else:
            w1, w0 = 1.0 - tb / pit, 1.0 - (1.0 - tb) / (1.0 - pit)
        c_parts.append(-(xb[:, cb].T @ (w1 * g1d)) / n_b)
        c_parts.append((xb[:, cg].T @ (w0 * g0d)) / n_b)

    u_b = np.hstack(u_cols) if u_cols else np.zeros((int(n_b), 0))
    return _Stack(
        psi_theta=fitted.theta_hat - contrib,
        u=u_b,
        c=np.concatenate(c_parts) if c_parts else np.zeros(0),
        d_mat=_block_diag(mats) if mats else np.zeros((0, 0)),
        divisor=n_b,
        phantoms=0,
        blocks=blocks,
    )


def _pieces_probonly(
    ds: CombinedDataset, fitted: TwoStepFit, spec: ModelSpec, clip: float, kind: str
) -> _Stack:
    """Survey-only estimators: unweighted working fits on sample A."""
    d = ds.d
    a = ds.a_rows
    xa, d_a = ds.x_a, ds.d_a
    ta, ya = ds.t[a], ds.y[a]
    n_pop = float(ds.pop_size)
    use_outcome = kind in ("or_probonly", "dr_probonly")
    use_treatment = kind in ("ipw_probonly", "dr_probonly")

    if use_outcome:
        beta, gamma = _nuisance(fitted, "beta", d), _nuisance(fitted, "gamma", d)
        e1 = predict(spec, "outcome1", beta, xa)
        e0 = predict(spec, "outcome0", gamma, xa)
        g1, g1d, g0, g0d = e1.value, e1.dvalue, e0.value, e0.dvalue
    if use_treatment:
        tau = _nuisance(fitted, "tau", d)
        pt = predict(spec, "treatment", tau, xa, clip=clip)
        pit, pitd = pt.value, pt.dvalue

    if kind == "or_probonly":
        inner = g1 - g0
    elif kind == "ipw_probonly":
        inner = ta * ya / pit - (1.0 - ta) * ya / (1.0 - pit)
    else:
        inner = g1 - g0 + ta * (ya - g1) / pit - (1.0 - ta) * (ya - g0) / (1.0 - pit)

    contrib = np.zeros(ds.n)
    contrib[a] = d_a * inner

    mats, c_parts, blocks, u_cols = [], [], {}, []
    if use_treatment:
        ct = fitted.active("tau", d)
        blocks["tau"] = ct
        u_cols.append((pit - ta)[:, None] * xa[:, ct])
        mats.append(_xtwx(xa[:, ct], pitd) / n_pop)
        if kind == "ipw_probonly":
            mult = ta * ya / pit**2 + (1.0 - ta) * ya / (1.0 - pit) ** 2
        else:
            mult = ta * (ya - g1) / pit**2 + (1.0 - ta) * (ya - g0) / (1.0 - pit) ** 2
        c_parts.append((xa[:, ct].T @ (d_a * mult * pitd)) / n_pop)
    if use_outcome:
        cb = fitted.active("beta", d)
        cg = fitted.active("gamma", d)
        blocks["beta"], blocks["gamma"] = cb, cg
        u_cols.append((ta * (g1 - ya))[:, None] * xa[:, cb])
        u_cols.append(((1.0 - ta) * (g0 - ya))[:, None] * xa[:, cg])
        mats.append(_xtwx(xa[:, cb], ta * g1d) / n_pop)
        mats.append(_xtwx(xa[:, cg], (1.0 - ta) * g0d) / n_pop)
        if kind == "or_probonly":
            w1, w0 = np.ones_like(ta), np.ones_like(ta)
        else:
            w1, w0 = 1.0 - ta / pit, 1.0 - (1.0 - ta) / (1.0 - pit)
        c_parts.append(-(xa[:, cb].T @ (d_a * w1 * g1d)) / n_pop)
        c_parts.append((xa[:, cg].T @ (d_a * w0 * g0d)) / n_pop)

    u_a = np.hstack(u_cols) if u_cols else np.zeros((a.size, 0))
    u = np.zeros((ds.n, u_a.shape[1]))
    u[a] = u_a
    return _Stack(
        psi_theta=fitted.theta_hat - contrib,
        u=u,
        c=np.concatenate(c_parts) if c_parts else np.zeros(0),
        d_mat=_block_diag(mats) if mats else np.zeros((0, 0)),
        divisor=n_pop,
        phantoms=ds.pop_size - ds.n,
        blocks=blocks,
    )


def _build_stack(
    dataset: CombinedDataset, kind: str, fitted: TwoStepFit, spec: ModelSpec, clip: float
) -> _Stack:
    if kind in ("dr_combined", "oracle_dr"):
        return _pieces_combined_dr(dataset, fitted, spec, clip)
    if kind == "ipw_combined":
        return _pieces_ipw_combined(dataset, fitted, spec, clip)
    if kind == "or_combined":
        return _pieces_or_combined(dataset, fitted, spec, clip)
    if kind in ("or_nonprob", "naive_nonprob", "mean_diff_nonprob"):
        return _pieces_ehr(dataset, fitted, spec, clip, "or_nonprob")
    if kind in ("ipw_nonprob", "dr_nonprob"):
        return _pieces_ehr(dataset, fitted, spec, clip, kind)
    if kind in ("or_probonly", "ipw_probonly", "dr_probonly"):
        return _pieces_probonly(dataset, fitted, spec, clip, kind)
    raise ConfigError(f"no sandwich form for estimator {kind!r}")


def sandwich_unpenalized(
    dataset: CombinedDataset,
    psi_spec: str,
    fitted: TwoStepFit,
    spec: ModelSpec = ModelSpec(),
    clip: float = DEFAULT_CLIP,
) -> float:
    """Standard error of a two-step estimator from its stacked system."""
    stack = _build_stack(dataset, psi_spec, fitted, spec, clip)
    return math.sqrt(_var_from_stack(stack, fitted.theta_hat))


def sandwich_penalized(
    dataset: CombinedDataset,
    psi_spec: str,
    fitted: TwoStepFit,
    lam: float,
    config: PenaltyConfig = PenaltyConfig(),
    spec: ModelSpec = ModelSpec(),
) -> float:
    """Standard error of a penalized two-step fit.

    The nuisance Jacobian is augmented with the local-quadratic penalty
    curvature at the fitted coefficients, so coefficients shrunk to zero stop
    propagating uncertainty.  At lam == 0 this reduces exactly to the
    unpenalized sandwich.
    """
    if psi_spec not in ("or_combined", "ipw_combined"):
        raise ConfigError(f"penalized sandwich is defined for the or/ipw routes, not {psi_spec!r}")
    stack = _build_stack(dataset, psi_spec, fitted, spec, config.prob_clip)
    entries = []
    for block, cols in stack.blocks.items():
        coef = np.asarray(fitted.coefs[block], dtype=np.float64)[cols]
        diag = lqa_diag(coef, lam, config.a, config.epsilon).entries
        diag[0] = 0.0  # the intercept leads each active set and is never penalized
        entries.append(diag)
    e_n = np.diag(np.concatenate(entries)) if entries else np.zeros((0, 0))
    stack.d_mat = stack.d_mat + e_n
    return math.sqrt(_var_from_stack(stack, fitted.theta_hat))
