"""Treatment-effect estimators over the combined two-sample design.

Provides:
  * closed-form point estimators given fitted nuisances (`estimate_or`,
    `estimate_ipw`, `estimate_dr`, `estimate_dr_joint`, `mean_diff`),
  * plain and penalized working-model fits (per-arm regressions, logistic
    treatment models, and the survey-calibration selection model),
  * `estimate_roster`, one entry point dispatching every supported estimator
    kind to its fitting route and variance formula.

Roster kinds and their data requirements:
  combined (need both samples) .... dr_combined, ipw_combined, or_combined,
                                    dr_joint, oracle_dr
  sample B only ................... naive_nonprob, or_nonprob, ipw_nonprob,
                                    dr_nonprob, mean_diff_nonprob
  survey only (needs t, y on A) ... or_probonly, ipw_probonly, dr_probonly
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .data import (
    CombinedDataset,
    ConfigError,
    DataError,
    ModelSpec,
    NuisanceParams,
    PenaltyConfig,
)
from .links import expit, predict
from .scores import DEFAULT_CLIP, _xtwx, outcome_values, weight_values
from .solver import (
    CV_FOLDS,
    GRID_SIZE,
    GRID_SPAN,
    _fold_assignment,
    fit_penalized,
    lqa_solve,
    solve_penalized,
)
from .variance import AteReport, TwoStepFit, Z_95, dr_se, sandwich_penalized, sandwich_unpenalized

__all__ = [
    "KINDS",
    "RosterConfig",
    "estimate_dr",
    "estimate_dr_joint",
    "estimate_ipw",
    "estimate_or",
    "estimate_roster",
    "estimate_with_details",
    "mean_diff",
]

KINDS = (
    "dr_combined",
    "ipw_combined",
    "or_combined",
    "dr_joint",
    "oracle_dr",
    "naive_nonprob",
    "or_nonprob",
    "ipw_nonprob",
    "dr_nonprob",
    "mean_diff_nonprob",
    "or_probonly",
    "ipw_probonly",
    "dr_probonly",
)

_PENALIZED_KINDS = ("dr_combined", "ipw_combined", "or_combined", "dr_joint")


@dataclass(frozen=True)
class RosterConfig:
    """Everything a roster route may need beyond the dataset itself."""

    spec: ModelSpec = ModelSpec()
    penalized: bool = False
    penalty: PenaltyConfig = PenaltyConfig()
    seed: int = 0
    grid_eta: Optional[Sequence[float]] = None  # bias-reduced eta-penalty grid
    grid_mu: Optional[Sequence[float]] = None  # bias-reduced mu-penalty grid
    grid_shared: Optional[Sequence[float]] = None  # shared grid for or/ipw routes
    compute_se: bool = True
    true_support: Optional[Mapping[str, Sequence[int]]] = None  # oracle route only


# ---------------------------------------------------------------------------
# point estimators given fitted nuisances


def estimate_or(dataset: CombinedDataset, mu_hat: NuisanceParams, spec: ModelSpec) -> float:
    """Survey-weighted mean of the fitted arm contrast."""
    a = dataset.a_rows
    if a.size == 0:
        raise DataError("outcome-regression estimator needs survey rows")
    g1, _, g0, _ = outcome_values(dataset, mu_hat.beta, mu_hat.gamma, spec)
    return math.fsum((dataset.d_a * (g1[a] - g0[a])).tolist()) / float(dataset.pop_size)


def estimate_ipw(
    dataset: CombinedDataset,
    eta_hat: NuisanceParams,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> float:
    """Inverse-weighted mean over sample B, scaled to the population."""
    if eta_hat.parameterization != "conditional":
        raise ConfigError("estimate_ipw expects selection/treatment weights")
    if dataset.b_rows.size == 0:
        raise DataError("inverse-weighted estimator needs sample-B rows")
    pib, _, pit, _ = weight_values(dataset, eta_hat, spec, clip)
    tb, yb = dataset.t_b, dataset.y_b
    terms = tb * yb / (pib * pit) - (1.0 - tb) * yb / (pib * (1.0 - pit))
    return math.fsum(terms.tolist()) / float(dataset.pop_size)


def estimate_dr(
    dataset: CombinedDataset,
    omega_hat: NuisanceParams,
    theta_free: Optional[float] = None,
    spec: ModelSpec = ModelSpec(),
    clip: float = DEFAULT_CLIP,
) -> float:
    """Doubly robust combination; its estimating equation is linear in the
    effect, so the root is closed-form and theta_free is ignored."""
    if omega_hat.parameterization != "conditional":
        raise ConfigError("estimate_dr expects selection/treatment weights; see estimate_dr_joint")
    del theta_free
    g1, _, g0, _ = outcome_values(dataset, omega_hat.beta, omega_hat.gamma, spec)
    a, b = dataset.a_rows, dataset.b_rows
    parts = []
    if a.size:
        parts.extend((dataset.d_a * (g1[a] - g0[a])).tolist())
    if b.size:
        pib, _, pit, _ = weight_values(dataset, omega_hat, spec, clip)
        tb, yb = dataset.t_b, dataset.y_b
        r1, r0 = yb - g1[b], yb - g0[b]
        parts.extend((tb * r1 / (pib * pit) - (1.0 - tb) * r0 / (pib * (1.0 - pit))).tolist())
    return math.fsum(parts) / float(dataset.pop_size)


def estimate_dr_joint(
    dataset: CombinedDataset,
    params_joint: NuisanceParams,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> float:
    """Doubly robust combination under joint membership-arm weights."""
    if params_joint.parameterization != "joint":
        raise ConfigError("estimate_dr_joint expects joint weights")
    g1, _, g0, _ = outcome_values(dataset, params_joint.beta, params_joint.gamma, spec)
    a, b = dataset.a_rows, dataset.b_rows
    parts = []
    if a.size:
        parts.extend((dataset.d_a * (g1[a] - g0[a])).tolist())
    if b.size:
        w1, _, w0, _ = weight_values(dataset, params_joint, spec, clip)
        tb, yb = dataset.t_b, dataset.y_b
        parts.extend((tb * (yb - g1[b]) / w1 - (1.0 - tb) * (yb - g0[b]) / w0).tolist())
    return math.fsum(parts) / float(dataset.pop_size)


def mean_diff(dataset: CombinedDataset) -> float:
    """Raw treated-minus-control mean over sample B."""
    tb, yb = dataset.t_b, dataset.y_b
    n1 = math.fsum(tb.tolist())
    n0 = tb.size - n1
    if n1 == 0 or n0 == 0:
        raise DataError("sample B lacks one treatment arm")
    return math.fsum((tb * yb).tolist()) / n1 - math.fsum(((1.0 - tb) * yb).tolist()) / n0


# ---------------------------------------------------------------------------
# working-model fits


def _clipped_logit(p: float) -> float:
    p = min(max(p, 1e-6), 1.0 - 1e-6)
    return math.log(p / (1.0 - p))


def _fit_glm(
    x: np.ndarray,
    y: np.ndarray,
    link: str,
    lam: float = 0.0,
    config: PenaltyConfig = PenaltyConfig(),
    divisor: Optional[float] = None,
) -> np.ndarray:
    """One regression fit, optionally penalized; returns the coefficients."""
    if x.shape[0] == 0:
        raise DataError("regression fit got an empty design")
    div = float(divisor if divisor is not None else x.shape[0])
    start = np.zeros(x.shape[1])
    if link == "identity":
        gram = x.T @ x / div

        def score(v):
            return x.T @ (x @ v - y) / div

        def jac(v):
            return gram

        start[0] = float(np.mean(y))
    else:

        def score(v):
            return x.T @ (expit(x @ v) - y) / div

        def jac(v):
            p = expit(x @ v)
            return _xtwx(x, p * (1.0 - p)) / div

        start[0] = _clipped_logit(float(np.mean(y)))
    return lqa_solve(score, jac, start, lam, config, intercept_idx=(0,))


def _calibration_system(
    ds: CombinedDataset, cols: np.ndarray, divisor: float
) -> Tuple[Callable, Callable, np.ndarray]:
    """Selection model matching weighted survey totals to lifted B totals."""
    xa, xb = ds.x_a[:, cols], ds.x_b[:, cols]
    target = xa.T @ ds.d_a
    start = np.zeros(cols.size)
    start[0] = _clipped_logit(ds.b_rows.size / float(ds.pop_size))

    def score(v):
        inv_pi = 1.0 + np.exp(-(xb @ v))
        return (target - xb.T @ inv_pi) / divisor

    def jac(v):
        return _xtwx(xb, np.exp(-(xb @ v))) / divisor

    return score, jac, start


def _fit_calibration(
    ds: CombinedDataset,
    lam: float = 0.0,
    config: PenaltyConfig = PenaltyConfig(),
    cols: Optional[np.ndarray] = None,
    divisor: Optional[float] = None,
) -> np.ndarray:
    if ds.a_rows.size == 0 or ds.b_rows.size == 0:
        raise DataError("calibration fit needs both samples")
    cols = cols if cols is not None else np.arange(ds.d)
    div = float(divisor if divisor is not None else ds.pop_size)
    score, jac, start = _calibration_system(ds, cols, div)
    return lqa_solve(score, jac, start, lam, config, intercept_idx=(0,))


def _embed(coef: np.ndarray, cols: np.ndarray, d: int) -> np.ndarray:
    full = np.zeros(d)
    full[cols] = coef
    return full


def _arm_designs(ds: CombinedDataset) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    m1 = ds.t_b == 1.0
    if not m1.any() or m1.all():
        raise DataError("sample B lacks one treatment arm")
    return ds.x_b[m1], ds.y_b[m1], ds.x_b[~m1], ds.y_b[~m1]


def _cols_from_support(
    true_support: Mapping[str, Sequence[int]], block: str, d: int
) -> np.ndarray:
    slopes = [int(j) for j in true_support.get(block, ())]
    bad = [j for j in slopes if j < 1 or j >= d]
    if bad:
        raise ConfigError(f"true support for {block!r} has out-of-range columns {bad}")
    return np.array([0] + sorted(set(slopes)), dtype=np.intp)


def _fit_two_step(
    ds: CombinedDataset,
    spec: ModelSpec,
    cols: Optional[Mapping[str, np.ndarray]] = None,
) -> Dict[str, np.ndarray]:
    """Separate unpenalized fits for each nuisance block (combined design)."""
    d = ds.d
    all_cols = np.arange(d)
    get = (lambda k: cols.get(k, all_cols)) if cols is not None else (lambda k: all_cols)
    x1, y1, x0, y0 = _arm_designs(ds)
    ca, ct, cb, cg = get("alpha"), get("tau"), get("beta"), get("gamma")
    return {
        "alpha": _embed(_fit_calibration(ds, cols=ca), ca, d),
        "tau": _embed(_fit_glm(ds.x_b[:, ct], ds.t_b, "logit"), ct, d),
        "beta": _embed(_fit_glm(x1[:, cb], y1, spec.outcome_link), cb, d),
        "gamma": _embed(_fit_glm(x0[:, cg], y0, spec.outcome_link), cg, d),
    }


def _threshold_vector(coef: np.ndarray, cutoff: float) -> np.ndarray:
    out = coef.copy()
    small = np.abs(out) < cutoff
    small[0] = False
    out[small] = 0.0
    return out


# ---------------------------------------------------------------------------
# shared-penalty tuning for the or/ipw combined routes


def _shared_grid(init_scores: Sequence[np.ndarray], size: int = GRID_SIZE) -> np.ndarray:
    lam_max = max(max(float(np.max(np.abs(s))) for s in init_scores), 1e-8)
    return np.geomspace(lam_max / GRID_SPAN, lam_max, size)


def _pick_larger_tie(grid: np.ndarray, losses: np.ndarray) -> float:
    best = len(grid) - 1 - int(np.argmin(losses[::-1]))
    return float(grid[best])


def _cv_or_shared(
    ds: CombinedDataset,
    spec: ModelSpec,
    config: PenaltyConfig,
    seed: int,
    grid: Optional[Sequence[float]],
) -> Tuple[float, np.ndarray, np.ndarray]:
    x1, y1, x0, y0 = _arm_designs(ds)
    n_pop = float(ds.pop_size)
    if grid is None:
        s1 = x1.T @ (y1 - np.mean(y1)) / n_pop
        s0 = x0.T @ (y0 - np.mean(y0)) / n_pop
        grid = _shared_grid([s1, s0])
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    fold_ids = _fold_assignment(ds, seed, CV_FOLDS)
    losses = np.zeros((CV_FOLDS, len(grid)))
    for f in range(CV_FOLDS):
        try:
            train = ds.subset(np.flatnonzero(fold_ids != f))
            val = ds.subset(np.flatnonzero(fold_ids == f))
        except DataError as exc:
            raise DataError("degenerate fold; reduce folds or enlarge data") from exc
        if train.b_rows.size == 0 or val.b_rows.size == 0:
            raise DataError("degenerate fold; reduce folds or enlarge data")
        tx1, ty1, tx0, ty0 = _arm_designs(train)
        vx1, vy1, vx0, vy0 = _arm_designs(val)
        n_val = float(val.pop_size)
        for g, lam in enumerate(grid):
            beta = _fit_glm(tx1, ty1, spec.outcome_link, float(lam), config, train.pop_size)
            gamma = _fit_glm(tx0, ty0, spec.outcome_link, float(lam), config, train.pop_size)
            r1 = _arm_residual(vx1, vy1, beta, spec.outcome_link)
            r0 = _arm_residual(vx0, vy0, gamma, spec.outcome_link)
            losses[f, g] = float(
                np.sum((vx1.T @ r1 / n_val) ** 2) + np.sum((vx0.T @ r0 / n_val) ** 2)
            )
    means = losses.mean(axis=0)
    return _pick_larger_tie(grid, means), grid, means


def _arm_residual(x: np.ndarray, y: np.ndarray, coef: np.ndarray, link: str) -> np.ndarray:
    fit = x @ coef if link == "identity" else expit(x @ coef)
    return fit - y


def _cv_ipw_shared(
    ds: CombinedDataset,
    spec: ModelSpec,
    config: PenaltyConfig,
    seed: int,
    grid: Optional[Sequence[float]],
) -> Tuple[float, np.ndarray, np.ndarray]:
    n_pop = float(ds.pop_size)
    if grid is None:
        score_a, _, start_a = _calibration_system(ds, np.arange(ds.d), n_pop)
        tbar = float(np.mean(ds.t_b))
        s_tau = ds.x_b.T @ (tbar - ds.t_b) / n_pop
        grid = _shared_grid([score_a(start_a), s_tau])
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    fold_ids = _fold_assignment(ds, seed, CV_FOLDS)
    losses = np.zeros((CV_FOLDS, len(grid)))
    for f in range(CV_FOLDS):
        try:
            train = ds.subset(np.flatnonzero(fold_ids != f))
            val = ds.subset(np.flatnonzero(fold_ids == f))
        except DataError as exc:
            raise DataError("degenerate fold; reduce folds or enlarge data") from exc
        if train.b_rows.size == 0 or val.b_rows.size == 0:
            raise DataError("degenerate fold; reduce folds or enlarge data")
        val_score, _, _ = _calibration_system(val, np.arange(ds.d), float(val.pop_size))
        for g, lam in enumerate(grid):
            alpha = _fit_calibration(train, float(lam), config)
            tau = _fit_glm(train.x_b, train.t_b, "logit", float(lam), config, train.pop_size)
            r_tau = val.x_b.T @ (expit(val.x_b @ tau) - val.t_b) / float(val.pop_size)
            losses[f, g] = float(np.sum(val_score(alpha) ** 2) + np.sum(r_tau**2))
    means = losses.mean(axis=0)
    return _pick_larger_tie(grid, means), grid, means


# ---------------------------------------------------------------------------
# roster dispatch


def _report(
    theta: float,
    se: float,
    parts: Dict[str, float],
    kind: str,
    n_used: int,
    n_pop: int,
) -> AteReport:
    if math.isnan(se):
        lo = hi = math.nan
    else:
        lo, hi = theta - Z_95 * se, theta + Z_95 * se
    return AteReport(
        theta_hat=theta,
        se=se,
        ci_low=lo,
        ci_high=hi,
        variance_parts=parts,
        estimator=kind,
        n_used=n_used,
        N=n_pop,
    )


def _require_combined(ds: CombinedDataset) -> None:
    if ds.a_rows.size == 0 or ds.b_rows.size == 0:
        raise DataError("combined estimators need both samples")


def _require_survey_outcomes(ds: CombinedDataset) -> None:
    a = ds.a_rows
    if a.size == 0:
        raise DataError("survey-only estimators need sample-A rows")
    if np.isnan(ds.t[a]).any() or np.isnan(ds.y[a]).any():
        raise DataError("survey-only estimators need treatment and outcome on sample A")


def _route_dr_combined(ds: CombinedDataset, cfg: RosterConfig):
    _require_combined(ds)
    spec = cfg.spec
    if cfg.penalized:
        fit, cv = fit_penalized(ds, spec, cfg.penalty, cfg.seed, cfg.grid_eta, cfg.grid_mu)
        theta = estimate_dr(ds, fit.omega_hat, None, spec, cfg.penalty.prob_clip)
        if cfg.compute_se:
            rep = dr_se(ds, fit.omega_hat, theta, spec, cfg.penalty.prob_clip)
            report = replace(rep, estimator="dr_combined")
        else:
            report = _report(theta, math.nan, {}, "dr_combined", ds.n, ds.pop_size)
        return report, {"fit": fit, "cv": cv, "coefs": fit.omega_hat}
    coefs = _fit_two_step(ds, spec)
    params = NuisanceParams(
        beta=coefs["beta"], gamma=coefs["gamma"], alpha=coefs["alpha"], tau=coefs["tau"]
    )
    theta = estimate_dr(ds, params, None, spec)
    fitted = TwoStepFit(coefs=coefs, theta_hat=theta)
    se = sandwich_unpenalized(ds, "dr_combined", fitted, spec) if cfg.compute_se else math.nan
    return (
        _report(theta, se, {"sandwich": se**2}, "dr_combined", ds.n, ds.pop_size),
        {"coefs": params},
    )


def _route_oracle_dr(ds: CombinedDataset, cfg: RosterConfig):
    _require_combined(ds)
    if cfg.true_support is None:
        raise ConfigError("oracle_dr needs the true support in the roster config")
    d = ds.d
    cols = {k: _cols_from_support(cfg.true_support, k, d) for k in ("alpha", "tau", "beta", "gamma")}
    coefs = _fit_two_step(ds, cfg.spec, cols)
    params = NuisanceParams(
        beta=coefs["beta"], gamma=coefs["gamma"], alpha=coefs["alpha"], tau=coefs["tau"]
    )
    theta = estimate_dr(ds, params, None, cfg.spec)
    fitted = TwoStepFit(coefs=coefs, theta_hat=theta, cols=cols)
    se = sandwich_unpenalized(ds, "oracle_dr", fitted, cfg.spec) if cfg.compute_se else math.nan
    return (
        _report(theta, se, {"sandwich": se**2}, "oracle_dr", ds.n, ds.pop_size),
        {"coefs": params},
    )


def _route_dr_joint(ds: CombinedDataset, cfg: RosterConfig):
    _require_combined(ds)
    spec = cfg.spec
    if spec.parameterization != "joint":
        raise ConfigError("dr_joint needs a joint model spec")
    if cfg.penalized:
        fit, cv = fit_penalized(ds, spec, cfg.penalty, cfg.seed, cfg.grid_eta, cfg.grid_mu)
    else:
        fit = solve_penalized(ds, spec, (0.0, 0.0), cfg.penalty)
        cv = None
    theta = estimate_dr_joint(ds, fit.omega_hat, spec, cfg.penalty.prob_clip)
    if cfg.compute_se:
        rep = dr_se(ds, fit.omega_hat, theta, spec, cfg.penalty.prob_clip)
        report = replace(rep, estimator="dr_joint")
    else:
        report = _report(theta, math.nan, {}, "dr_joint", ds.n, ds.pop_size)
    return report, {"fit": fit, "cv": cv, "coefs": fit.omega_hat}


def _route_ipw_combined(ds: CombinedDataset, cfg: RosterConfig):
    _require_combined(ds)
    spec = cfg.spec
    lam = 0.0
    if cfg.penalized:
        lam, _, _ = _cv_ipw_shared(ds, spec, cfg.penalty, cfg.seed, cfg.grid_shared)
    alpha = _fit_calibration(ds, lam, cfg.penalty)
    tau = _fit_glm(ds.x_b, ds.t_b, "logit", lam, cfg.penalty, ds.pop_size)
    if cfg.penalized:
        alpha = _threshold_vector(alpha, cfg.penalty.zero_threshold)
        tau = _threshold_vector(tau, cfg.penalty.zero_threshold)
    d = ds.d
    params = NuisanceParams(beta=np.zeros(d), gamma=np.zeros(d), alpha=alpha, tau=tau)
    theta = estimate_ipw(ds, params, spec, cfg.penalty.prob_clip)
    fitted = TwoStepFit(coefs={"alpha": alpha, "tau": tau}, theta_hat=theta)
    if not cfg.compute_se:
        se = math.nan
    elif cfg.penalized:
        se = sandwich_penalized(ds, "ipw_combined", fitted, lam, cfg.penalty, spec)
    else:
        se = sandwich_unpenalized(ds, "ipw_combined", fitted, spec)
    return (
        _report(theta, se, {"sandwich": se**2}, "ipw_combined", ds.n, ds.pop_size),
        {"coefs": params, "lambda": lam},
    )


def _route_or_combined(ds: CombinedDataset, cfg: RosterConfig):
    _require_combined(ds)
    spec = cfg.spec
    x1, y1, x0, y0 = _arm_designs(ds)
    lam = 0.0
    if cfg.penalized:
        lam, _, _ = _cv_or_shared(ds, spec, cfg.penalty, cfg.seed, cfg.grid_shared)
        beta = _fit_glm(x1, y1, spec.outcome_link, lam, cfg.penalty, ds.pop_size)
        gamma = _fit_glm(x0, y0, spec.outcome_link, lam, cfg.penalty, ds.pop_size)
        beta = _threshold_vector(beta, cfg.penalty.zero_threshold)
        gamma = _threshold_vector(gamma, cfg.penalty.zero_threshold)
    else:
        beta = _fit_glm(x1, y1, spec.outcome_link)
        gamma = _fit_glm(x0, y0, spec.outcome_link)
    d = ds.d
    params = NuisanceParams(beta=beta, gamma=gamma, alpha=np.zeros(d), tau=np.zeros(d))
    theta = estimate_or(ds, params, spec)
    fitted = TwoStepFit(coefs={"beta": beta, "gamma": gamma}, theta_hat=theta)
    if not cfg.compute_se:
        se = math.nan
    elif cfg.penalized:
        se = sandwich_penalized(ds, "or_combined", fitted, lam, cfg.penalty, spec)
    else:
        se = sandwich_unpenalized(ds, "or_combined", fitted, spec)
    return (
        _report(theta, se, {"sandwich": se**2}, "or_combined", ds.n, ds.pop_size),
        {"coefs": params, "lambda": lam},
    )


def _route_nonprob(ds: CombinedDataset, cfg: RosterConfig, kind: str):
    b = ds.b_rows
    if b.size == 0:
        raise DataError("sample-B-only estimators need sample-B rows")
    spec = cfg.spec
    n_b = b.size
    coefs: Dict[str, np.ndarray] = {}
    cols = None
    if kind == "mean_diff_nonprob":
        # a raw mean difference is the intercept-only regression contrast
        cols = {"beta": np.array([0]), "gamma": np.array([0])}
        x1, y1, x0, y0 = _arm_designs(ds)
        coefs["beta"] = _embed(_fit_glm(x1[:, :1], y1, spec.outcome_link), np.array([0]), ds.d)
        coefs["gamma"] = _embed(_fit_glm(x0[:, :1], y0, spec.outcome_link), np.array([0]), ds.d)
        theta = mean_diff(ds)
    else:
        if kind in ("naive_nonprob", "or_nonprob", "dr_nonprob"):
            x1, y1, x0, y0 = _arm_designs(ds)
            coefs["beta"] = _fit_glm(x1, y1, spec.outcome_link)
            coefs["gamma"] = _fit_glm(x0, y0, spec.outcome_link)
        if kind in ("ipw_nonprob", "dr_nonprob"):
            coefs["tau"] = _fit_glm(ds.x_b, ds.t_b, "logit")
        xb, tb, yb = ds.x_b, ds.t_b, ds.y_b
        if kind in ("naive_nonprob", "or_nonprob", "dr_nonprob"):
            g1 = predict(spec, "outcome1", coefs["beta"], xb).value
            g0 = predict(spec, "outcome0", coefs["gamma"], xb).value
        if kind in ("ipw_nonprob", "dr_nonprob"):
            pit = predict(spec, "treatment", coefs["tau"], xb, clip=cfg.penalty.prob_clip).value
        if kind in ("naive_nonprob", "or_nonprob"):
            vals = g1 - g0
        elif kind == "ipw_nonprob":
            vals = tb * yb / pit - (1.0 - tb) * yb / (1.0 - pit)
        else:
            vals = g1 - g0 + tb * (yb - g1) / pit - (1.0 - tb) * (yb - g0) / (1.0 - pit)
        theta = math.fsum(vals.tolist()) / n_b
    fitted = TwoStepFit(coefs=coefs, theta_hat=theta, cols=cols)
    se = sandwich_unpenalized(ds, kind, fitted, spec) if cfg.compute_se else math.nan
    return (
        _report(theta, se, {"sandwich": se**2}, kind, n_b, ds.pop_size),
        {"coefs": coefs},
    )


def _route_probonly(ds: CombinedDataset, cfg: RosterConfig, kind: str):
    _require_survey_outcomes(ds)
    spec = cfg.spec
    a = ds.a_rows
    xa, d_a = ds.x_a, ds.d_a
    ta, ya = ds.t[a], ds.y[a]
    m1 = ta == 1.0
    if not m1.any() or m1.all():
        raise DataError("sample A lacks one treatment arm")
    coefs: Dict[str, np.ndarray] = {}
    if kind in ("or_probonly", "dr_probonly"):
        coefs["beta"] = _fit_glm(xa[m1], ya[m1], spec.outcome_link)
        coefs["gamma"] = _fit_glm(xa[~m1], ya[~m1], spec.outcome_link)
        g1 = predict(spec, "outcome1", coefs["beta"], xa).value
        g0 = predict(spec, "outcome0", coefs["gamma"], xa).value
    if kind in ("ipw_probonly", "dr_probonly"):
        coefs["tau"] = _fit_glm(xa, ta, "logit")
        pit = predict(spec, "treatment", coefs["tau"], xa, clip=cfg.penalty.prob_clip).value
    if kind == "or_probonly":
        inner = g1 - g0
    elif kind == "ipw_probonly":
        inner = ta * ya / pit - (1.0 - ta) * ya / (1.0 - pit)
    else:
        inner = g1 - g0 + ta * (ya - g1) / pit - (1.0 - ta) * (ya - g0) / (1.0 - pit)
    theta = math.fsum((d_a * inner).tolist()) / float(ds.pop_size)
    fitted = TwoStepFit(coefs=coefs, theta_hat=theta)
    se = sandwich_unpenalized(ds, kind, fitted, spec) if cfg.compute_se else math.nan
    return (
        _report(theta, se, {"sandwich": se**2}, kind, int(a.size), ds.pop_size),
        {"coefs": coefs},
    )


def estimate_with_details(
    dataset: CombinedDataset, kind: str, config: RosterConfig = RosterConfig()
) -> Tuple[AteReport, dict]:
    """Run one roster estimator; also return its fitted internals."""
    if kind not in KINDS:
        raise ConfigError(f"unknown estimator kind {kind!r}")
    if config.penalized and kind not in _PENALIZED_KINDS:
        raise ConfigError(f"estimator {kind!r} has no penalized variant")
    if kind == "dr_combined":
        return _route_dr_combined(dataset, config)
    if kind == "dr_joint":
        return _route_dr_joint(dataset, config)
    if kind == "oracle_dr":
        return _route_oracle_dr(dataset, config)
    if kind == "ipw_combined":
        return _route_ipw_combined(dataset, config)
    if kind == "or_combined":
        return _route_or_combined(dataset, config)
    if kind.endswith("_nonprob"):
        return _route_nonprob(dataset, kind=kind, cfg=config)
    return _route_probonly(dataset, kind=kind, cfg=config)


def estimate_roster(
    dataset: CombinedDataset, kind: str, config: RosterConfig = RosterConfig()
) -> AteReport:
    """Point estimate, standard error, and Wald interval for one kind."""
    report, _ = estimate_with_details(dataset, kind, config)
    return report
