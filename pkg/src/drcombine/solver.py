"""Alternating block solver for the penalized bias-reduced system.

The estimating system splits into two square half-systems: the outcome-block
equations estimate the weighting coefficients (eta) and the weighting-block
equations estimate the outcome coefficients (mu).  Each half is solved by
Newton-Raphson on its local-quadratic-approximation (LQA) penalized form —
one damped step per anchoring of the quadratic surrogate, warm-started at
the unpenalized root — and the two halves alternate until the block updates
settle.  Five-fold cross-validation tunes the two penalty levels separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .data import (
    CombinedDataset,
    ConfigError,
    DataError,
    ModelSpec,
    NumericalError,
    NuisanceParams,
    PenaltyConfig,
    check_spec_against,
)
from .links import expit, predict
from .penalty import hard_threshold, lqa_diag, scad_q
from .scores import _xtwx, outcome_values, score_u, score_u_joint, weight_values

__all__ = [
    "CvResult",
    "FitResult",
    "cross_validate",
    "default_grid",
    "fit_penalized",
    "initial_omega",
    "lqa_solve",
    "newton_block_update",
    "newton_solve",
    "solve_penalized",
]

INNER_TOL = 1e-6
MAX_INNER_STEPS = 25
MAX_HALVINGS = 10
JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4)
CV_FOLDS = 5
GRID_SIZE = 20
GRID_SPAN = 1000.0


@dataclass(frozen=True)
class FitResult:
    """Outcome of one penalized solve."""

    omega_hat: NuisanceParams
    support: dict
    lambdas: Tuple[float, float]
    iterations: int
    final_xi: float
    converged: bool
    kkt_residual: float
    per_iteration_trace: Optional[Tuple[Tuple[int, float], ...]] = None


@dataclass(frozen=True)
class CvResult:
    """Cross-validation grids, mean held-out losses, and the chosen pair."""

    grid_eta: np.ndarray
    grid_mu: np.ndarray
    losses_eta: np.ndarray
    losses_mu: np.ndarray
    chosen: Tuple[float, float]
    folds: int = CV_FOLDS


# ---------------------------------------------------------------------------
# generic damped Newton with a jitter ladder


def _solve_linear(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    for jit in JITTER_LADDER:
        try:
            lhs = matrix if jit == 0.0 else matrix + jit * np.eye(matrix.shape[0])
            out = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(out)):
            return out
    raise NumericalError("singular LQA system (jitter ladder exhausted)")


def newton_solve(
    score: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    tol: float = INNER_TOL,
    max_steps: int = MAX_INNER_STEPS,
) -> np.ndarray:
    """Damped Newton iteration on an arbitrary square system.

    Steps are halved (up to ten times) until the sup-norm of the score
    decreases; a step that cannot decrease it terminates the loop.
    """
    v = np.asarray(start, dtype=np.float64).copy()
    s = score(v)
    best = float(np.max(np.abs(s)))
    for _ in range(max_steps):
        if best < tol:
            break
        delta = _solve_linear(jac(v), s)
        scale, accepted = 1.0, False
        for _ in range(MAX_HALVINGS + 1):
            trial = v - scale * delta
            s_trial = score(trial)
            m_trial = float(np.max(np.abs(s_trial)))
            if m_trial < best:
                v, s, best, accepted = trial, s_trial, m_trial, True
                break
            scale *= 0.5
        if not accepted:
            break
    return v


# ---------------------------------------------------------------------------
# half-system builders
#
# Each system exposes score(v) and jac(v) on its own block vector with the
# other block frozen, plus the layout needed for the LQA penalty.  Sums with
# frozen factors are precomputed so the per-iteration cost is sample-B work
# only.  Joint systems negate their second equation row so that both diagonal
# Jacobian blocks are positive and the penalty shrinks rather than inflates;
# roots are unchanged.


class _HalfSystem:
    d: int

    def score(self, v: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def jac(self, v: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class _EtaSystem(_HalfSystem):
    """Conditional: (u_beta, u_gamma) as a function of eta = (alpha, tau)."""

    def __init__(self, ds: CombinedDataset, spec: ModelSpec, mu_fixed: np.ndarray, clip: float):
        self.ds, self.spec, self.clip = ds, spec, clip
        self.d = ds.d
        self.n_pop = float(ds.pop_size)
        _, g1d, _, g0d = outcome_values(ds, mu_fixed[: self.d], mu_fixed[self.d :], spec)
        a, b = ds.a_rows, ds.b_rows
        self.side1 = ds.x_a.T @ (ds.d_a * g1d[a]) if a.size else np.zeros(self.d)
        self.side0 = ds.x_a.T @ (ds.d_a * g0d[a]) if a.size else np.zeros(self.d)
        self.xb, self.tb = ds.x_b, ds.t_b
        self.g1d_b, self.g0d_b = g1d[b], g0d[b]
        self.m1 = self.tb == 1.0
        self.m0 = ~self.m1
        self.x1 = np.ascontiguousarray(self.xb[self.m1])
        self.x0 = np.ascontiguousarray(self.xb[self.m0])

    def _weights(self, v):
        pb = predict(self.spec, "selection", v[: self.d], self.xb, clip=self.clip)
        pt = predict(self.spec, "treatment", v[self.d :], self.xb, clip=self.clip)
        return pb.value, pb.dvalue, pt.value, pt.dvalue

    def score(self, v):
        pib, _, pit, _ = self._weights(v)
        u_beta = (self.side1 - self.xb.T @ (self.tb * self.g1d_b / (pib * pit))) / self.n_pop
        u_gamma = (
            -self.side0 + self.xb.T @ ((1.0 - self.tb) * self.g0d_b / (pib * (1.0 - pit)))
        ) / self.n_pop
        return np.concatenate([u_beta, u_gamma])

    def jac(self, v):
        pib, pibd, pit, pitd = self._weights(v)
        j11 = _xtwx(self.x1, (self.g1d_b * pibd / (pib**2 * pit))[self.m1])
        j12 = _xtwx(self.x1, (self.g1d_b * pitd / (pib * pit**2))[self.m1])
        j21 = -_xtwx(self.x0, (self.g0d_b * pibd / (pib**2 * (1.0 - pit)))[self.m0])
        j22 = _xtwx(self.x0, (self.g0d_b * pitd / (pib * (1.0 - pit) ** 2))[self.m0])
        return np.block([[j11, j12], [j21, j22]]) / self.n_pop


class _MuSystem(_HalfSystem):
    """Conditional: (u_alpha, u_tau) as a function of mu = (beta, gamma)."""

    def __init__(self, ds: CombinedDataset, spec: ModelSpec, eta_fixed: np.ndarray, clip: float):
        self.ds, self.spec = ds, spec
        self.d = ds.d
        self.n_pop = float(ds.pop_size)
        params = NuisanceParams(
            beta=np.zeros(self.d),
            gamma=np.zeros(self.d),
            alpha=eta_fixed[: self.d],
            tau=eta_fixed[self.d :],
        )
        pib, pibd, pit, pitd = weight_values(ds, params, spec, clip)
        self.xb, self.tb, self.yb = ds.x_b, ds.t_b, ds.y_b
        self.m1 = self.tb == 1.0
        self.m0 = ~self.m1
        self.x1 = np.ascontiguousarray(self.xb[self.m1])
        self.x0 = np.ascontiguousarray(self.xb[self.m0])
        r_alpha = pibd / pib**2
        r_tau = pitd / pib
        # per-row multipliers of the treated / control residuals in each block
        self.a1 = (r_alpha / pit)[self.m1]
        self.a0 = (r_alpha / (1.0 - pit))[self.m0]
        self.t1 = (r_tau / pit**2)[self.m1]
        self.t0 = (r_tau / (1.0 - pit) ** 2)[self.m0]
        self.y1, self.y0 = self.yb[self.m1], self.yb[self.m0]
        self._const_jac: Optional[np.ndarray] = None

    def _arm_values(self, v):
        e1 = predict(self.spec, "outcome1", v[: self.d], self.x1)
        e0 = predict(self.spec, "outcome0", v[self.d :], self.x0)
        return e1, e0

    def score(self, v):
        e1, e0 = self._arm_values(v)
        r1 = self.y1 - e1.value
        r0 = self.y0 - e0.value
        u_alpha = (-self.x1.T @ (r1 * self.a1) + self.x0.T @ (r0 * self.a0)) / self.n_pop
        u_tau = (-self.x1.T @ (r1 * self.t1) - self.x0.T @ (r0 * self.t0)) / self.n_pop
        return np.concatenate([u_alpha, u_tau])

    def jac(self, v):
        if self.spec.outcome_link == "identity" and self._const_jac is not None:
            return self._const_jac
        e1, e0 = self._arm_values(v)
        k11 = _xtwx(self.x1, e1.dvalue * self.a1)
        k12 = -_xtwx(self.x0, e0.dvalue * self.a0)
        k21 = _xtwx(self.x1, e1.dvalue * self.t1)
        k22 = _xtwx(self.x0, e0.dvalue * self.t0)
        out = np.block([[k11, k12], [k21, k22]]) / self.n_pop
        if self.spec.outcome_link == "identity":
            self._const_jac = out
        return out


class _JointEtaSystem(_HalfSystem):
    """Joint: (u_beta, -u_gamma) as a function of (delta1, delta0)."""

    def __init__(self, ds: CombinedDataset, spec: ModelSpec, mu_fixed: np.ndarray, clip: float):
        self.ds, self.spec, self.clip = ds, spec, clip
        self.d = ds.d
        self.n_pop = float(ds.pop_size)
        _, g1d, _, g0d = outcome_values(ds, mu_fixed[: self.d], mu_fixed[self.d :], spec)
        a, b = ds.a_rows, ds.b_rows
        self.side1 = ds.x_a.T @ (ds.d_a * g1d[a]) if a.size else np.zeros(self.d)
        self.side0 = ds.x_a.T @ (ds.d_a * g0d[a]) if a.size else np.zeros(self.d)
        self.xb, self.tb = ds.x_b, ds.t_b
        self.g1d_b, self.g0d_b = g1d[b], g0d[b]
        self.m1 = self.tb == 1.0
        self.m0 = ~self.m1
        self.x1 = np.ascontiguousarray(self.xb[self.m1])
        self.x0 = np.ascontiguousarray(self.xb[self.m0])

    def _weights(self, v):
        e1 = predict(self.spec, "joint1", v[: self.d], self.x1, clip=self.clip)
        e0 = predict(self.spec, "joint0", v[self.d :], self.x0, clip=self.clip)
        return e1, e0

    def score(self, v):
        e1, e0 = self._weights(v)
        u_beta = (self.side1 - self.x1.T @ (self.g1d_b[self.m1] / e1.value)) / self.n_pop
        u_gamma = (-self.side0 + self.x0.T @ (self.g0d_b[self.m0] / e0.value)) / self.n_pop
        return np.concatenate([u_beta, -u_gamma])

    def jac(self, v):
        e1, e0 = self._weights(v)
        e11 = _xtwx(self.x1, self.g1d_b[self.m1] * e1.dvalue / e1.value**2)
        e22 = _xtwx(self.x0, self.g0d_b[self.m0] * e0.dvalue / e0.value**2)
        d = self.d
        out = np.zeros((2 * d, 2 * d))
        out[:d, :d] = e11
        out[d:, d:] = e22  # second row negated along with the score
        return out / self.n_pop


class _JointMuSystem(_HalfSystem):
    """Joint: (u_delta1, -u_delta0) as a function of mu = (beta, gamma)."""

    def __init__(self, ds: CombinedDataset, spec: ModelSpec, eta_fixed: np.ndarray, clip: float):
        self.ds, self.spec = ds, spec
        self.d = ds.d
        self.n_pop = float(ds.pop_size)
        params = NuisanceParams(
            beta=np.zeros(self.d),
            gamma=np.zeros(self.d),
            delta1=eta_fixed[: self.d],
            delta0=eta_fixed[self.d :],
        )
        w1, w1d, w0, w0d = weight_values(ds, params, spec, clip)
        self.xb, self.tb, self.yb = ds.x_b, ds.t_b, ds.y_b
        self.m1 = self.tb == 1.0
        self.m0 = ~self.m1
        self.x1 = np.ascontiguousarray(self.xb[self.m1])
        self.x0 = np.ascontiguousarray(self.xb[self.m0])
        self.a1 = (w1d / w1**2)[self.m1]
        self.a0 = (w0d / w0**2)[self.m0]
        self.y1, self.y0 = self.yb[self.m1], self.yb[self.m0]
        self._const_jac: Optional[np.ndarray] = None

    def score(self, v):
        e1 = predict(self.spec, "outcome1", v[: self.d], self.x1)
        e0 = predict(self.spec, "outcome0", v[self.d :], self.x0)
        u_d1 = -(self.x1.T @ ((self.y1 - e1.value) * self.a1)) / self.n_pop
        u_d0 = (self.x0.T @ ((self.y0 - e0.value) * self.a0)) / self.n_pop
        return np.concatenate([u_d1, -u_d0])

    def jac(self, v):
        if self.spec.outcome_link == "identity" and self._const_jac is not None:
            return self._const_jac
        e1 = predict(self.spec, "outcome1", v[: self.d], self.x1)
        e0 = predict(self.spec, "outcome0", v[self.d :], self.x0)
        d = self.d
        out = np.zeros((2 * d, 2 * d))
        out[:d, :d] = _xtwx(self.x1, e1.dvalue * self.a1)
        out[d:, d:] = _xtwx(self.x0, e0.dvalue * self.a0)
        out /= self.n_pop
        if self.spec.outcome_link == "identity":
            self._const_jac = out
        return out


def _build_system(
    block: str, ds: CombinedDataset, spec: ModelSpec, frozen_other: np.ndarray, clip: float
) -> _HalfSystem:
    joint = spec.parameterization == "joint"
    if block == "eta":
        return (_JointEtaSystem if joint else _EtaSystem)(ds, spec, frozen_other, clip)
    if block == "mu":
        return (_JointMuSystem if joint else _MuSystem)(ds, spec, frozen_other, clip)
    raise ConfigError(f"unknown block {block!r}")


# ---------------------------------------------------------------------------
# LQA Newton on one half-system


def _sigma(
    v: np.ndarray, lam: float, config: PenaltyConfig, intercept_idx: Tuple[int, ...]
) -> np.ndarray:
    entries = lqa_diag(v, lam, config.a, config.epsilon).entries
    for j in intercept_idx:
        entries[j] = 0.0  # intercepts stay unpenalized
    return entries


def _lqa_step(
    score: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    v: np.ndarray,
    lam: float,
    config: PenaltyConfig,
    intercept_idx: Tuple[int, ...],
) -> Tuple[np.ndarray, bool]:
    """One damped Newton step on the LQA surrogate anchored at v.

    The surrogate diagonal is frozen at v while the step is line-searched, so
    the halving criterion measures progress on a fixed system; re-anchoring
    happens once per outer step.  Searching against a residual whose diagonal
    moves with the trial point would stall mid-shrinkage, because coordinates
    on their way to zero hold that residual near lam until they arrive.
    Returns (new point, whether any scale improved the surrogate residual);
    a point already at the tolerance comes back unchanged.
    """
    sigma = _sigma(v, lam, config, intercept_idx)
    r = score(v) + sigma * v
    merit = float(np.max(np.abs(r)))
    if merit < INNER_TOL:
        return v, False
    delta = _solve_linear(jac(v) + np.diag(sigma), r)
    scale = 1.0
    for _ in range(MAX_HALVINGS + 1):
        trial = v - scale * delta
        m_trial = float(np.max(np.abs(score(trial) + sigma * trial)))
        if m_trial < merit:
            return trial, True
        scale *= 0.5
    return v, False


def lqa_solve(
    score: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    lam: float,
    config: PenaltyConfig = PenaltyConfig(),
    intercept_idx: Tuple[int, ...] = (0,),
) -> np.ndarray:
    """Iterated damped Newton on the LQA form of the penalized system.

    Each outer step re-anchors the quadratic penalty approximation at the
    current point and takes one damped Newton step on it.  Stops when the
    penalized residual falls below the inner tolerance, a step cannot
    decrease its surrogate residual, or the step budget runs out.  With
    lam == 0 this is a plain damped Newton solve.
    """
    v = np.asarray(start, dtype=np.float64).copy()
    for _ in range(MAX_INNER_STEPS):
        v, moved = _lqa_step(score, jac, v, lam, config, intercept_idx)
        if not moved:
            break
    return v


def _solve_half(
    system: _HalfSystem, start: np.ndarray, lam: float, config: PenaltyConfig
) -> np.ndarray:
    return lqa_solve(system.score, system.jac, start, lam, config, (0, system.d))


def newton_block_update(
    block: str,
    current: np.ndarray,
    dataset: CombinedDataset,
    frozen_other: np.ndarray,
    lam: float,
    config: PenaltyConfig = PenaltyConfig(),
    spec: ModelSpec = ModelSpec(),
) -> np.ndarray:
    """One damped LQA Newton step on the named half-system."""
    system = _build_system(block, dataset, spec, np.asarray(frozen_other, float), config.prob_clip)
    v = np.asarray(current, dtype=np.float64).copy()
    out, _ = _lqa_step(system.score, system.jac, v, lam, config, (0, system.d))
    return out


# ---------------------------------------------------------------------------
# initialization, full solve, grids, cross-validation


def initial_omega(dataset: CombinedDataset, spec: ModelSpec) -> NuisanceParams:
    """Deterministic start: link-transformed marginal rates, zero slopes."""
    d = dataset.d
    tb, yb = dataset.t_b, dataset.y_b
    if tb.size == 0:
        raise DataError("sample B is empty; cannot initialize the estimating system")
    n_treated = int(np.sum(tb == 1.0))
    if n_treated == 0 or n_treated == tb.size:
        raise DataError("sample B lacks one treatment arm")

    def _clipped_logit(p: float) -> float:
        p = min(max(p, 1e-6), 1.0 - 1e-6)
        return math.log(p / (1.0 - p))

    def _arm_intercept(mean_y: float) -> float:
        if spec.outcome_link == "identity":
            return mean_y
        return _clipped_logit(mean_y)

    beta = np.zeros(d)
    gamma = np.zeros(d)
    beta[0] = _arm_intercept(float(np.mean(yb[tb == 1.0])))
    gamma[0] = _arm_intercept(float(np.mean(yb[tb == 0.0])))
    n_pop = float(dataset.pop_size)
    if spec.parameterization == "conditional":
        alpha = np.zeros(d)
        tau = np.zeros(d)
        alpha[0] = _clipped_logit(tb.size / n_pop)
        tau[0] = _clipped_logit(n_treated / tb.size)
        return NuisanceParams(beta=beta, gamma=gamma, alpha=alpha, tau=tau)
    delta1 = np.zeros(d)
    delta0 = np.zeros(d)
    delta1[0] = _clipped_logit(n_treated / n_pop)
    delta0[0] = _clipped_logit((tb.size - n_treated) / n_pop)
    return NuisanceParams(beta=beta, gamma=gamma, delta1=delta1, delta0=delta0)


def _kkt_residual(
    dataset: CombinedDataset,
    omega: NuisanceParams,
    spec: ModelSpec,
    lambda_eta: float,
    lambda_mu: float,
    config: PenaltyConfig,
) -> float:
    """Sup-norm optimality residual of the penalized system at omega.

    Nonzero coordinates must solve score + penalty; zeroed coordinates only
    need the bare score within the block's penalty level; intercepts are
    plain score coordinates.
    """
    if spec.parameterization == "conditional":
        u = score_u(dataset, omega, spec, config.prob_clip).stacked()
    else:
        u = score_u_joint(dataset, omega, spec, config.prob_clip).stacked()
    w = omega.stacked()
    d = omega.d
    worst = 0.0
    for j, (uj, wj) in enumerate(zip(u, w)):
        block = j // d
        lam = lambda_eta if block < 2 else lambda_mu
        if j % d == 0:
            res = abs(uj)
        elif wj != 0.0:
            res = abs(uj + scad_q(abs(wj), lam, config.a) * np.sign(wj))
        else:
            res = max(abs(uj) - lam, 0.0)
        worst = max(worst, float(res))
    return worst


def solve_penalized(
    dataset: CombinedDataset,
    spec: ModelSpec,
    lambdas: Optional[Tuple[float, float]] = None,
    config: PenaltyConfig = PenaltyConfig(),
    init: Optional[NuisanceParams] = None,
    keep_trace: bool = False,
) -> FitResult:
    """Alternate eta/mu LQA Newton solves until block updates settle.

    With identity outcome links the eta half-system does not involve mu, so a
    single eta solve followed by a single mu solve is already the alternating
    fixed point and the loop is skipped.

    Unless an explicit ``init`` is supplied, penalized solves warm-start at
    the unpenalized alternating root rather than the intercept-only point:
    the quadratic approximation is anchored at the current iterate, so a
    start with the true signal coordinates already active shrinks noise
    coordinates toward zero instead of locking every coordinate near the
    origin, where the approximation's diagonal is steepest.
    """
    check_spec_against(dataset, spec)
    lam_eta, lam_mu = lambdas if lambdas is not None else (config.lambda_eta, config.lambda_mu)
    if init is None and (lam_eta != 0.0 or lam_mu != 0.0):
        init = solve_penalized(dataset, spec, (0.0, 0.0), config).omega_hat
    omega = init if init is not None else initial_omega(dataset, spec)
    eta, mu = omega.eta.copy(), omega.mu.copy()
    clip = config.prob_clip
    trace: list[Tuple[int, float]] = []

    if spec.outcome_link == "identity":
        eta_new = _solve_half(_build_system("eta", dataset, spec, mu, clip), eta, lam_eta, config)
        mu_new = _solve_half(_build_system("mu", dataset, spec, eta_new, clip), mu, lam_mu, config)
        xi = max(float(np.linalg.norm(eta_new - eta)), float(np.linalg.norm(mu_new - mu)))
        trace.append((1, xi))
        eta, mu = eta_new, mu_new
        iterations, converged, final_xi = 1, True, 0.0
    else:
        converged = False
        final_xi = math.inf
        iterations = 0
        for k in range(1, config.max_iter + 1):
            eta_new = _solve_half(
                _build_system("eta", dataset, spec, mu, clip), eta, lam_eta, config
            )
            mu_new = _solve_half(
                _build_system("mu", dataset, spec, eta_new, clip), mu, lam_mu, config
            )
            xi = max(float(np.linalg.norm(eta_new - eta)), float(np.linalg.norm(mu_new - mu)))
            trace.append((k, xi))
            eta, mu = eta_new, mu_new
            iterations, final_xi = k, xi
            if xi < config.tol_xi:
                converged = True
                break

    omega = omega.with_eta(eta).with_mu(mu)
    # threshold only penalized blocks, so lam = 0 stays a plain Newton solve
    thresholded = hard_threshold(omega, config.zero_threshold)
    if lam_eta == 0.0:
        thresholded = thresholded.with_eta(omega.eta)
    if lam_mu == 0.0:
        thresholded = thresholded.with_mu(omega.mu)
    omega = thresholded
    return FitResult(
        omega_hat=omega,
        support=omega.support(),
        lambdas=(lam_eta, lam_mu),
        iterations=iterations,
        final_xi=final_xi,
        converged=converged,
        kkt_residual=_kkt_residual(dataset, omega, spec, lam_eta, lam_mu, config),
        per_iteration_trace=tuple(trace) if keep_trace else None,
    )


def default_grid(
    dataset: CombinedDataset,
    block: str,
    spec: ModelSpec = ModelSpec(),
    config: PenaltyConfig = PenaltyConfig(),
    size: int = GRID_SIZE,
) -> np.ndarray:
    """Log-spaced grid up to the sup-norm of the block's score at the start."""
    omega = initial_omega(dataset, spec)
    system = _build_system(
        block, dataset, spec, omega.mu if block == "eta" else omega.eta, config.prob_clip
    )
    start = omega.eta if block == "eta" else omega.mu
    lam_max = max(float(np.max(np.abs(system.score(start)))), 1e-8)
    return np.geomspace(lam_max / GRID_SPAN, lam_max, size)


def _fold_assignment(dataset: CombinedDataset, seed: int, folds: int) -> np.ndarray:
    """Stratified round-robin fold ids, deterministic in the seed."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xCF], dtype=np.uint64)))
    keys = [
        (bool(dataset.i_a[i]), bool(dataset.i_b[i]), -1.0 if math.isnan(dataset.t[i]) else dataset.t[i])
        for i in range(dataset.n)
    ]
    out = np.empty(dataset.n, dtype=np.int64)
    for key in sorted(set(keys)):
        idx = np.array([i for i, k in enumerate(keys) if k == key])
        idx = idx[rng.permutation(idx.size)]
        out[idx] = np.arange(idx.size) % folds
    return out


def _tune_block(
    block: str,
    dataset: CombinedDataset,
    spec: ModelSpec,
    grid: np.ndarray,
    frozen_other: np.ndarray,
    start: np.ndarray,
    config: PenaltyConfig,
    fold_ids: np.ndarray,
) -> Tuple[float, np.ndarray]:
    losses = np.zeros((CV_FOLDS, len(grid)))
    for f in range(CV_FOLDS):
        try:
            train = dataset.subset(np.flatnonzero(fold_ids != f))
            val = dataset.subset(np.flatnonzero(fold_ids == f))
        except DataError as exc:
            raise DataError("degenerate fold; reduce folds or enlarge data") from exc
        if train.b_rows.size == 0 or val.b_rows.size == 0:
            raise DataError("degenerate fold; reduce folds or enlarge data")
        system = _build_system(block, train, spec, frozen_other, config.prob_clip)
        val_system = _build_system(block, val, spec, frozen_other, config.prob_clip)
        free = _solve_half(system, start, 0.0, config)
        for g, lam in enumerate(grid):
            fitted = _solve_half(system, free, float(lam), config)
            losses[f, g] = float(np.sum(val_system.score(fitted) ** 2))
    means = losses.mean(axis=0)
    return float(grid[_argmin_prefer_larger(means)]), means


def _argmin_prefer_larger(means: np.ndarray) -> int:
    """Index of the smallest mean loss; exact ties go to the larger lambda."""
    return len(means) - 1 - int(np.argmin(means[::-1]))


def cross_validate(
    dataset: CombinedDataset,
    spec: ModelSpec,
    grid_eta: Optional[Sequence[float]] = None,
    grid_mu: Optional[Sequence[float]] = None,
    config: PenaltyConfig = PenaltyConfig(),
    seed: int = 0,
) -> CvResult:
    """Five-fold tuning of the two penalty levels.

    lambda_eta is tuned with mu frozen at the initialization; the eta block is
    then fit on the full data at the chosen level, and lambda_mu is tuned with
    eta frozen at that fit.  Folds are stratified on sample membership and
    treatment arm.  Every penalized fit, per fold and on the full data, warm
    starts at its own unpenalized root so the shrinkage path is traced from
    the saturated end rather than from the origin.
    """
    check_spec_against(dataset, spec)
    grid_eta = np.sort(np.asarray(
        grid_eta if grid_eta is not None else default_grid(dataset, "eta", spec, config),
        dtype=np.float64,
    ))
    grid_mu = np.sort(np.asarray(
        grid_mu if grid_mu is not None else default_grid(dataset, "mu", spec, config),
        dtype=np.float64,
    ))
    fold_ids = _fold_assignment(dataset, seed, CV_FOLDS)
    omega0 = initial_omega(dataset, spec)

    lam_eta, losses_eta = _tune_block(
        "eta", dataset, spec, grid_eta, omega0.mu, omega0.eta, config, fold_ids
    )
    eta_system = _build_system("eta", dataset, spec, omega0.mu, config.prob_clip)
    eta_free = _solve_half(eta_system, omega0.eta, 0.0, config)
    eta_full = _solve_half(eta_system, eta_free, lam_eta, config)
    lam_mu, losses_mu = _tune_block(
        "mu", dataset, spec, grid_mu, eta_full, omega0.mu, config, fold_ids
    )
    return CvResult(
        grid_eta=grid_eta,
        grid_mu=grid_mu,
        losses_eta=losses_eta,
        losses_mu=losses_mu,
        chosen=(lam_eta, lam_mu),
    )


def fit_penalized(
    dataset: CombinedDataset,
    spec: ModelSpec,
    config: PenaltyConfig = PenaltyConfig(),
    seed: int = 0,
    grid_eta: Optional[Sequence[float]] = None,
    grid_mu: Optional[Sequence[float]] = None,
) -> Tuple[FitResult, CvResult]:
    """Cross-validate the penalty pair, then run the full alternating solve."""
    cv = cross_validate(dataset, spec, grid_eta, grid_mu, config, seed)
    fit = solve_penalized(dataset, spec, cv.chosen, config)
    return fit, cv
