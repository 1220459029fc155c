"""Bias-reduced estimating system for the combined-sample ATE.

Provides:
    - phi:            per-record ATE moment contributions (conditional or joint)
    - score_u:        the four-block score (d/d beta, gamma, alpha, tau of the
                      mean moment) whose root removes first-order nuisance bias
    - partial_o/q:    the two half-systems used by the alternating solver
    - jacobian_eta/mu: exact block Jacobians of the half-systems
    - score_u_joint and the matching joint half-systems/Jacobians

All sums run over sample rows only and divide by the population size; units
outside both samples contribute nothing to any score block.  Probability
predictions feeding inverse weights are clamped at ``clip``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .data import CombinedDataset, ConfigError, DataError, ModelSpec, NuisanceParams, UnitRecord
from .links import predict

__all__ = [
    "BlockJacobian",
    "JointScoreVector",
    "ScoreVector",
    "jacobian_eta",
    "jacobian_mu",
    "joint_jacobian_eta",
    "joint_jacobian_mu",
    "joint_partial_eta",
    "joint_partial_mu",
    "outcome_values",
    "partial_o",
    "partial_q",
    "phi",
    "score_u",
    "score_u_joint",
    "weight_values",
]

DEFAULT_CLIP = 1e-6


@dataclass(frozen=True)
class ScoreVector:
    """Score blocks of the conditional parameterization, each length d."""

    u_beta: np.ndarray
    u_gamma: np.ndarray
    u_alpha: np.ndarray
    u_tau: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u_beta, self.u_gamma, self.u_alpha, self.u_tau])


@dataclass(frozen=True)
class JointScoreVector:
    """Score blocks of the joint parameterization, each length d."""

    u_beta: np.ndarray
    u_gamma: np.ndarray
    u_delta1: np.ndarray
    u_delta0: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u_beta, self.u_gamma, self.u_delta1, self.u_delta0])


@dataclass(frozen=True)
class BlockJacobian:
    """Dense 2d x 2d Jacobian with the block labels it differentiates."""

    matrix: np.ndarray
    row_blocks: Tuple[str, str]
    col_blocks: Tuple[str, str]


# ---------------------------------------------------------------------------
# model evaluation helpers


def outcome_values(dataset: CombinedDataset, beta, gamma, spec: ModelSpec):
    """(g1, g1', g0, g0') over all rows."""
    e1 = predict(spec, "outcome1", beta, dataset.x)
    e0 = predict(spec, "outcome0", gamma, dataset.x)
    return e1.value, e1.dvalue, e0.value, e0.dvalue


def weight_values(dataset: CombinedDataset, params: NuisanceParams, spec: ModelSpec, clip: float):
    """Inverse-weight model evaluations over sample-B rows.

    Conditional: (pi_b, pi_b', pi_t, pi_t').  Joint: (w1, w1', w0, w0').
    Values are clamped; derivatives are taken at the unclamped predictor.
    """
    xb = dataset.x_b
    if params.parameterization == "conditional":
        eb = predict(spec, "selection", params.alpha, xb, clip=clip)
        et = predict(spec, "treatment", params.tau, xb, clip=clip)
        return eb.value, eb.dvalue, et.value, et.dvalue
    e1 = predict(spec, "joint1", params.delta1, xb, clip=clip)
    e0 = predict(spec, "joint0", params.delta0, xb, clip=clip)
    return e1.value, e1.dvalue, e0.value, e0.dvalue


def _xtwx(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (x * w[:, None]).T @ x


def _require(params: NuisanceParams, parameterization: str) -> None:
    if params.parameterization != parameterization:
        raise ConfigError(f"expected {parameterization} parameterization")


# ---------------------------------------------------------------------------
# moment function


def phi(
    dataset,
    params: NuisanceParams,
    spec: ModelSpec,
    theta: float,
    clip: float = DEFAULT_CLIP,
):
    """Per-record ATE moment contributions minus theta.

    Accepts a dataset (returns one value per record) or a single UnitRecord
    (returns a float).  Population units outside both samples contribute
    exactly ``-theta``; they are not materialized here, so population-level
    means must add ``(N - n) * (-theta)`` for the phantom rows.
    """
    if isinstance(dataset, UnitRecord):
        rec = dataset
        opt = lambda v: np.array([np.nan if v is None else float(v)])
        one = CombinedDataset(
            x=np.asarray(rec.x, dtype=np.float64).reshape(1, -1),
            i_a=np.array([rec.i_a]),
            i_b=np.array([rec.i_b]),
            weight_a=opt(rec.weight_a),
            t=opt(rec.t),
            y=opt(rec.y),
            pop_size=1,
        )
        return float(phi(one, params, spec, theta, clip)[0])
    if np.any(dataset.i_b & (np.isnan(dataset.t) | np.isnan(dataset.y))):
        raise DataError("sample-B record lacks treatment or outcome")
    g1, _, g0, _ = outcome_values(dataset, params.beta, params.gamma, spec)
    terms = np.zeros(dataset.n)
    a, b = dataset.a_rows, dataset.b_rows
    terms[a] = dataset.d_a * (g1[a] - g0[a])
    if b.size:
        p1, p0 = _arm_probs(dataset, params, spec, clip)
        tb, yb = dataset.t_b, dataset.y_b
        # += so a record in both samples keeps its survey bracket too
        terms[b] += tb * (yb - g1[b]) / p1 - (1.0 - tb) * (yb - g0[b]) / p0
    return terms - theta


def _arm_probs(dataset, params, spec, clip):
    """Treated-arm and control-arm membership probabilities on B rows."""
    v1, _, v0, _ = weight_values(dataset, params, spec, clip)
    if params.parameterization == "conditional":
        pib, pit = v1, v0
        return pib * pit, pib * (1.0 - pit)
    return v1, v0


# ---------------------------------------------------------------------------
# conditional scores


def score_u(
    dataset: CombinedDataset,
    params: NuisanceParams,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> ScoreVector:
    """Four-block bias-reduced score at ``params`` (conditional form)."""
    _require(params, "conditional")
    n_pop = float(dataset.pop_size)
    g1, g1d, g0, g0d = outcome_values(dataset, params.beta, params.gamma, spec)
    a, b = dataset.a_rows, dataset.b_rows
    xa, xb = dataset.x_a, dataset.x_b
    d = dataset.d

    side_a1 = xa.T @ (dataset.d_a * g1d[a]) if a.size else np.zeros(d)
    side_a0 = xa.T @ (dataset.d_a * g0d[a]) if a.size else np.zeros(d)
    if b.size == 0:
        z = np.zeros(d)
        return ScoreVector(side_a1 / n_pop, -side_a0 / n_pop, z, z.copy())

    pib, pibd, pit, pitd = weight_values(dataset, params, spec, clip)
    tb, yb = dataset.t_b, dataset.y_b
    r1 = yb - g1[b]
    r0 = yb - g0[b]
    u_beta = (side_a1 - xb.T @ (tb * g1d[b] / (pib * pit))) / n_pop
    u_gamma = (-side_a0 + xb.T @ ((1.0 - tb) * g0d[b] / (pib * (1.0 - pit)))) / n_pop
    u_alpha = xb.T @ ((-tb * r1 / pit + (1.0 - tb) * r0 / (1.0 - pit)) * pibd / pib**2) / n_pop
    u_tau = xb.T @ ((-tb * r1 / pit**2 - (1.0 - tb) * r0 / (1.0 - pit) ** 2) * pitd / pib) / n_pop
    return ScoreVector(u_beta, u_gamma, u_alpha, u_tau)


def partial_o(
    dataset: CombinedDataset,
    eta: np.ndarray,
    mu_fixed: np.ndarray,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> np.ndarray:
    """Outcome-block equations (u_beta, u_gamma) as a function of eta."""
    params = _combine(eta, mu_fixed, "conditional")
    s = score_u(dataset, params, spec, clip)
    return np.concatenate([s.u_beta, s.u_gamma])


def partial_q(
    dataset: CombinedDataset,
    mu: np.ndarray,
    eta_fixed: np.ndarray,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> np.ndarray:
    """Weighting-block equations (u_alpha, u_tau) as a function of mu."""
    params = _combine(eta_fixed, mu, "conditional")
    s = score_u(dataset, params, spec, clip)
    return np.concatenate([s.u_alpha, s.u_tau])


def _combine(eta: np.ndarray, mu: np.ndarray, parameterization: str) -> NuisanceParams:
    d = len(eta) // 2
    if parameterization == "conditional":
        return NuisanceParams(beta=mu[:d], gamma=mu[d:], alpha=eta[:d], tau=eta[d:])
    return NuisanceParams(beta=mu[:d], gamma=mu[d:], delta1=eta[:d], delta0=eta[d:])


def jacobian_eta(
    dataset: CombinedDataset,
    eta: np.ndarray,
    mu_fixed: np.ndarray,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> BlockJacobian:
    """d(partial_o)/d(eta): exact, since the outcome factors are frozen."""
    params = _combine(eta, mu_fixed, "conditional")
    _, g1d, _, g0d = outcome_values(dataset, params.beta, params.gamma, spec)
    pib, pibd, pit, pitd = weight_values(dataset, params, spec, clip)
    b = dataset.b_rows
    xb, tb = dataset.x_b, dataset.t_b
    n_pop = float(dataset.pop_size)
    m1 = tb == 1.0
    m0 = ~m1
    x1, x0 = xb[m1], xb[m0]
    g1b, g0b = g1d[b], g0d[b]

    j11 = _xtwx(x1, (g1b * pibd / (pib**2 * pit))[m1])
    j12 = _xtwx(x1, (g1b * pitd / (pib * pit**2))[m1])
    j21 = -_xtwx(x0, (g0b * pibd / (pib**2 * (1.0 - pit)))[m0])
    j22 = _xtwx(x0, (g0b * pitd / (pib * (1.0 - pit) ** 2))[m0])
    top = np.hstack([j11, j12])
    bot = np.hstack([j21, j22])
    return BlockJacobian(np.vstack([top, bot]) / n_pop, ("u_beta", "u_gamma"), ("alpha", "tau"))


def jacobian_mu(
    dataset: CombinedDataset,
    mu: np.ndarray,
    eta_fixed: np.ndarray,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> BlockJacobian:
    """d(partial_q)/d(mu): exact for any smooth outcome link.

    The weighting factors are frozen at ``eta_fixed`` and the residuals enter
    linearly in the outcome means, so no second-derivative terms arise.
    """
    params = _combine(eta_fixed, mu, "conditional")
    _, g1d, _, g0d = outcome_values(dataset, params.beta, params.gamma, spec)
    pib, pibd, pit, pitd = weight_values(dataset, params, spec, clip)
    b = dataset.b_rows
    xb, tb = dataset.x_b, dataset.t_b
    n_pop = float(dataset.pop_size)
    m1 = tb == 1.0
    m0 = ~m1
    x1, x0 = xb[m1], xb[m0]
    r_alpha = pibd / pib**2
    r_tau = pitd / pib

    k11 = _xtwx(x1, (g1d[b] * r_alpha / pit)[m1])
    k12 = -_xtwx(x0, (g0d[b] * r_alpha / (1.0 - pit))[m0])
    k21 = _xtwx(x1, (g1d[b] * r_tau / pit**2)[m1])
    k22 = _xtwx(x0, (g0d[b] * r_tau / (1.0 - pit) ** 2)[m0])
    top = np.hstack([k11, k12])
    bot = np.hstack([k21, k22])
    return BlockJacobian(np.vstack([top, bot]) / n_pop, ("u_alpha", "u_tau"), ("beta", "gamma"))


# ---------------------------------------------------------------------------
# joint parameterization


def score_u_joint(
    dataset: CombinedDataset,
    params: NuisanceParams,
    spec: ModelSpec,
    clip: float = DEFAULT_CLIP,
) -> JointScoreVector:
    """Four-block score when the arm-membership probabilities are modeled jointly."""
    _require(params, "joint")
    n_pop = float(dataset.pop_size)
    g1, g1d, g0, g0d = outcome_values(dataset, params.beta, params.gamma, spec)
    a, b = dataset.a_rows, dataset.b_rows
    xa, xb = dataset.x_a, dataset.x_b
    d = dataset.d

    side_a1 = xa.T @ (dataset.d_a * g1d[a]) if a.size else np.zeros(d)
    side_a0 = xa.T @ (dataset.d_a * g0d[a]) if a.size else np.zeros(d)
    if b.size == 0:
        z = np.zeros(d)
        return JointScoreVector(side_a1 / n_pop, -side_a0 / n_pop, z, z.copy())

    w1, w1d, w0, w0d = weight_values(dataset, params, spec, clip)
    tb, yb = dataset.t_b, dataset.y_b
    r1 = yb - g1[b]
    r0 = yb - g0[b]
    u_beta = (side_a1 - xb.T @ (tb * g1d[b] / w1)) / n_pop
    u_gamma = (-side_a0 + xb.T @ ((1.0 - tb) * g0d[b] / w0)) / n_pop
    u_delta1 = -(xb.T @ (tb * r1 * w1d / w1**2)) / n_pop
    u_delta0 = xb.T @ ((1.0 - tb) * r0 * w0d / w0**2) / n_pop
    return JointScoreVector(u_beta, u_gamma, u_delta1, u_delta0)


def joint_partial_eta(dataset, eta, mu_fixed, spec, clip: float = DEFAULT_CLIP) -> np.ndarray:
    """Outcome-block equations (u_beta, u_gamma) as a function of (delta1, delta0)."""
    s = score_u_joint(dataset, _combine(eta, mu_fixed, "joint"), spec, clip)
    return np.concatenate([s.u_beta, s.u_gamma])


def joint_partial_mu(dataset, mu, eta_fixed, spec, clip: float = DEFAULT_CLIP) -> np.ndarray:
    """Joint-weight equations (u_delta1, u_delta0) as a function of (beta, gamma)."""
    s = score_u_joint(dataset, _combine(eta_fixed, mu, "joint"), spec, clip)
    return np.concatenate([s.u_delta1, s.u_delta0])


def joint_jacobian_eta(dataset, eta, mu_fixed, spec, clip: float = DEFAULT_CLIP) -> BlockJacobian:
    """d(joint_partial_eta)/d(delta1, delta0): block-diagonal and exact."""
    params = _combine(eta, mu_fixed, "joint")
    _, g1d, _, g0d = outcome_values(dataset, params.beta, params.gamma, spec)
    w1, w1d, w0, w0d = weight_values(dataset, params, spec, clip)
    b = dataset.b_rows
    xb, tb = dataset.x_b, dataset.t_b
    n_pop = float(dataset.pop_size)
    m1 = tb == 1.0
    m0 = ~m1
    d = dataset.d

    e11 = _xtwx(xb[m1], (g1d[b] * w1d / w1**2)[m1])
    e22 = -_xtwx(xb[m0], (g0d[b] * w0d / w0**2)[m0])
    top = np.hstack([e11, np.zeros((d, d))])
    bot = np.hstack([np.zeros((d, d)), e22])
    return BlockJacobian(np.vstack([top, bot]) / n_pop, ("u_beta", "u_gamma"), ("delta1", "delta0"))


def joint_jacobian_mu(dataset, mu, eta_fixed, spec, clip: float = DEFAULT_CLIP) -> BlockJacobian:
    """d(joint_partial_mu)/d(beta, gamma): block-diagonal and exact."""
    params = _combine(eta_fixed, mu, "joint")
    _, g1d, _, g0d = outcome_values(dataset, params.beta, params.gamma, spec)
    w1, w1d, w0, w0d = weight_values(dataset, params, spec, clip)
    b = dataset.b_rows
    xb, tb = dataset.x_b, dataset.t_b
    n_pop = float(dataset.pop_size)
    m1 = tb == 1.0
    m0 = ~m1
    d = dataset.d

    m11 = _xtwx(xb[m1], (g1d[b] * w1d / w1**2)[m1])
    m22 = -_xtwx(xb[m0], (g0d[b] * w0d / w0**2)[m0])
    top = np.hstack([m11, np.zeros((d, d))])
    bot = np.hstack([np.zeros((d, d)), m22])
    return BlockJacobian(np.vstack([top, bot]) / n_pop, ("u_delta1", "u_delta0"), ("beta", "gamma"))
