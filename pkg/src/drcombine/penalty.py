"""SCAD penalty derivative, penalized score assembly, and the LQA diagonal."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .data import ConfigError, NuisanceParams

__all__ = ["LqaDiagonal", "hard_threshold", "lqa_diag", "penalized_score", "scad_q"]


@dataclass(frozen=True)
class LqaDiagonal:
    """Diagonal of the local-quadratic-approximation penalty matrix."""

    entries: np.ndarray


def scad_q(u_abs, lam: float, a: float = 3.7):
    """First derivative of the SCAD penalty at |u|.

    Arguments
    ---------
    u_abs : nonnegative scalar or array of |coefficient| values.
    lam : penalty level (lambda >= 0).
    a : shape constant, must exceed 2 (3.7 throughout).

    Piecewise: lam on [0, lam); decays linearly to 0 on [lam, a*lam); 0 after.
    """
    if lam < 0:
        raise ConfigError("negative penalty level")
    if a <= 2:
        raise ConfigError("SCAD shape constant must exceed 2")
    scalar = np.isscalar(u_abs)
    u = np.asarray(u_abs, dtype=np.float64)
    if np.any(u < 0):
        raise ConfigError("scad_q expects absolute values")
    if lam == 0.0:
        out = np.zeros_like(u)
    else:
        inner = u < lam
        out = lam * np.where(inner, 1.0, np.clip(a * lam - u, 0.0, None) / ((a - 1.0) * lam))
    return float(out) if scalar else out


def penalized_score(
    u_stacked: np.ndarray,
    omega: NuisanceParams,
    lambda_eta: float,
    lambda_mu: float,
    a: float = 3.7,
) -> np.ndarray:
    """Score stack plus sign-product penalty, element-wise.

    ``u_stacked`` is the 4d score in equation order; ``omega.stacked()`` is the
    coefficient stack in (weighting blocks, outcome blocks) order.  Pairing the
    j-th equation with the j-th coefficient applies lambda_eta to the first
    two blocks and lambda_mu to the last two; intercepts stay unpenalized.
    """
    w = omega.stacked()
    if u_stacked.shape != w.shape:
        raise ConfigError(f"score length {u_stacked.shape} != params length {w.shape}")
    d = omega.d
    levels = (lambda_eta, lambda_eta, lambda_mu, lambda_mu)
    pen = np.sign(w) * np.concatenate(
        [scad_q(np.abs(w[k * d : (k + 1) * d]), lam, a) for k, lam in enumerate(levels)]
    )
    pen[[0, d, 2 * d, 3 * d]] = 0.0  # intercepts are never penalized
    return u_stacked + pen


def lqa_diag(omega_block, lam: float, a: float = 3.7, epsilon: float = 1e-6) -> LqaDiagonal:
    """entry_j = scad_q(|w_j|, lam, a) / (epsilon + |w_j|), elementwise."""
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    w = np.atleast_1d(np.asarray(omega_block, dtype=np.float64))
    u = np.abs(w)
    return LqaDiagonal(scad_q(u, lam, a) / (epsilon + u))


def hard_threshold(omega: NuisanceParams, zero_threshold: float) -> NuisanceParams:
    """Zero every coefficient below the threshold, keeping block intercepts."""
    updates = {}
    for name, vec in omega.blocks().items():
        out = vec.copy()
        small = np.abs(out) < zero_threshold
        small[0] = False
        out[small] = 0.0
        updates[name] = out
    return replace(omega, **updates)
