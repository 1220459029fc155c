"""Additive working-model evaluation: inverse links and their derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np

from .data import ConfigError

__all__ = ["LinkEval", "eval_link", "expit", "predict"]

Which = Literal["selection", "treatment", "outcome1", "outcome0", "joint1", "joint0"]

# models whose predictions feed inverse weights and therefore get clamped
_PROBABILITY_MODELS = frozenset({"selection", "treatment", "joint1", "joint0"})


@dataclass(frozen=True)
class LinkEval:
    """Inverse-link value and its derivative at the linear predictor."""

    value: Union[float, np.ndarray]
    dvalue: Union[float, np.ndarray]


def expit(lp: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    lp = np.asarray(lp, dtype=np.float64)
    out = np.empty_like(lp)
    pos = lp >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-lp[pos]))
    e = np.exp(lp[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def eval_link(link: str, lp) -> LinkEval:
    """Evaluate an inverse link and its derivative at ``lp``.

    identity -> (lp, 1); logit -> (expit(lp), expit(lp)·(1−expit(lp))).
    """
    scalar = np.isscalar(lp)
    arr = np.asarray(lp, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("non-finite linear predictor")
    if link == "identity":
        value, dvalue = arr, np.ones_like(arr)
    elif link == "logit":
        value = expit(arr)
        dvalue = value * (1.0 - value)
    else:
        raise ConfigError(f"unknown link {link!r}")
    if scalar:
        return LinkEval(float(value), float(dvalue))
    return LinkEval(value, dvalue)


def _link_for(spec, which: Which) -> str:
    if which == "selection":
        return spec.selection_link
    if which == "treatment":
        return spec.treatment_link
    if which in ("outcome1", "outcome0"):
        return spec.outcome_link
    if which in ("joint1", "joint0"):
        return "logit"
    raise ConfigError(f"unknown model role {which!r}")


def predict(
    spec,
    which: Which,
    coef: np.ndarray,
    x: np.ndarray,
    clip: Optional[float] = None,
) -> LinkEval:
    """Model prediction for one role of the ModelSpec.

    ``x`` may be a single covariate vector or a matrix of rows.  For
    probability-valued models the value is clamped into [clip, 1−clip] so
    inverse weights stay finite; the derivative is reported at the unclamped
    linear predictor.
    """
    coef = np.asarray(coef, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != coef.shape[0]:
        raise ConfigError(
            f"dimension mismatch: x has {x.shape[-1]} columns, coef has {coef.shape[0]}"
        )
    ev = eval_link(_link_for(spec, which), x @ coef)
    if clip is not None and which in _PROBABILITY_MODELS:
        return LinkEval(np.clip(ev.value, clip, 1.0 - clip), ev.dvalue)
    return ev
