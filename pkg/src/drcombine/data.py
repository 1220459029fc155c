"""Dataset containers and parameter bundles for two-sample ATE estimation.

The data model merges a probability survey sample (rows flagged ``i_a``,
carrying design weights) with a non-probability sample (rows flagged ``i_b``,
carrying treatment and outcome).  A row never belongs to both samples, and the
covariate matrix always carries a materialized leading intercept column.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterator, Literal, Optional

import numpy as np

__all__ = [
    "CombinedDataset",
    "ConfigError",
    "DataError",
    "ModelSpec",
    "NumericalError",
    "NuisanceParams",
    "PenaltyConfig",
    "UnitRecord",
    "dataset_from_csv",
    "dataset_to_csv",
    "derive_pop_size",
    "validate",
]


class ConfigError(ValueError):
    """Invalid configuration or an unusable option combination."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(RuntimeError):
    """A numerical routine failed (singular system, non-convergence)."""


Link = Literal["identity", "logit"]
Parameterization = Literal["conditional", "joint"]
OutcomeKind = Literal["continuous", "binary"]


@dataclass(frozen=True)
class UnitRecord:
    """One population unit as observed through the two samples.

    ``x`` includes the intercept as its first entry.  ``weight_a`` is the
    design weight and exists exactly when ``i_a`` is set; ``t`` and ``y`` must
    exist for sample-B rows and may exist for survey rows.
    """

    x: np.ndarray
    i_a: bool = False
    i_b: bool = False
    weight_a: Optional[float] = None
    t: Optional[int] = None
    y: Optional[float] = None


def _as_optional_column(values, n: int) -> np.ndarray:
    col = np.full(n, np.nan, dtype=np.float64)
    for i, v in enumerate(values):
        if v is not None:
            col[i] = float(v)
    return col


@dataclass(frozen=True, eq=False)
class CombinedDataset:
    """Columnar store for the combined sample.

    Optional per-row fields are held as float columns with NaN marking
    absence, which keeps every estimating-equation sum a plain masked numpy
    reduction.  ``pop_size`` defaults to the rounded sum of sample-A design
    weights when not supplied.
    """

    x: np.ndarray
    i_a: np.ndarray
    i_b: np.ndarray
    weight_a: np.ndarray
    t: np.ndarray
    y: np.ndarray
    pop_size: Optional[int] = None
    outcome_kind: OutcomeKind = "continuous"

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.ascontiguousarray(self.x, dtype=np.float64))
        object.__setattr__(self, "i_a", np.asarray(self.i_a, dtype=bool))
        object.__setattr__(self, "i_b", np.asarray(self.i_b, dtype=bool))
        for name in ("weight_a", "t", "y"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.pop_size is None:
            object.__setattr__(self, "pop_size", derive_pop_size(self))

    # -- shape ----------------------------------------------------------
    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    # -- cached row views used by every estimating equation --------------
    @cached_property
    def a_rows(self) -> np.ndarray:
        return np.flatnonzero(self.i_a)

    @cached_property
    def b_rows(self) -> np.ndarray:
        return np.flatnonzero(self.i_b)

    @cached_property
    def x_a(self) -> np.ndarray:
        return self.x[self.a_rows]

    @cached_property
    def x_b(self) -> np.ndarray:
        return self.x[self.b_rows]

    @cached_property
    def d_a(self) -> np.ndarray:
        return self.weight_a[self.a_rows]

    @cached_property
    def t_b(self) -> np.ndarray:
        return self.t[self.b_rows]

    @cached_property
    def y_b(self) -> np.ndarray:
        return self.y[self.b_rows]

    # -- construction and views ------------------------------------------
    @classmethod
    def from_records(
        cls,
        records: list[UnitRecord],
        pop_size: Optional[int] = None,
        outcome_kind: OutcomeKind = "continuous",
    ) -> "CombinedDataset":
        if not records:
            raise DataError("empty record list")
        x = np.vstack([np.asarray(r.x, dtype=np.float64) for r in records])
        return cls(
            x=x,
            i_a=np.array([r.i_a for r in records]),
            i_b=np.array([r.i_b for r in records]),
            weight_a=_as_optional_column([r.weight_a for r in records], len(records)),
            t=_as_optional_column([r.t for r in records], len(records)),
            y=_as_optional_column([r.y for r in records], len(records)),
            pop_size=pop_size,
            outcome_kind=outcome_kind,
        )

    def records(self) -> Iterator[UnitRecord]:
        for i in range(self.n):
            yield UnitRecord(
                x=self.x[i],
                i_a=bool(self.i_a[i]),
                i_b=bool(self.i_b[i]),
                weight_a=None if math.isnan(self.weight_a[i]) else float(self.weight_a[i]),
                t=None if math.isnan(self.t[i]) else int(self.t[i]),
                y=None if math.isnan(self.y[i]) else float(self.y[i]),
            )

    def subset(self, rows: np.ndarray, pop_size: Optional[int] = None) -> "CombinedDataset":
        """Row-restricted copy; ``pop_size`` is re-derived unless supplied."""
        return CombinedDataset(
            x=self.x[rows],
            i_a=self.i_a[rows],
            i_b=self.i_b[rows],
            weight_a=self.weight_a[rows],
            t=self.t[rows],
            y=self.y[rows],
            pop_size=pop_size,
            outcome_kind=self.outcome_kind,
        )

    def with_outcome(self, y: np.ndarray) -> "CombinedDataset":
        return replace(self, y=np.asarray(y, dtype=np.float64))


def derive_pop_size(dataset: CombinedDataset) -> int:
    """Population size as the rounded sum of sample-A design weights."""
    weights = dataset.weight_a[np.asarray(dataset.i_a, dtype=bool)]
    if weights.size == 0:
        raise DataError("cannot estimate N: no sample-A records")
    return int(round(math.fsum(weights.tolist())))


def validate(dataset: CombinedDataset) -> list[str]:
    """Check every structural invariant; return violation descriptions.

    Pure: never mutates and never raises on bad data.  A >5% gap between the
    supplied population size and the weight-derived one only triggers a
    warning, since the supplied value is preferred by contract.
    """
    out: list[str] = []
    ds = dataset
    if ds.x.ndim != 2:
        return [f"covariate matrix must be 2-d, got ndim={ds.x.ndim}"]
    n = ds.n
    for name in ("i_a", "i_b", "weight_a", "t", "y"):
        col = getattr(ds, name)
        if col.shape != (n,):
            out.append(f"column {name} has shape {col.shape}, expected ({n},)")
    if out:
        return out
    if not np.all(np.isfinite(ds.x)):
        out.append("non-finite covariate values")
    if not np.all(ds.x[:, 0] == 1.0):
        bad = int(np.flatnonzero(ds.x[:, 0] != 1.0)[0])
        out.append(f"intercept column is not 1 at index {bad}")
    overlap = np.flatnonzero(ds.i_a & ds.i_b)
    for i in overlap[:5]:
        out.append(f"overlap at index {int(i)}: record flagged in both samples")
    w_in = ds.weight_a[ds.i_a]
    if w_in.size and not np.all(np.isfinite(w_in) & (w_in >= 1.0)):
        out.append("sample-A design weights must be finite and >= 1")
    if np.any(~np.isnan(ds.weight_a[~ds.i_a])):
        out.append("design weight present on a record outside sample A")
    t_vals = ds.t[~np.isnan(ds.t)]
    if t_vals.size and not np.all(np.isin(t_vals, (0.0, 1.0))):
        out.append("treatment values must be 0 or 1")
    miss_t = np.flatnonzero(ds.i_b & np.isnan(ds.t))
    for i in miss_t[:5]:
        out.append(f"missing treatment in sample B at index {int(i)}")
    miss_y = np.flatnonzero(ds.i_b & np.isnan(ds.y))
    for i in miss_y[:5]:
        out.append(f"missing outcome in sample B at index {int(i)}")
    if ds.outcome_kind == "binary":
        y_vals = ds.y[~np.isnan(ds.y)]
        if y_vals.size and not np.all(np.isin(y_vals, (0.0, 1.0))):
            out.append("binary outcome values must be 0 or 1")
    if ds.pop_size is not None and ds.pop_size < n:
        out.append(f"population size {ds.pop_size} smaller than record count {n}")
    if np.any(ds.i_a):
        derived = derive_pop_size(ds)
        if ds.pop_size and abs(derived - ds.pop_size) > 0.05 * ds.pop_size:
            warnings.warn(
                f"supplied population size {ds.pop_size} differs from "
                f"weight-derived {derived} by more than 5%; keeping supplied value",
                stacklevel=2,
            )
    return out


# ---------------------------------------------------------------------------
# parameter bundle


@dataclass(frozen=True)
class NuisanceParams:
    """Coefficient blocks for the four working models.

    Conditional parameterization carries (alpha, tau) for selection and
    treatment; the joint parameterization carries (delta1, delta0) for the
    two joint membership-and-arm models.  ``beta``/``gamma`` are the treated
    and control outcome models in either case.  The stacked layout is
    (alpha, tau, beta, gamma) — or (delta1, delta0, beta, gamma) — which is
    the order the penalized score pairs coefficients with equations.
    """

    beta: np.ndarray
    gamma: np.ndarray
    alpha: Optional[np.ndarray] = None
    tau: Optional[np.ndarray] = None
    delta1: Optional[np.ndarray] = None
    delta0: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        for name in ("beta", "gamma", "alpha", "tau", "delta1", "delta0"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=np.float64))
        cond = self.alpha is not None and self.tau is not None
        joint = self.delta1 is not None and self.delta0 is not None
        if cond == joint:
            raise ConfigError(
                "exactly one of (alpha, tau) or (delta1, delta0) must be supplied"
            )
        lengths = {len(v) for v in self.blocks().values()}
        if len(lengths) != 1:
            raise ConfigError(f"coefficient blocks differ in length: {sorted(lengths)}")

    @property
    def parameterization(self) -> Parameterization:
        return "conditional" if self.alpha is not None else "joint"

    @property
    def d(self) -> int:
        return len(self.beta)

    def blocks(self) -> dict[str, np.ndarray]:
        """Blocks in stacked order (weighting blocks first, then outcomes)."""
        if self.alpha is not None:
            return {"alpha": self.alpha, "tau": self.tau, "beta": self.beta, "gamma": self.gamma}
        return {"delta1": self.delta1, "delta0": self.delta0, "beta": self.beta, "gamma": self.gamma}

    @property
    def eta(self) -> np.ndarray:
        first, second = list(self.blocks().values())[:2]
        return np.concatenate([first, second])

    @property
    def mu(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])

    def stacked(self) -> np.ndarray:
        return np.concatenate(list(self.blocks().values()))

    @classmethod
    def from_stacked(
        cls, vec: np.ndarray, d: int, parameterization: Parameterization = "conditional"
    ) -> "NuisanceParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (4 * d,):
            raise ConfigError(f"stacked vector must have length {4 * d}")
        a, b, c, g = vec[:d], vec[d : 2 * d], vec[2 * d : 3 * d], vec[3 * d :]
        if parameterization == "conditional":
            return cls(beta=c, gamma=g, alpha=a, tau=b)
        return cls(beta=c, gamma=g, delta1=a, delta0=b)

    def with_eta(self, eta: np.ndarray) -> "NuisanceParams":
        d = self.d
        first, second = eta[:d], eta[d:]
        if self.parameterization == "conditional":
            return replace(self, alpha=first, tau=second)
        return replace(self, delta1=first, delta0=second)

    def with_mu(self, mu: np.ndarray) -> "NuisanceParams":
        d = self.d
        return replace(self, beta=mu[:d], gamma=mu[d:])

    def support(self) -> dict[str, list[int]]:
        """Indices of nonzero slope coefficients per block (intercept excluded)."""
        return {
            name: [int(j) for j in np.flatnonzero(vec[1:] != 0.0) + 1]
            for name, vec in self.blocks().items()
        }


@dataclass(frozen=True)
class ModelSpec:
    """Link choices and weighting parameterization for the working models."""

    selection_link: Link = "logit"
    treatment_link: Link = "logit"
    outcome_link: Link = "identity"
    parameterization: Parameterization = "conditional"

    def __post_init__(self) -> None:
        if self.selection_link != "logit" or self.treatment_link != "logit":
            raise ConfigError("selection and treatment models support only the logit link")
        if self.outcome_link not in ("identity", "logit"):
            raise ConfigError(f"unsupported outcome link {self.outcome_link!r}")
        if self.parameterization not in ("conditional", "joint"):
            raise ConfigError(f"unsupported parameterization {self.parameterization!r}")


def check_spec_against(dataset: CombinedDataset, spec: ModelSpec) -> None:
    """Outcome link must match the dataset's outcome kind."""
    expected = "identity" if dataset.outcome_kind == "continuous" else "logit"
    if spec.outcome_link != expected:
        raise ConfigError(
            f"outcome link {spec.outcome_link!r} inconsistent with "
            f"{dataset.outcome_kind!r} outcomes (expected {expected!r})"
        )


@dataclass(frozen=True)
class PenaltyConfig:
    """SCAD penalty constants and solver tolerances."""

    lambda_eta: float = 0.0
    lambda_mu: float = 0.0
    a: float = 3.7
    epsilon: float = 1e-6
    zero_threshold: float = 1e-4
    max_iter: int = 50
    tol_xi: float = 1e-2
    prob_clip: float = 1e-6

    def __post_init__(self) -> None:
        if self.a <= 2:
            raise ConfigError("SCAD shape constant must exceed 2")
        if min(self.lambda_eta, self.lambda_mu) < 0:
            raise ConfigError("penalty levels must be nonnegative")
        if self.epsilon <= 0 or self.tol_xi <= 0 or self.zero_threshold <= 0:
            raise ConfigError("epsilon, tol_xi and zero_threshold must be positive")
        if not 0 < self.prob_clip < 0.5:
            raise ConfigError("prob_clip must lie in (0, 0.5)")


# ---------------------------------------------------------------------------
# canonical CSV serialization (round-trip exact)

_FMT = "%.17g"


def _cell(v: float) -> str:
    return "" if math.isnan(v) else _FMT % v


def dataset_to_csv(dataset: CombinedDataset, path: str) -> None:
    """Write the canonical CSV form; floats keep 17 significant digits."""
    d = dataset.d
    header = ["i_a", "i_b", "weight_a", "t", "y"] + [f"x{j}" for j in range(1, d)]
    with open(path, "w", newline="") as fh:
        fh.write(f"# pop_size={dataset.pop_size}\n")
        fh.write(f"# outcome_kind={dataset.outcome_kind}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [
                int(dataset.i_a[i]),
                int(dataset.i_b[i]),
                _cell(dataset.weight_a[i]),
                _cell(dataset.t[i]),
                _cell(dataset.y[i]),
            ] + [_FMT % v for v in dataset.x[i, 1:]]
            writer.writerow(row)


def dataset_from_csv(path: str) -> CombinedDataset:
    """Parse the canonical CSV form written by :func:`dataset_to_csv`."""
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
                continue
            rows.append(next(csv.reader([line])))
    if not rows:
        raise DataError(f"{path}: no header row")
    header, body = rows[0], rows[1:]
    d = len(header) - 5 + 1
    n = len(body)
    x = np.ones((n, d))
    i_a = np.zeros(n, dtype=bool)
    i_b = np.zeros(n, dtype=bool)
    opt = {name: np.full(n, np.nan) for name in ("weight_a", "t", "y")}
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        i_a[i] = row[0] == "1"
        i_b[i] = row[1] == "1"
        for j, name in enumerate(("weight_a", "t", "y")):
            if row[2 + j] != "":
                opt[name][i] = float(row[2 + j])
        x[i, 1:] = [float(v) for v in row[5:]]
    return CombinedDataset(
        x=x,
        i_a=i_a,
        i_b=i_b,
        weight_a=opt["weight_a"],
        t=opt["t"],
        y=opt["y"],
        pop_size=int(meta["pop_size"]) if "pop_size" in meta else None,
        outcome_kind=meta.get("outcome_kind", "continuous"),  # type: ignore[arg-type]
    )
