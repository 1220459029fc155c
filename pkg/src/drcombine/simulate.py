"""Monte-Carlo studies of the combined-sample estimators.

A case describes one synthetic design: covariate law, outcome model, and
either selection-plus-treatment models (conditional weights) or joint
membership-arm models.  Each replicate generates a finite population, draws
the survey and the non-probability sample, runs the requested estimators,
and records effects, standard errors, interval coverage, selected supports,
and fitted coefficients.  Metrics aggregate replicates deterministically, so
the same case, seed, and estimator set give byte-identical summaries
regardless of worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .data import CombinedDataset, ConfigError, DataError, ModelSpec, NuisanceParams
from .estimators import _PENALIZED_KINDS, KINDS, RosterConfig, estimate_with_details
from .links import expit

__all__ = [
    "CASE_NAMES",
    "CaseMetrics",
    "CaseSpec",
    "DEFAULT_ESTIMATORS",
    "Population",
    "ReplicationResult",
    "case_spec",
    "compute_metrics",
    "draw_samples",
    "generate_joint_case",
    "generate_population",
    "metrics_to_csv",
    "metrics_to_text",
    "oracle_true_theta",
    "run_replications",
]

FULL_POP_SIZE = 50_000
DESK_POP_SIZE = 20_000
N_COVARIATES = 50
SURVEY_RATE = 0.02
TRUTH_SEED = 987_654_321  # seed of the frozen large-sample truth constants

DEFAULT_ESTIMATORS = (
    "dr_combined",
    "or_combined",
    "ipw_combined",
    "naive_nonprob",
    "oracle_dr",
)

# Large-sample values of the population contrast for designs without a
# closed form, computed once from a 10^6-unit draw at TRUTH_SEED (see
# scripts/true_theta.py to regenerate).
THETA_LINEAR = 1.0
THETA_ABS = 1.0 + 2.0 * math.sqrt(2.0 / math.pi)
THETA_BINARY_A = 0.11086
THETA_BINARY_B = 0.26597
THETA_JOINT_CONT_A = 0.65
THETA_JOINT_CONT_B = 1.20111
THETA_JOINT_BIN_A = 0.13923
THETA_JOINT_BIN_B = -0.15360

BLOCK_ORDER = ("alpha", "tau", "delta1", "delta0", "beta", "gamma")


@dataclass(frozen=True, eq=False)
class CaseSpec:
    """One synthetic design, fully determined up to the seed."""

    name: str
    parameterization: str  # "conditional" | "joint"
    outcome_kind: str  # "continuous" | "binary"
    outcome_form: str  # "a" = matches the working model, "b" = does not
    weight_form: str  # selection form (conditional) or membership form (joint)
    treatment_form: str = "a"  # conditional designs only
    pop_size: int = FULL_POP_SIZE
    n_covariates: int = N_COVARIATES
    survey_rate: float = SURVEY_RATE
    theta_true: float = THETA_LINEAR
    reference_coefs: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.n_covariates + 1

    @property
    def true_support(self) -> Dict[str, Tuple[int, ...]]:
        out = {}
        for block, coef in self.reference_coefs.items():
            out[block] = tuple(int(j) for j in np.flatnonzero(coef[1:] != 0.0) + 1)
        return out

    def model_spec(self) -> ModelSpec:
        link = "identity" if self.outcome_kind == "continuous" else "logit"
        return ModelSpec(outcome_link=link, parameterization=self.parameterization)


def _vec(d: int, entries: Sequence[float]) -> np.ndarray:
    out = np.zeros(d)
    out[: len(entries)] = entries
    return out


def _conditional_refs(d: int, binary: bool) -> Dict[str, np.ndarray]:
    refs = {
        "alpha": _vec(d, [-2.3, 0.5, 0.5, 0.5]),
        "tau": _vec(d, [-1.0, -0.5, -0.5, -0.5]),
    }
    if binary:
        refs["beta"] = _vec(d, [-0.5, 1.5, 0.5, 0.5, 0.5, 0.5])
        refs["gamma"] = _vec(d, [-1.0, 0.5, 0.5, 0.5, 0.5, 0.5])
    else:
        refs["beta"] = _vec(d, [2.0, 3.0, 1.0, 1.0, 1.0, 1.0])
        refs["gamma"] = _vec(d, [1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    return refs


def _joint_refs(d: int, binary: bool, weight_form: str) -> Dict[str, np.ndarray]:
    if weight_form == "a":
        refs = {
            "delta1": _vec(d, [-3.4, 1.0, 0.5, -0.5]),
            "delta0": _vec(d, [-2.0, -1.0, -0.5, -0.5]),
        }
    else:
        refs = {
            "delta1": _vec(d, [-1.0, 0.5, 0.5, -0.5]),
            "delta0": _vec(d, [-0.5, -0.5, -0.5, 0.5]),
        }
    if binary:
        refs["beta"] = _vec(d, [-1.5, 0.5, 0.5, 0.5, 0.5])
        refs["gamma"] = _vec(d, [-2.0, 0.3, 0.3, 0.5, 0.5])
    else:
        refs["beta"] = _vec(d, [-0.5, 1.3, 0.3, 0.0, 1.0, 1.0])
        refs["gamma"] = _vec(d, [-0.5, 0.3, 0.0, 0.0, 1.0, 1.0])
    return refs


_CONDITIONAL_FORMS = {
    # case number -> (outcome, selection, treatment); "a" correct, "b" not
    1: ("a", "a", "a"),
    2: ("a", "b", "a"),
    3: ("a", "a", "b"),
    4: ("a", "b", "b"),
    5: ("b", "a", "a"),
    6: ("b", "b", "a"),
    7: ("b", "a", "b"),
    8: ("b", "b", "b"),
}

_JOINT_FORMS = {1: ("a", "a"), 2: ("a", "b"), 3: ("b", "a"), 4: ("b", "b")}

CASE_NAMES = tuple(
    [f"case{k}" for k in range(1, 9)]
    + [f"case{k}b" for k in range(1, 9)]
    + [f"s{k}" for k in range(1, 5)]
    + [f"s{k}b" for k in range(1, 5)]
)


def case_spec(name: str, desk_scale: bool = False) -> CaseSpec:
    """Look up a named design, optionally at desk scale."""
    name = name.lower()
    if name not in CASE_NAMES:
        raise ConfigError(f"unknown case {name!r}; choose one of {', '.join(CASE_NAMES)}")
    pop = DESK_POP_SIZE if desk_scale else FULL_POP_SIZE
    d = N_COVARIATES + 1
    binary = name.endswith("b")
    stem = name[:-1] if binary else name
    if stem.startswith("case"):
        k = int(stem[4:])
        om, sm, tm = _CONDITIONAL_FORMS[k]
        if binary:
            theta = THETA_BINARY_A if om == "a" else THETA_BINARY_B
        else:
            theta = THETA_LINEAR if om == "a" else THETA_ABS
        return CaseSpec(
            name=name,
            parameterization="conditional",
            outcome_kind="binary" if binary else "continuous",
            outcome_form=om,
            weight_form=sm,
            treatment_form=tm,
            pop_size=pop,
            theta_true=theta,
            reference_coefs=_conditional_refs(d, binary),
        )
    k = int(stem[1:])
    om, wm = _JOINT_FORMS[k]
    if binary:
        theta = THETA_JOINT_BIN_A if om == "a" else THETA_JOINT_BIN_B
    else:
        theta = THETA_JOINT_CONT_A if om == "a" else THETA_JOINT_CONT_B
    return CaseSpec(
        name=name,
        parameterization="joint",
        outcome_kind="binary" if binary else "continuous",
        outcome_form=om,
        weight_form=wm,
        pop_size=pop,
        theta_true=theta,
        reference_coefs=_joint_refs(d, binary, wm),
    )


# ---------------------------------------------------------------------------
# population and sample generation


@dataclass(frozen=True, eq=False)
class Population:
    """Finite population with both potential outcomes materialized."""

    x: np.ndarray  # (N, d) design with a leading column of ones
    t: np.ndarray  # (N,) treatment indicator (NaN where undefined)
    y: np.ndarray  # (N,) realized outcome (NaN where undefined)
    y1: np.ndarray  # (N,) outcome under treatment
    y0: np.ndarray  # (N,) outcome under control
    p_select: Optional[np.ndarray] = None  # (N,) B-membership probability

    @property
    def theta(self) -> float:
        return float(np.mean(self.y1 - self.y0))


def _rng(seed: int, word: int) -> np.random.Generator:
    key = np.array([seed % (2**63), word % (2**63)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _mix_seed(seed: int, word: int) -> int:
    return ((seed % (2**63)) * 2_654_435_761 + word) % (2**63)


def _conditional_outcomes(case: CaseSpec, x: np.ndarray, rng: np.random.Generator):
    z = x[:, 1:6]  # the five active covariates
    z = z if case.outcome_form == "a" else np.abs(z)
    n = x.shape[0]
    if case.outcome_kind == "continuous":
        eps = rng.standard_normal(n)
        base = 1.0 + z.sum(axis=1) + eps
        y0 = base
        y1 = base + 1.0 + 2.0 * z[:, 0]
    else:
        u = rng.random(n)
        if case.outcome_form == "a":
            lp0 = -1.0 + 0.5 * z[:, 0] + 0.5 * z[:, 1:5].sum(axis=1)
            lp1 = lp0 + 0.5 + z[:, 0]
        else:
            lp0 = -3.0 + 0.5 * z[:, 0] + 0.5 * z[:, 1:5].sum(axis=1)
            lp1 = lp0 + 0.5 + z[:, 0]
        y1 = (u < expit(lp1)).astype(np.float64)
        y0 = (u < expit(lp0)).astype(np.float64)
    return y1, y0


def _selection_prob(case: CaseSpec, x: np.ndarray) -> np.ndarray:
    if case.weight_form == "a":
        lp = -2.3 + 0.5 * (x[:, 1] + x[:, 2] + x[:, 3])
    else:
        # the second indicator enters twice in this design
        lp = -3.2 + ((x[:, 1] > 1.0) + (x[:, 2] > 1.0) + (x[:, 2] > 1.0)) ** 2
    return expit(lp)


def _treatment_prob(case: CaseSpec, x: np.ndarray) -> np.ndarray:
    if case.treatment_form == "a":
        lp = -1.0 - 0.5 * (x[:, 1] + x[:, 2] + x[:, 3])
    else:
        lp = -1.0 - 0.5 * x[:, 1] ** 2 - 0.5 * x[:, 2] ** 2 - 0.5 * (x[:, 3] > 0.5)
    return expit(lp)


def generate_population(case: CaseSpec, seed: int, counter: int = 0) -> Population:
    """Covariates, treatments, and both potential outcomes for one replicate."""
    if case.parameterization != "conditional":
        raise ConfigError("use generate_joint_case for joint designs")
    rng = _rng(seed, counter)
    n = case.pop_size
    x = np.hstack([np.ones((n, 1)), rng.standard_normal((n, case.n_covariates))])
    t = (rng.random(n) < _treatment_prob(case, x)).astype(np.float64)
    y1, y0 = _conditional_outcomes(case, x, rng)
    y = np.where(t == 1.0, y1, y0)
    return Population(x=x, t=t, y=y, y1=y1, y0=y0, p_select=_selection_prob(case, x))


def draw_samples(population: Population, case: CaseSpec, seed: int, counter: int = 0) -> CombinedDataset:
    """Draw the survey (A) and the non-probability sample (B) without overlap."""
    rng = _rng(seed, counter + 1)
    n = population.x.shape[0]
    in_a = rng.random(n) < case.survey_rate
    in_b = ~in_a & (rng.random(n) < population.p_select)
    a_idx = np.flatnonzero(in_a)
    b_idx = np.flatnonzero(in_b)
    if a_idx.size == 0 or b_idx.size == 0:
        raise DataError("a replicate drew an empty sample; enlarge the population")
    rows = np.concatenate([a_idx, b_idx])
    n_rec = rows.size
    i_a = np.zeros(n_rec, dtype=bool)
    i_a[: a_idx.size] = True
    weight = np.full(n_rec, np.nan)
    weight[: a_idx.size] = 1.0 / case.survey_rate
    t = np.full(n_rec, np.nan)
    y = np.full(n_rec, np.nan)
    t[a_idx.size :] = population.t[b_idx]
    y[a_idx.size :] = population.y[b_idx]
    return CombinedDataset(
        x=population.x[rows],
        i_a=i_a,
        i_b=~i_a,
        weight_a=weight,
        t=t,
        y=y,
        pop_size=case.pop_size,
        outcome_kind=case.outcome_kind,
    )


def _joint_outcomes(case: CaseSpec, x: np.ndarray, rng: np.random.Generator):
    beta = case.reference_coefs["beta"]
    gamma = case.reference_coefs["gamma"]
    lp1, lp0 = x @ beta, x @ gamma
    if case.outcome_form == "b":
        if case.outcome_kind == "continuous":
            lp1, lp0 = np.log(lp1**2), np.log(lp0**2)
        else:
            lp1, lp0 = lp1**2, lp0**2
    n = x.shape[0]
    if case.outcome_kind == "continuous":
        eps = rng.standard_normal(n)
        return lp1 + eps, lp0 + eps
    u = rng.random(n)
    return (u < expit(lp1)).astype(np.float64), (u < expit(lp0)).astype(np.float64)


def generate_joint_case(
    case: CaseSpec, seed: int, counter: int = 0
) -> Tuple[CombinedDataset, Population]:
    """One replicate of a joint membership-arm design."""
    if case.parameterization != "joint":
        raise ConfigError("generate_joint_case needs a joint design")
    rng = _rng(seed, counter)
    n = case.pop_size
    x = np.hstack([np.ones((n, 1)), rng.gamma(0.5, 1.0, (n, case.n_covariates))])
    d1, d0 = case.reference_coefs["delta1"], case.reference_coefs["delta0"]
    lp1, lp0 = x @ d1, x @ d0
    if case.weight_form == "b":
        lp1 = lp1**2 - 4.2
        lp0 = lp0**2 - 4.0
    w1, w0 = expit(lp1), expit(lp0)
    if np.any(w1 + w0 > 1.0):
        raise DataError("invalid joint probabilities")
    u = rng.random(n)
    in_b1 = u < w1
    in_b0 = ~in_b1 & (u < w1 + w0)
    in_b = in_b1 | in_b0
    y1, y0 = _joint_outcomes(case, x, rng)

    sample_rng = _rng(seed, counter + 1)
    in_a = ~in_b & (sample_rng.random(n) < case.survey_rate)
    a_idx, b_idx = np.flatnonzero(in_a), np.flatnonzero(in_b)
    if a_idx.size == 0 or b_idx.size == 0:
        raise DataError("a replicate drew an empty sample; enlarge the population")
    rows = np.concatenate([a_idx, b_idx])
    n_rec = rows.size
    i_a = np.zeros(n_rec, dtype=bool)
    i_a[: a_idx.size] = True
    weight = np.full(n_rec, np.nan)
    weight[: a_idx.size] = 1.0 / case.survey_rate
    t_pop = np.full(n, np.nan)
    t_pop[in_b1] = 1.0
    t_pop[in_b0] = 0.0
    y_pop = np.where(t_pop == 1.0, y1, y0)
    t = np.full(n_rec, np.nan)
    y = np.full(n_rec, np.nan)
    t[a_idx.size :] = t_pop[b_idx]
    y[a_idx.size :] = y_pop[b_idx]
    dataset = CombinedDataset(
        x=x[rows],
        i_a=i_a,
        i_b=~i_a,
        weight_a=weight,
        t=t,
        y=y,
        pop_size=case.pop_size,
        outcome_kind=case.outcome_kind,
    )
    population = Population(x=x, t=t_pop, y=y_pop, y1=y1, y0=y0)
    return dataset, population


def oracle_true_theta(case: CaseSpec, n: int = 1_000_000, seed: int = TRUTH_SEED) -> float:
    """Monte-Carlo population contrast on a large independent draw."""
    big = replace(case, pop_size=n) if case.pop_size != n else case
    if case.parameterization == "conditional":
        pop = generate_population(big, seed)
    else:
        _, pop = generate_joint_case(big, seed)
    return pop.theta


# ---------------------------------------------------------------------------
# replication engine


@dataclass(frozen=True)
class ReplicationResult:
    """Everything recorded from one simulated dataset."""

    replicate_id: int
    seed: int
    theta_pop: float
    theta_hats: Dict[str, float]
    se: Dict[str, float]
    ci_covered: Dict[str, bool]
    support_hat: Dict[str, Dict[str, Tuple[int, ...]]]
    coef_hats: Dict[str, Dict[str, Tuple[float, ...]]]
    wall_time: float
    error: Optional[str] = None


def _support_of(params: NuisanceParams) -> Dict[str, Tuple[int, ...]]:
    return {k: tuple(v) for k, v in params.support().items()}


def _blocks_of(params: NuisanceParams) -> Dict[str, Tuple[float, ...]]:
    return {k: tuple(v.tolist()) for k, v in params.blocks().items()}


def run_one_replicate(
    case: CaseSpec,
    replicate_id: int,
    base_seed: int,
    estimators: Sequence[str] = DEFAULT_ESTIMATORS,
    penalize: bool = True,
) -> ReplicationResult:
    """Generate one dataset and run the requested estimators on it."""
    started = time.perf_counter()
    counter = replicate_id * 16
    try:
        if case.parameterization == "conditional":
            population = generate_population(case, base_seed, counter)
            dataset = draw_samples(population, case, base_seed, counter)
        else:
            dataset, population = generate_joint_case(case, base_seed, counter)
        spec = case.model_spec()
        cv_seed = _mix_seed(base_seed, counter + 2)
        theta_hats: Dict[str, float] = {}
        ses: Dict[str, float] = {}
        covered: Dict[str, bool] = {}
        supports: Dict[str, Dict[str, Tuple[int, ...]]] = {}
        coefs: Dict[str, Dict[str, Tuple[float, ...]]] = {}
        for kind in estimators:
            cfg = RosterConfig(
                spec=spec,
                penalized=penalize and kind in _PENALIZED_KINDS,
                seed=cv_seed,
                true_support=case.true_support if kind == "oracle_dr" else None,
            )
            report, extras = estimate_with_details(dataset, kind, cfg)
            theta_hats[kind] = report.theta_hat
            ses[kind] = report.se
            covered[kind] = bool(report.ci_low <= case.theta_true <= report.ci_high)
            params = extras.get("coefs")
            if kind in ("dr_combined", "dr_joint") and isinstance(params, NuisanceParams):
                supports[kind] = _support_of(params)
                coefs[kind] = _blocks_of(params)
        return ReplicationResult(
            replicate_id=replicate_id,
            seed=base_seed,
            theta_pop=population.theta,
            theta_hats=theta_hats,
            se=ses,
            ci_covered=covered,
            support_hat=supports,
            coef_hats=coefs,
            wall_time=time.perf_counter() - started,
        )
    except Exception as exc:  # noqa: BLE001 - a replicate failure is recorded, not fatal
        return ReplicationResult(
            replicate_id=replicate_id,
            seed=base_seed,
            theta_pop=math.nan,
            theta_hats={},
            se={},
            ci_covered={},
            support_hat={},
            coef_hats={},
            wall_time=time.perf_counter() - started,
            error=f"{type(exc).__name__}: {exc}",
        )


def _worker(args) -> ReplicationResult:
    case, replicate_id, base_seed, estimators, penalize = args
    return run_one_replicate(case, replicate_id, base_seed, estimators, penalize)


def run_replications(
    case: CaseSpec,
    reps: int,
    estimators: Sequence[str] = DEFAULT_ESTIMATORS,
    base_seed: int = 0,
    jobs: int = 1,
    penalize: bool = True,
) -> List[ReplicationResult]:
    """Run `reps` replicates; results come back in replicate order."""
    unknown = [k for k in estimators if k not in KINDS]
    if unknown:
        raise ConfigError(f"unknown estimators: {', '.join(unknown)}")
    tasks = [(case, r, base_seed, tuple(estimators), penalize) for r in range(reps)]
    if jobs <= 1:
        return [_worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_worker, tasks))


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class CaseMetrics:
    """Summary of one estimator over the completed replicates of a case."""

    case: str
    estimator: str
    reps: int
    failures: int
    theta_true: float
    mean_theta_pop: float
    mean_theta: float
    bias: float
    sd: float
    mean_se: float
    coverage: float
    coverage_moe: float
    sensitivity: Dict[str, float]
    specificity: Dict[str, float]
    mse_nonnull: Dict[str, float]
    mse_null: Dict[str, float]


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else math.nan


def _sd(values: Sequence[float]) -> float:
    if len(values) < 2:
        return math.nan
    m = _mean(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1))


def compute_metrics(
    results: Sequence[ReplicationResult],
    case: CaseSpec,
    estimators: Sequence[str] = DEFAULT_ESTIMATORS,
) -> List[CaseMetrics]:
    """Aggregate replicates per estimator, in the given estimator order."""
    good = [r for r in results if r.error is None]
    failures = len(results) - len(good)
    out: List[CaseMetrics] = []
    support_true = case.true_support
    refs = case.reference_coefs
    mean_pop = _mean([r.theta_pop for r in good])
    for kind in estimators:
        thetas = [r.theta_hats[kind] for r in good if kind in r.theta_hats]
        ses = [r.se[kind] for r in good if kind in r.se]
        cov = [1.0 if r.ci_covered[kind] else 0.0 for r in good if kind in r.ci_covered]
        coverage = _mean(cov)
        moe = (
            2.0 * math.sqrt(coverage * (1.0 - coverage) / len(cov))
            if cov and not math.isnan(coverage)
            else math.nan
        )
        sens: Dict[str, float] = {}
        spcf: Dict[str, float] = {}
        mse_nn: Dict[str, float] = {}
        mse_nul: Dict[str, float] = {}
        with_support = [r for r in good if kind in r.support_hat]
        if with_support:
            d = case.d
            for block, true_idx in support_true.items():
                true_set = set(true_idx)
                null_set = set(range(1, d)) - true_set
                s_vals, p_vals = [], []
                for r in with_support:
                    got = set(r.support_hat[kind].get(block, ()))
                    if true_set:
                        s_vals.append(len(got & true_set) / len(true_set))
                    if null_set:
                        p_vals.append(len(null_set - got) / len(null_set))
                if s_vals:
                    sens[block] = _mean(s_vals)
                if p_vals:
                    spcf[block] = _mean(p_vals)
        with_coefs = [r for r in good if kind in r.coef_hats]
        if with_coefs:
            d = case.d
            for block, ref in refs.items():
                if block not in with_coefs[0].coef_hats[kind]:
                    continue
                true_idx = list(support_true.get(block, ()))
                null_idx = [j for j in range(1, d) if j not in set(true_idx)]
                nn_vals, nul_vals = [], []
                for r in with_coefs:
                    coef = np.asarray(r.coef_hats[kind][block])
                    if true_idx:
                        nn_vals.append(float(np.mean((coef[true_idx] - ref[true_idx]) ** 2)))
                    if null_idx:
                        nul_vals.append(float(np.mean(coef[null_idx] ** 2)))
                if nn_vals:
                    mse_nn[block] = _mean(nn_vals)
                if nul_vals:
                    mse_nul[block] = _mean(nul_vals)
        out.append(
            CaseMetrics(
                case=case.name,
                estimator=kind,
                reps=len(results),
                failures=failures,
                theta_true=case.theta_true,
                mean_theta_pop=mean_pop,
                mean_theta=_mean(thetas),
                bias=_mean(thetas) - case.theta_true if thetas else math.nan,
                sd=_sd(thetas),
                mean_se=_mean(ses),
                coverage=coverage,
                coverage_moe=moe,
                sensitivity=sens,
                specificity=spcf,
                mse_nonnull=mse_nn,
                mse_null=mse_nul,
            )
        )
    return out


# ---------------------------------------------------------------------------
# serialization (deterministic; floats via repr)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))  # plain-float repr even for numpy scalars
    return str(value)


def build_id(case: CaseSpec, reps: int, base_seed: int, estimators: Sequence[str], penalize: bool) -> str:
    canon = "|".join(
        [
            case.name,
            f"pop={case.pop_size}",
            f"reps={reps}",
            f"seed={base_seed}",
            f"estimators={','.join(estimators)}",
            f"penalize={penalize}",
        ]
    )
    return hashlib.sha1(canon.encode()).hexdigest()[:12]


def metrics_to_csv(
    metrics: Sequence[CaseMetrics],
    case: CaseSpec,
    reps: int,
    base_seed: int,
    estimators: Sequence[str],
    penalize: bool,
) -> str:
    """Provenance comments, then one row per estimator, floats via repr."""
    lines = [
        f"# case={case.name} pop_size={case.pop_size} reps={reps} seed={base_seed}",
        f"# estimators={','.join(estimators)} penalize={penalize}",
        f"# build={build_id(case, reps, base_seed, estimators, penalize)}",
    ]
    cols = [
        "case",
        "estimator",
        "reps",
        "failures",
        "theta_true",
        "mean_theta_pop",
        "mean_theta",
        "bias",
        "sd",
        "mean_se",
        "coverage",
        "coverage_moe",
    ]
    for prefix in ("sens", "spec", "mse_nonnull", "mse_null"):
        cols.extend(f"{prefix}_{b}" for b in BLOCK_ORDER)
    lines.append(",".join(cols))
    for m in metrics:
        row = [
            m.case,
            m.estimator,
            str(m.reps),
            str(m.failures),
            _fmt(m.theta_true),
            _fmt(m.mean_theta_pop),
            _fmt(m.mean_theta),
            _fmt(m.bias),
            _fmt(m.sd),
            _fmt(m.mean_se),
            _fmt(m.coverage),
            _fmt(m.coverage_moe),
        ]
        for source in (m.sensitivity, m.specificity, m.mse_nonnull, m.mse_null):
            row.extend(_fmt(source[b]) if b in source else "" for b in BLOCK_ORDER)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def metrics_to_text(metrics: Sequence[CaseMetrics]) -> str:
    """Readable fixed-width summary of the same numbers."""
    if not metrics:
        return "no results\n"
    head = f"{'estimator':<18}{'mean':>10}{'bias':>10}{'sd':>9}{'mean se':>9}{'cover':>8}"
    lines = [
        f"case {metrics[0].case}: true effect {metrics[0].theta_true:.4f}, "
        f"{metrics[0].reps} replicates ({metrics[0].failures} failed)",
        head,
        "-" * len(head),
    ]
    for m in metrics:
        lines.append(
            f"{m.estimator:<18}{m.mean_theta:>10.4f}{m.bias:>10.4f}"
            f"{m.sd:>9.4f}{m.mean_se:>9.4f}{m.coverage:>8.3f}"
        )
    selective = [m for m in metrics if m.sensitivity]
    for m in selective:
        lines.append("")
        lines.append(f"{m.estimator} support recovery (sensitivity / specificity):")
        for block in BLOCK_ORDER:
            if block in m.sensitivity:
                lines.append(
                    f"  {block:<8}{m.sensitivity[block]:.3f} / {m.specificity.get(block, math.nan):.3f}"
                )
    return "\n".join(lines) + "\n"


def replicates_to_jsonl(results: Sequence[ReplicationResult]) -> str:
    """Raw per-replicate records; the only output allowed to carry timings."""
    lines = []
    for r in results:
        lines.append(
            json.dumps(
                {
                    "replicate_id": r.replicate_id,
                    "seed": r.seed,
                    "theta_pop": r.theta_pop,
                    "theta_hats": r.theta_hats,
                    "se": r.se,
                    "ci_covered": r.ci_covered,
                    "support_hat": {k: {b: list(v) for b, v in s.items()} for k, s in r.support_hat.items()},
                    "coef_hats": {k: {b: list(v) for b, v in c.items()} for k, c in r.coef_hats.items()},
                    "wall_time": r.wall_time,
                    "error": r.error,
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"
