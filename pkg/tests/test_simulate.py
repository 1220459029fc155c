"""Synthetic designs, replication engine, and metric aggregation."""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from drcombine import ConfigError, DataError, validate
from drcombine.simulate import (
    CASE_NAMES,
    DESK_POP_SIZE,
    FULL_POP_SIZE,
    N_COVARIATES,
    THETA_ABS,
    THETA_BINARY_A,
    THETA_BINARY_B,
    THETA_JOINT_BIN_A,
    THETA_JOINT_BIN_B,
    THETA_JOINT_CONT_A,
    THETA_JOINT_CONT_B,
    THETA_LINEAR,
    CaseSpec,
    ReplicationResult,
    _treatment_prob,
    _vec,
    build_id,
    case_spec,
    compute_metrics,
    draw_samples,
    generate_joint_case,
    generate_population,
    metrics_to_csv,
    metrics_to_text,
    oracle_true_theta,
    replicates_to_jsonl,
    run_one_replicate,
    run_replications,
)

# ---------------------------------------------------------------------------
# case table


def test_case_table_is_complete():
    assert len(CASE_NAMES) == 24
    for name in CASE_NAMES:
        spec = case_spec(name)
        assert spec.name == name
        assert spec.pop_size == FULL_POP_SIZE
        assert spec.d == N_COVARIATES + 1
        assert spec.survey_rate == 0.02
        joint = name.startswith("s")
        assert spec.parameterization == ("joint" if joint else "conditional")
        assert spec.outcome_kind == ("binary" if name.endswith("b") else "continuous")
        assert case_spec(name, desk_scale=True).pop_size == DESK_POP_SIZE


@pytest.mark.parametrize(
    "name, theta",
    [("case1", THETA_LINEAR), ("case4", THETA_LINEAR), ("case5", THETA_ABS), ("case8", THETA_ABS)]
    + [("case2b", THETA_BINARY_A), ("case7b", THETA_BINARY_B)]
    + [("s1", THETA_JOINT_CONT_A), ("s2", THETA_JOINT_CONT_A)]
    + [("s3", THETA_JOINT_CONT_B), ("s4", THETA_JOINT_CONT_B)]
    + [("s1b", THETA_JOINT_BIN_A), ("s4b", THETA_JOINT_BIN_B)],
)
def test_true_effect_depends_only_on_the_outcome_form(name, theta):
    assert case_spec(name).theta_true == theta


def test_true_support_matches_nonzero_reference_slopes():
    for name in CASE_NAMES:
        spec = case_spec(name)
        for block, coef in spec.reference_coefs.items():
            want = tuple(int(j) for j in range(1, spec.d) if coef[j] != 0.0)
            assert spec.true_support[block] == want
            assert coef.shape == (spec.d,)


def test_model_spec_mapping():
    assert case_spec("case1").model_spec().outcome_link == "identity"
    assert case_spec("case1b").model_spec().outcome_link == "logit"
    assert case_spec("s2").model_spec().parameterization == "joint"


def test_unknown_case_rejected():
    with pytest.raises(ConfigError, match="unknown case"):
        case_spec("case9")


# ---------------------------------------------------------------------------
# generators


def desk_case(name, pop):
    return replace(case_spec(name, desk_scale=True), pop_size=pop)


def test_population_consistency():
    case = desk_case("case1", 3000)
    pop = generate_population(case, seed=5)
    assert pop.x.shape == (3000, case.d)
    np.testing.assert_array_equal(pop.x[:, 0], 1.0)
    assert set(np.unique(pop.t)) <= {0.0, 1.0}
    np.testing.assert_array_equal(pop.y, np.where(pop.t == 1.0, pop.y1, pop.y0))
    assert np.all((pop.p_select > 0) & (pop.p_select < 1))
    assert abs(pop.theta - THETA_LINEAR) < 0.15


def test_population_treatment_rate_tracks_model():
    case = desk_case("case1", 4000)
    pop = generate_population(case, seed=11)
    model_rate = float(np.mean(_treatment_prob(case, pop.x)))
    assert abs(float(np.mean(pop.t)) - model_rate) < 0.03


def test_generate_population_rejects_joint_cases():
    with pytest.raises(ConfigError):
        generate_population(case_spec("s1"), seed=0)


def test_draw_samples_invariants():
    case = desk_case("case1", 4000)
    pop = generate_population(case, seed=2)
    ds = draw_samples(pop, case, seed=2)
    assert validate(ds) == []
    assert not np.any(ds.i_a & ds.i_b)
    np.testing.assert_array_equal(ds.d_a, 1.0 / case.survey_rate)
    a = ds.a_rows
    assert np.all(np.isnan(ds.t[a])) and np.all(np.isnan(ds.y[a]))
    assert np.all(~np.isnan(ds.t_b)) and np.all(~np.isnan(ds.y_b))
    n_a, expect = a.size, 4000 * case.survey_rate
    assert abs(n_a - expect) <= 3.0 * math.sqrt(expect * (1 - case.survey_rate))
    lifted = math.fsum(pop.p_select.tolist())
    assert abs(ds.b_rows.size - lifted) <= 0.15 * lifted
    assert ds.pop_size == case.pop_size
    assert ds.outcome_kind == "continuous"


def test_joint_generator_invariants():
    case = desk_case("s1", 4000)
    ds, pop = generate_joint_case(case, seed=3)
    assert validate(ds) == []
    assert not np.any(ds.i_a & ds.i_b)
    np.testing.assert_array_equal(ds.d_a, 50.0)
    draws = pop.x[:, 1:].ravel()
    assert float(np.mean(draws)) == pytest.approx(0.5, abs=0.01)
    assert float(np.var(draws)) == pytest.approx(0.5, abs=0.02)
    in_b = ~np.isnan(pop.t)
    assert int(np.sum(in_b)) == ds.b_rows.size
    observed = np.where(pop.t == 1.0, pop.y1, pop.y0)[in_b]
    np.testing.assert_array_equal(pop.y[in_b], observed)


def test_joint_generator_rejects_conditional_cases():
    with pytest.raises(ConfigError):
        generate_joint_case(case_spec("case1"), seed=0)


def test_joint_generator_flags_invalid_probabilities():
    case = case_spec("s1", desk_scale=True)
    bad_refs = dict(case.reference_coefs)
    bad_refs["delta1"] = _vec(case.d, [3.0])
    bad_refs["delta0"] = _vec(case.d, [3.0])
    bad = replace(case, pop_size=500, reference_coefs=bad_refs)
    with pytest.raises(DataError, match="invalid joint probabilities"):
        generate_joint_case(bad, seed=1)


@pytest.mark.parametrize(
    "name, expect, band",
    [
        ("case1", THETA_LINEAR, 0.025),
        ("case5", THETA_ABS, 0.02),
        ("case1b", THETA_BINARY_A, 0.005),
        ("s1", THETA_JOINT_CONT_A, 0.01),
    ],
)
def test_frozen_truth_constants_match_fresh_oracle(name, expect, band):
    got = oracle_true_theta(case_spec(name), n=200_000, seed=777)
    assert got == pytest.approx(expect, abs=band)


# ---------------------------------------------------------------------------
# replication engine


FAST_ESTIMATORS = ("dr_combined", "naive_nonprob")


def test_run_one_replicate_records_everything():
    case = desk_case("case1", 2500)
    res = run_one_replicate(case, 3, 42, FAST_ESTIMATORS, penalize=False)
    assert res.error is None
    assert res.replicate_id == 3 and res.seed == 42
    assert set(res.theta_hats) == set(FAST_ESTIMATORS)
    assert set(res.se) == set(FAST_ESTIMATORS)
    assert all(math.isfinite(v) for v in res.theta_hats.values())
    assert isinstance(res.ci_covered["dr_combined"], bool)
    assert set(res.support_hat) == {"dr_combined"}
    assert set(res.support_hat["dr_combined"]) == {"alpha", "tau", "beta", "gamma"}
    assert res.wall_time > 0
    again = run_one_replicate(case, 3, 42, FAST_ESTIMATORS, penalize=False)
    assert again.theta_hats == res.theta_hats
    assert again.se == res.se


def test_replicates_differ_across_ids():
    case = desk_case("case1", 2500)
    r0 = run_one_replicate(case, 0, 42, ("naive_nonprob",), penalize=False)
    r1 = run_one_replicate(case, 1, 42, ("naive_nonprob",), penalize=False)
    assert r0.theta_hats != r1.theta_hats


def test_run_replications_independent_of_parallelism():
    case = desk_case("case1", 2500)
    serial = run_replications(case, 3, FAST_ESTIMATORS, base_seed=7, jobs=1, penalize=False)
    twin = run_replications(case, 3, FAST_ESTIMATORS, base_seed=7, jobs=2, penalize=False)
    for a, b in zip(serial, twin):
        assert a.theta_hats == b.theta_hats
        assert a.se == b.se
        assert a.ci_covered == b.ci_covered
    csv_a = metrics_to_csv(
        compute_metrics(serial, case, FAST_ESTIMATORS), case, 3, 7, FAST_ESTIMATORS, False
    )
    csv_b = metrics_to_csv(
        compute_metrics(twin, case, FAST_ESTIMATORS), case, 3, 7, FAST_ESTIMATORS, False
    )
    assert csv_a == csv_b


def test_run_replications_rejects_unknown_estimators():
    with pytest.raises(ConfigError, match="unknown estimators"):
        run_replications(case_spec("case1", True), 1, ("dr_fancy",))


def test_failed_replicates_recorded_not_fatal():
    case = desk_case("case1", 2500)
    # survey rows carry no treatment or outcome, so this kind must fail
    results = run_replications(case, 2, ("dr_probonly",), base_seed=1, penalize=False)
    assert all(r.error is not None for r in results)
    metrics = compute_metrics(results, case, ("dr_probonly",))
    assert metrics[0].failures == 2
    assert math.isnan(metrics[0].mean_theta)


# ---------------------------------------------------------------------------
# metric aggregation


def toy_case():
    refs = {
        "alpha": np.array([0.5, 1.0, 0.0, 0.0]),
        "tau": np.array([0.2, 0.0, 1.0, 0.0]),
        "beta": np.array([1.0, 2.0, 0.0, 0.0]),
        "gamma": np.array([0.0, 1.0, 0.0, 0.0]),
    }
    return CaseSpec(
        name="toy",
        parameterization="conditional",
        outcome_kind="continuous",
        outcome_form="a",
        weight_form="a",
        pop_size=100,
        n_covariates=3,
        theta_true=1.0,
        reference_coefs=refs,
    )


def toy_result(rid, theta, covered, support_alpha, coef_alpha):
    case = toy_case()
    support = {b: case.true_support[b] for b in case.reference_coefs}
    support["alpha"] = support_alpha
    coefs = {b: tuple(case.reference_coefs[b]) for b in case.reference_coefs}
    coefs["alpha"] = coef_alpha
    return ReplicationResult(
        replicate_id=rid,
        seed=0,
        theta_pop=1.0,
        theta_hats={"dr_combined": theta},
        se={"dr_combined": 0.1},
        ci_covered={"dr_combined": covered},
        support_hat={"dr_combined": support},
        coef_hats={"dr_combined": coefs},
        wall_time=0.01,
    )


def test_compute_metrics_hand_values():
    case = toy_case()
    results = [
        toy_result(0, 1.0, True, (1,), (0.5, 1.0, 0.0, 0.0)),
        toy_result(1, 1.2, False, (1, 2), (0.5, 0.5, 0.3, 0.0)),
    ]
    (m,) = compute_metrics(results, case, ("dr_combined",))
    assert m.case == "toy" and m.estimator == "dr_combined"
    assert m.reps == 2 and m.failures == 0
    assert m.mean_theta == pytest.approx(1.1)
    assert m.bias == pytest.approx(0.1)
    assert m.sd == pytest.approx(math.sqrt(0.02 / 1))
    assert m.mean_se == pytest.approx(0.1)
    assert m.coverage == 0.5
    assert m.coverage_moe == pytest.approx(2.0 * math.sqrt(0.25 / 2))
    assert m.sensitivity["alpha"] == 1.0
    assert m.specificity["alpha"] == pytest.approx(0.75)  # (1 + 1/2) / 2
    assert m.sensitivity["tau"] == 1.0 and m.specificity["tau"] == 1.0
    assert m.mse_nonnull["alpha"] == pytest.approx(0.125)  # (0 + 0.25) / 2
    assert m.mse_null["alpha"] == pytest.approx(0.0225)  # (0 + mean(0.09, 0)) / 2
    assert m.mse_nonnull["beta"] == 0.0 and m.mse_null["beta"] == 0.0


def test_perfect_recovery_scores_one():
    case = toy_case()
    results = [
        toy_result(r, 1.0, True, case.true_support["alpha"], tuple(case.reference_coefs["alpha"]))
        for r in range(3)
    ]
    (m,) = compute_metrics(results, case, ("dr_combined",))
    for block in case.reference_coefs:
        assert m.sensitivity[block] == 1.0
        assert m.specificity[block] == 1.0
        assert m.mse_nonnull[block] == 0.0
        assert m.mse_null[block] == 0.0
    assert m.coverage == 1.0


# ---------------------------------------------------------------------------
# serialization


def test_metrics_csv_layout():
    case = toy_case()
    results = [toy_result(0, 1.0, True, (1,), (0.5, 1.0, 0.0, 0.0))]
    metrics = compute_metrics(results, case, ("dr_combined",))
    text = metrics_to_csv(metrics, case, 1, 0, ("dr_combined",), True)
    lines = text.splitlines()
    assert lines[0].startswith("# case=toy")
    assert lines[2].startswith("# build=")
    header = lines[3].split(",")
    assert header[:4] == ["case", "estimator", "reps", "failures"]
    assert len(lines[4].split(",")) == len(header)
    assert "np.float64" not in text and "nan" not in text.split("\n")[4].split(",")[0]
    assert text == metrics_to_csv(metrics, case, 1, 0, ("dr_combined",), True)


def test_build_id_stable_and_sensitive():
    case = toy_case()
    base = build_id(case, 5, 0, ("dr_combined",), True)
    assert base == build_id(case, 5, 0, ("dr_combined",), True)
    assert base != build_id(case, 6, 0, ("dr_combined",), True)
    assert base != build_id(case, 5, 1, ("dr_combined",), True)


def test_metrics_text_is_readable():
    case = toy_case()
    results = [toy_result(0, 1.0, True, (1,), (0.5, 1.0, 0.0, 0.0))]
    out = metrics_to_text(compute_metrics(results, case, ("dr_combined",)))
    assert "case toy" in out
    assert "dr_combined" in out
    assert "sensitivity" in out


def test_replicates_jsonl_round_trip():
    results = [
        toy_result(0, 1.0, True, (1,), (0.5, 1.0, 0.0, 0.0)),
        ReplicationResult(
            replicate_id=1,
            seed=0,
            theta_pop=math.nan,
            theta_hats={},
            se={},
            ci_covered={},
            support_hat={},
            coef_hats={},
            wall_time=0.0,
            error="DataError: boom",
        ),
    ]
    lines = replicates_to_jsonl(results).splitlines()
    assert len(lines) == 2
    first = json.loads(lines[0])
    assert first["theta_hats"]["dr_combined"] == 1.0
    assert first["support_hat"]["dr_combined"]["alpha"] == [1]
    second = json.loads(lines[1])
    assert second["error"] == "DataError: boom"
