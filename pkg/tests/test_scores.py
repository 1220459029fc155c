import numpy as np
import pytest

from drcombine.data import (
    CombinedDataset,
    DataError,
    ModelSpec,
    NuisanceParams,
    UnitRecord,
)
from drcombine.scores import (
    jacobian_eta,
    jacobian_mu,
    partial_o,
    partial_q,
    phi,
    score_u,
    score_u_joint,
)

from conftest import random_dataset, random_params
from oracles import check_jacobian_fd, check_score_fd


def one_unit_params(beta0=0.5, gamma0=0.2):
    return NuisanceParams(
        beta=np.array([beta0]),
        gamma=np.array([gamma0]),
        alpha=np.array([0.0]),
        tau=np.array([0.0]),
    )


def test_phi_survey_only_record():
    rec = UnitRecord(x=np.array([1.0]), i_a=True, weight_a=1.0)
    spec = ModelSpec(outcome_link="identity")
    assert phi(rec, one_unit_params(0.5, 0.2), spec, theta=0.0) == pytest.approx(0.3)


def test_phi_overlap_record_hand_value():
    # a unit caught by both samples keeps both bracketed contributions
    rec = UnitRecord(x=np.array([1.0]), i_a=True, i_b=True, weight_a=2.0, t=1, y=1.0)
    spec = ModelSpec(outcome_link="identity")
    params = one_unit_params()  # pi_b = pi_t = 1/2
    assert phi(rec, params, spec, theta=0.0) == pytest.approx(2.6)
    assert phi(rec, params, spec, theta=2.6) == pytest.approx(0.0)


def test_phi_rejects_incomplete_b_record(rng):
    ds = random_dataset(rng, n=20)
    y = ds.y.copy()
    y[np.flatnonzero(ds.i_b)[0]] = np.nan
    broken = CombinedDataset(x=ds.x, i_a=ds.i_a, i_b=ds.i_b, weight_a=ds.weight_a,
                             t=ds.t, y=y, pop_size=ds.pop_size)
    with pytest.raises(DataError):
        phi(broken, random_params(rng, ds.d), ModelSpec(outcome_link="identity"), 0.0)


def test_score_u_survey_only_unit():
    ds = CombinedDataset(
        x=np.array([[1.0]]),
        i_a=np.array([True]),
        i_b=np.array([False]),
        weight_a=np.array([1.0]),
        t=np.array([np.nan]),
        y=np.array([np.nan]),
    )
    sv = score_u(ds, one_unit_params(), ModelSpec(outcome_link="identity"))
    np.testing.assert_allclose(sv.u_beta, [1.0])
    np.testing.assert_allclose(sv.u_gamma, [-1.0])
    np.testing.assert_allclose(sv.u_alpha, [0.0])
    np.testing.assert_allclose(sv.u_tau, [0.0])


def single_b_unit():
    return CombinedDataset(
        x=np.array([[1.0]]),
        i_a=np.array([False]),
        i_b=np.array([True]),
        weight_a=np.array([np.nan]),
        t=np.array([1.0]),
        y=np.array([0.8]),
        pop_size=1,
    )


def test_jacobian_eta_single_unit_hand_value():
    ds = single_b_unit()
    params = one_unit_params()
    jac = jacobian_eta(ds, params.eta, params.mu, ModelSpec(outcome_link="identity"))
    # pi_b = pi_t = 1/2, derivatives 1/4; treated unit zeroes the gamma row
    np.testing.assert_allclose(jac.matrix, [[2.0, 2.0], [0.0, 0.0]])
    assert jac.row_blocks == ("u_beta", "u_gamma")
    assert jac.col_blocks == ("alpha", "tau")


def test_jacobian_mu_single_unit_hand_value():
    ds = single_b_unit()
    params = one_unit_params()
    jac = jacobian_mu(ds, params.mu, params.eta, ModelSpec(outcome_link="identity"))
    np.testing.assert_allclose(jac.matrix, [[2.0, 0.0], [2.0, 0.0]])


def test_partials_match_score_blocks(rng):
    ds = random_dataset(rng)
    params = random_params(rng, ds.d)
    spec = ModelSpec(outcome_link="identity")
    sv = score_u(ds, params, spec)
    np.testing.assert_array_equal(
        partial_o(ds, params.eta, params.mu, spec),
        np.concatenate([sv.u_beta, sv.u_gamma]),
    )
    np.testing.assert_array_equal(
        partial_q(ds, params.mu, params.eta, spec),
        np.concatenate([sv.u_alpha, sv.u_tau]),
    )


def test_score_theta_free(rng):
    # phi shifts with theta but its omega-gradient (the score) cannot
    ds = random_dataset(rng)
    params = random_params(rng, ds.d)
    spec = ModelSpec(outcome_link="identity")
    lo = phi(ds, params, spec, theta=0.0)
    hi = phi(ds, params, spec, theta=1.5)
    np.testing.assert_allclose(lo - hi, np.full(ds.n, 1.5))


def test_no_b_rows_zero_blocks(rng):
    ds = random_dataset(rng, n=20)
    a_only = ds.subset(ds.a_rows, pop_size=ds.pop_size)
    params = random_params(rng, ds.d)
    spec = ModelSpec(outcome_link="identity")
    sv = score_u(a_only, params, spec)
    np.testing.assert_array_equal(sv.u_alpha, np.zeros(ds.d))
    np.testing.assert_array_equal(sv.u_tau, np.zeros(ds.d))
    assert np.any(sv.u_beta != 0.0)
    jac = jacobian_eta(a_only, params.eta, params.mu, spec)
    np.testing.assert_array_equal(jac.matrix, np.zeros((2 * ds.d, 2 * ds.d)))

    joint = random_params(rng, ds.d, "joint")
    jsv = score_u_joint(a_only, joint, ModelSpec(outcome_link="identity",
                                                 parameterization="joint"))
    np.testing.assert_array_equal(jsv.u_delta1, np.zeros(ds.d))
    np.testing.assert_array_equal(jsv.u_delta0, np.zeros(ds.d))


@pytest.mark.parametrize("outcome_kind,link", [("continuous", "identity"), ("binary", "logit")])
def test_score_matches_fd(rng, outcome_kind, link):
    for _ in range(4):
        ds = random_dataset(rng, outcome_kind=outcome_kind)
        spec = ModelSpec(outcome_link=link)
        check_score_fd(ds, random_params(rng, ds.d), spec)


@pytest.mark.parametrize("outcome_kind,link", [("continuous", "identity"), ("binary", "logit")])
def test_joint_score_matches_fd(rng, outcome_kind, link):
    for _ in range(4):
        ds = random_dataset(rng, outcome_kind=outcome_kind)
        spec = ModelSpec(outcome_link=link, parameterization="joint")
        check_score_fd(ds, random_params(rng, ds.d, "joint"), spec)


@pytest.mark.parametrize("parameterization", ["conditional", "joint"])
@pytest.mark.parametrize("outcome_kind,link", [("continuous", "identity"), ("binary", "logit")])
def test_jacobians_match_fd(rng, parameterization, outcome_kind, link):
    for _ in range(3):
        ds = random_dataset(rng, outcome_kind=outcome_kind)
        spec = ModelSpec(outcome_link=link, parameterization=parameterization)
        check_jacobian_fd(ds, random_params(rng, ds.d, parameterization), spec)


def test_joint_score_reduces_to_conditional_at_matched_probabilities(rng):
    # with intercept-only models the joint arm probabilities can be matched
    # exactly, and then the outcome blocks of the two scores coincide
    from drcombine.links import expit
    import math

    ds = random_dataset(rng, n=40, d=1)
    spec_c = ModelSpec(outcome_link="identity")
    spec_j = ModelSpec(outcome_link="identity", parameterization="joint")
    alpha0, tau0 = -0.4, 0.3
    pib, pit = expit(alpha0), expit(tau0)
    cond = NuisanceParams(beta=np.array([0.6]), gamma=np.array([0.1]),
                          alpha=np.array([alpha0]), tau=np.array([tau0]))
    logit = lambda p: math.log(p / (1 - p))
    joint = NuisanceParams(beta=cond.beta, gamma=cond.gamma,
                           delta1=np.array([logit(pib * pit)]),
                           delta0=np.array([logit(pib * (1 - pit))]))
    sv_c = score_u(ds, cond, spec_c)
    sv_j = score_u_joint(ds, joint, spec_j)
    np.testing.assert_allclose(sv_j.u_beta, sv_c.u_beta, rtol=1e-12)
    np.testing.assert_allclose(sv_j.u_gamma, sv_c.u_gamma, rtol=1e-12)
