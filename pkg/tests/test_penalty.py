import numpy as np
import pytest
from hypothesis import given, strategies as st

from drcombine.data import ConfigError, NuisanceParams
from drcombine.penalty import hard_threshold, lqa_diag, penalized_score, scad_q

A_DEFAULT = 3.7


def test_scad_tagged_values():
    assert scad_q(0.0, 1.0, 3.7) == 1.0
    assert scad_q(4.0, 1.0, 3.7) == 0.0
    assert scad_q(2.0, 1.0, 3.7) == pytest.approx(1.7 / 2.7, rel=1e-14)


@pytest.mark.parametrize("lam", [0.25, 1.0, 2.3])
def test_scad_knot_continuity(lam):
    for knot in (lam, A_DEFAULT * lam):
        below = scad_q(knot * (1 - 1e-13), lam)
        above = scad_q(knot * (1 + 1e-13), lam)
        assert abs(below - above) <= 1e-12
        assert abs(scad_q(knot, lam) - below) <= 1e-12


def test_scad_vectorized_matches_scalar():
    u = np.array([0.0, 0.5, 1.0, 2.0, 3.7, 4.0])
    vec = scad_q(u, 1.0)
    np.testing.assert_array_equal(vec, [scad_q(float(v), 1.0) for v in u])


def test_scad_rejects_bad_arguments():
    with pytest.raises(ConfigError):
        scad_q(1.0, -0.5)
    with pytest.raises(ConfigError):
        scad_q(1.0, 1.0, a=2.0)
    with pytest.raises(ConfigError):
        scad_q(-1.0, 1.0)


def test_scad_zero_lambda_is_zero():
    np.testing.assert_array_equal(scad_q(np.array([0.0, 1.0, 5.0]), 0.0), np.zeros(3))


@given(
    st.floats(min_value=0.0, max_value=10.0),
    st.floats(min_value=0.0, max_value=10.0),
    st.floats(min_value=0.01, max_value=3.0),
)
def test_scad_monotone_and_bounded(u1, u2, lam):
    lo, hi = sorted((u1, u2))
    q_lo, q_hi = scad_q(lo, lam), scad_q(hi, lam)
    assert q_lo >= q_hi - 1e-12 * lam  # never increases with |u|, up to rounding
    assert 0.0 <= q_hi <= lam * (1 + 1e-12)


def test_lqa_diag_tagged_value():
    diag = lqa_diag(np.array([0.5]), 1.0, 3.7, 1e-6)
    assert diag.entries[0] == pytest.approx(1.999996, abs=1e-6)


def test_lqa_diag_no_intercept_exemption():
    # the raw diagonal penalizes every entry; callers zero intercept slots
    diag = lqa_diag(np.array([0.5, 0.5]), 1.0)
    assert diag.entries[0] == diag.entries[1] > 0.0


def params_with(d, **blocks):
    base = {name: np.zeros(d) for name in ("alpha", "tau", "beta", "gamma")}
    base.update(blocks)
    return NuisanceParams(**base)


def test_penalized_score_tagged_value():
    d = 2
    omega = params_with(d, alpha=np.array([0.0, -0.5]))
    out = penalized_score(np.zeros(4 * d), omega, lambda_eta=1.0, lambda_mu=0.3)
    assert out[1] == pytest.approx(-1.0)  # q = lam = 1, sign of -0.5
    assert np.all(out[[0, d, 2 * d, 3 * d]] == 0.0)


def test_penalized_score_block_lambdas():
    d = 2
    omega = params_with(
        d,
        alpha=np.array([0.0, 0.1]),
        beta=np.array([0.0, 0.1]),
    )
    out = penalized_score(np.zeros(4 * d), omega, lambda_eta=1.0, lambda_mu=0.5)
    assert out[1] == pytest.approx(1.0)   # weighting block, lambda_eta
    assert out[5] == pytest.approx(0.5)   # outcome block, lambda_mu
    with pytest.raises(ConfigError):
        penalized_score(np.zeros(3), omega, 1.0, 1.0)


def test_hard_threshold_zeroes_small_slopes():
    params = NuisanceParams(
        beta=np.array([5e-5, 2e-5, 0.3]),
        gamma=np.array([1e-6, -1e-5, -5e-5]),
        alpha=np.array([0.2, 0.1, 1e-9]),
        tau=np.array([-3e-5, 0.0, 2.0]),
    )
    out = hard_threshold(params, 1e-4)
    assert out.beta[0] == 5e-5  # intercepts survive no matter how small
    assert out.beta[1] == 0.0 and out.beta[2] == 0.3
    assert out.gamma[1] == 0.0 and out.gamma[2] == 0.0
    assert out.alpha[2] == 0.0
    assert out.tau[2] == 2.0


@given(st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=3, max_size=3))
def test_hard_threshold_idempotent(slope):
    vec = np.array(slope)
    params = NuisanceParams(beta=vec, gamma=vec, alpha=vec, tau=vec)
    once = hard_threshold(params, 1e-4)
    twice = hard_threshold(once, 1e-4)
    for name in ("alpha", "tau", "beta", "gamma"):
        np.testing.assert_array_equal(getattr(once, name), getattr(twice, name))
