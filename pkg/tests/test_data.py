import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from drcombine.data import (
    CombinedDataset,
    ConfigError,
    DataError,
    ModelSpec,
    NuisanceParams,
    UnitRecord,
    check_spec_against,
    dataset_from_csv,
    dataset_to_csv,
    derive_pop_size,
    validate,
)

from conftest import random_dataset


def make_dataset(weights, extra_b=2):
    """A-units with the given weights plus a few complete B-units."""
    n_a = len(weights)
    n = n_a + extra_b
    x = np.hstack([np.ones((n, 1)), np.arange(n, dtype=float).reshape(-1, 1)])
    i_a = np.array([True] * n_a + [False] * extra_b)
    w = np.full(n, np.nan)
    w[:n_a] = weights
    t = np.full(n, np.nan)
    y = np.full(n, np.nan)
    t[n_a:] = [1.0, 0.0] * (extra_b // 2) + ([1.0] if extra_b % 2 else [])
    y[n_a:] = 0.5
    return CombinedDataset(x=x, i_a=i_a, i_b=~i_a, weight_a=w, t=t, y=y)


def test_derive_pop_size_rounds_weight_total():
    assert make_dataset([2.0, 3.0, 5.0]).pop_size == 10
    assert make_dataset([50.4, 49.8]).pop_size == 100


def test_derive_pop_size_no_survey_rows():
    ds = make_dataset([2.0, 3.0])
    with pytest.raises(DataError):
        derive_pop_size(ds.subset(ds.b_rows, pop_size=None))


def test_supplied_pop_size_wins_with_warning():
    n_a = 4
    x = np.ones((n_a + 2, 2))
    i_a = np.array([True] * n_a + [False, False])
    w = np.full(n_a + 2, np.nan)
    w[:n_a] = 10.0
    t = np.full(n_a + 2, np.nan)
    y = np.full(n_a + 2, np.nan)
    t[n_a:] = [1.0, 0.0]
    y[n_a:] = 1.0
    ds = CombinedDataset(x=x, i_a=i_a, i_b=~i_a, weight_a=w, t=t, y=y, pop_size=100)
    assert ds.pop_size == 100  # kept even though weights say 40
    with pytest.warns(UserWarning, match="differs from weight-derived"):
        assert validate(ds) == []


def test_validate_flags_structure_problems():
    ds = make_dataset([2.0, 3.0, 5.0])
    bad_x = ds.x.copy()
    bad_x[1, 0] = 0.0
    broken = CombinedDataset(
        x=bad_x, i_a=ds.i_a, i_b=ds.i_b, weight_a=ds.weight_a, t=ds.t, y=ds.y
    )
    msgs = validate(broken)
    assert any("intercept" in m for m in msgs)

    overlap = CombinedDataset(
        x=ds.x, i_a=ds.i_a, i_b=ds.i_a, weight_a=ds.weight_a, t=ds.t, y=ds.y,
        pop_size=ds.pop_size,
    )
    assert any("both samples" in m for m in validate(overlap))

    low_w = ds.weight_a.copy()
    low_w[0] = 0.5
    assert any(">= 1" in m for m in validate(
        CombinedDataset(x=ds.x, i_a=ds.i_a, i_b=ds.i_b, weight_a=low_w, t=ds.t, y=ds.y)
    ))

    holes = ds.y.copy()
    holes[-1] = np.nan
    assert any("missing outcome" in m for m in validate(
        CombinedDataset(x=ds.x, i_a=ds.i_a, i_b=ds.i_b, weight_a=ds.weight_a, t=ds.t,
                        y=holes, pop_size=ds.pop_size)
    ))


def test_validate_clean_dataset_is_silent(rng):
    assert validate(random_dataset(rng)) == []


def test_records_round_trip(rng):
    ds = random_dataset(rng, n=20)
    rebuilt = CombinedDataset.from_records(list(ds.records()), pop_size=ds.pop_size)
    np.testing.assert_array_equal(rebuilt.x, ds.x)
    np.testing.assert_array_equal(rebuilt.i_a, ds.i_a)
    nz = ~np.isnan(ds.y)
    np.testing.assert_array_equal(rebuilt.y[nz], ds.y[nz])
    assert rebuilt.pop_size == ds.pop_size


def test_unit_record_exposes_fields(rng):
    ds = random_dataset(rng, n=12)
    rec = next(iter(ds.records()))
    assert isinstance(rec, UnitRecord)
    assert rec.i_a and not rec.i_b
    assert rec.weight_a >= 1.0


def test_subset_rederives_pop_size(rng):
    ds = random_dataset(rng, n=30)
    keep = np.flatnonzero(ds.i_a)[:5].tolist() + np.flatnonzero(ds.i_b)[:5].tolist()
    sub = ds.subset(np.array(keep))
    assert sub.n == 10
    assert sub.pop_size == int(round(float(np.nansum(sub.weight_a))))
    pinned = ds.subset(np.array(keep), pop_size=999)
    assert pinned.pop_size == 999


def test_csv_round_trip_exact(tmp_path, rng):
    ds = random_dataset(rng, n=25, d=5)
    path = tmp_path / "ds.csv"
    dataset_to_csv(ds, str(path))
    back = dataset_from_csv(str(path))
    np.testing.assert_array_equal(back.x, ds.x)
    np.testing.assert_array_equal(back.i_b, ds.i_b)
    np.testing.assert_array_equal(np.isnan(back.t), np.isnan(ds.t))
    np.testing.assert_array_equal(back.t[~np.isnan(ds.t)], ds.t[~np.isnan(ds.t)])
    assert back.pop_size == ds.pop_size
    assert back.outcome_kind == ds.outcome_kind


def test_nuisance_params_requires_one_parameterization():
    v = np.zeros(3)
    with pytest.raises(ConfigError):
        NuisanceParams(beta=v, gamma=v)
    with pytest.raises(ConfigError):
        NuisanceParams(beta=v, gamma=v, alpha=v, tau=v, delta1=v, delta0=v)
    with pytest.raises(ConfigError):
        NuisanceParams(beta=v, gamma=np.zeros(4), alpha=v, tau=v)


def test_nuisance_params_stacking_round_trip():
    d = 3
    params = NuisanceParams(
        beta=np.arange(d) + 10.0,
        gamma=np.arange(d) + 20.0,
        alpha=np.arange(d) + 0.0,
        tau=np.arange(d) + 5.0,
    )
    stacked = params.stacked()
    np.testing.assert_array_equal(stacked[:d], params.alpha)
    np.testing.assert_array_equal(stacked[3 * d:], params.gamma)
    back = NuisanceParams.from_stacked(stacked, d, "conditional")
    np.testing.assert_array_equal(back.tau, params.tau)
    joint = NuisanceParams(beta=params.beta, gamma=params.gamma,
                           delta1=params.alpha, delta0=params.tau)
    np.testing.assert_array_equal(joint.stacked(), stacked)
    assert joint.parameterization == "joint"


def test_support_skips_intercept():
    params = NuisanceParams(
        beta=np.array([5.0, 0.0, 2.0]),
        gamma=np.zeros(3),
        alpha=np.array([1.0, 1e-12, 0.0]),
        tau=np.array([0.0, 0.0, -3.0]),
    )
    sup = params.support()
    assert sup["beta"] == [2]
    assert sup["gamma"] == []
    assert sup["alpha"] == [1]  # tiny but literally nonzero
    assert sup["tau"] == [2]


def test_check_spec_against_link_mismatch(rng):
    ds = random_dataset(rng, outcome_kind="binary")
    with pytest.raises(ConfigError):
        check_spec_against(ds, ModelSpec(outcome_link="identity"))
    check_spec_against(ds, ModelSpec(outcome_link="logit"))


@given(st.lists(st.floats(min_value=1.0, max_value=500.0), min_size=1, max_size=30))
def test_derive_pop_size_matches_rounded_sum(weights):
    ds = make_dataset(weights)
    assert ds.pop_size == int(round(math.fsum(weights)))
