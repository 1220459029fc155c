"""Shared builders for small synthetic datasets."""

import numpy as np
import pytest

from drcombine.data import CombinedDataset, ModelSpec, NuisanceParams


def random_dataset(rng, n=50, d=4, outcome_kind="continuous", survey_outcomes=False):
    """A small mixed A/B dataset with moderate linear predictors.

    Coefficient draws downstream stay in (-0.6, 0.6), so every modeled
    probability is far from the clipping bounds and finite differences of
    the estimating equations are numerically clean.
    """
    n_a = max(8, int(n * 0.4))
    i_a = np.zeros(n, dtype=bool)
    i_a[:n_a] = True
    i_b = ~i_a
    x = np.hstack([np.ones((n, 1)), rng.normal(size=(n, d - 1))])
    weight_a = np.full(n, np.nan)
    weight_a[i_a] = rng.uniform(1.5, 8.0, size=n_a)
    t = np.full(n, np.nan)
    y = np.full(n, np.nan)
    n_b = n - n_a
    tb = rng.integers(0, 2, size=n_b).astype(float)
    tb[0], tb[1] = 1.0, 0.0  # keep both arms occupied
    t[i_b] = tb
    if outcome_kind == "continuous":
        y[i_b] = rng.normal(size=n_b)
    else:
        y[i_b] = rng.integers(0, 2, size=n_b).astype(float)
    if survey_outcomes:
        ta = rng.integers(0, 2, size=n_a).astype(float)
        ta[0], ta[1] = 1.0, 0.0
        t[i_a] = ta
        if outcome_kind == "continuous":
            y[i_a] = rng.normal(size=n_a)
        else:
            y[i_a] = rng.integers(0, 2, size=n_a).astype(float)
    return CombinedDataset(
        x=x, i_a=i_a, i_b=i_b, weight_a=weight_a, t=t, y=y, outcome_kind=outcome_kind
    )


def random_params(rng, d, parameterization="conditional", scale=0.4):
    draw = lambda: rng.uniform(-scale, scale, size=d)
    if parameterization == "conditional":
        return NuisanceParams(beta=draw(), gamma=draw(), alpha=draw(), tau=draw())
    return NuisanceParams(beta=draw(), gamma=draw(), delta1=draw() - 0.3, delta0=draw() - 0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_dataset(rng):
    return random_dataset(rng)


@pytest.fixture
def spec_identity():
    return ModelSpec(outcome_link="identity", parameterization="conditional")


@pytest.fixture
def spec_logit():
    return ModelSpec(outcome_link="logit", parameterization="conditional")
