"""Finite-difference oracles shared by the score tests and the acceptance suite."""

import math

import numpy as np

from drcombine.data import NuisanceParams
from drcombine.scores import (
    jacobian_eta,
    jacobian_mu,
    joint_jacobian_eta,
    joint_jacobian_mu,
    joint_partial_eta,
    joint_partial_mu,
    partial_o,
    partial_q,
    phi,
    score_u,
    score_u_joint,
)

FD_STEP = 1e-5


def fd_gradient(func, x0, h=FD_STEP):
    """Central-difference gradient of a vector-to-anything function."""
    x0 = np.asarray(x0, dtype=np.float64)
    cols = []
    for j in range(x0.size):
        hi, lo = x0.copy(), x0.copy()
        hi[j] += h
        lo[j] -= h
        cols.append((np.asarray(func(hi)) - np.asarray(func(lo))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def mean_phi(dataset, stacked, parameterization, spec, theta=0.7):
    params = NuisanceParams.from_stacked(stacked, dataset.d, parameterization)
    return math.fsum(phi(dataset, params, spec, theta).tolist()) / dataset.pop_size


def check_score_fd(dataset, params, spec, rtol=1e-6, atol=1e-8):
    """Every score block equals the finite-difference gradient of mean phi."""
    d = dataset.d
    par = params.parameterization
    grad = fd_gradient(lambda v: mean_phi(dataset, v, par, spec), params.stacked())
    if par == "conditional":
        sv = score_u(dataset, params, spec)
        first, second = sv.u_alpha, sv.u_tau
    else:
        sv = score_u_joint(dataset, params, spec)
        first, second = sv.u_delta1, sv.u_delta0
    np.testing.assert_allclose(first, grad[:d], rtol=rtol, atol=atol)
    np.testing.assert_allclose(second, grad[d:2 * d], rtol=rtol, atol=atol)
    np.testing.assert_allclose(sv.u_beta, grad[2 * d:3 * d], rtol=rtol, atol=atol)
    np.testing.assert_allclose(sv.u_gamma, grad[3 * d:], rtol=rtol, atol=atol)


def check_jacobian_fd(dataset, params, spec, rtol=1e-6, atol=1e-8):
    """Both half-system Jacobians match finite differences of their equations."""
    eta, mu = params.eta, params.mu
    if params.parameterization == "conditional":
        po, pq = partial_o, partial_q
        je, jm = jacobian_eta, jacobian_mu
    else:
        po, pq = joint_partial_eta, joint_partial_mu
        je, jm = joint_jacobian_eta, joint_jacobian_mu
    fd_eta = fd_gradient(lambda v: po(dataset, v, mu, spec), eta)
    np.testing.assert_allclose(je(dataset, eta, mu, spec).matrix, fd_eta, rtol=rtol, atol=atol)
    fd_mu = fd_gradient(lambda v: pq(dataset, v, eta, spec), mu)
    np.testing.assert_allclose(jm(dataset, mu, eta, spec).matrix, fd_mu, rtol=rtol, atol=atol)
