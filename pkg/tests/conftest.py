"""Shared fixtures and independent oracles for the test suite.

Oracles here deliberately rebuild full design matrices and use explicit
matrix inversion / exhaustive enumeration, independent of the production
code's incremental information-matrix updates.
"""
import numpy as np
import pytest

from seqdesign.criteria import Criterion
from seqdesign.model import CauchyPrior, ModelSpec, build_row
from seqdesign.trial import TrialState


@pytest.fixture
def spec():
    return ModelSpec.main_effects(1)


@pytest.fixture
def prior(spec):
    return CauchyPrior.default(spec)


@pytest.fixture
def criterion(spec):
    return Criterion.treatment_effect(spec)


def factorial_design():
    """The 2x2 factorial rows (1, z, t) for z, t in {-1, 1}."""
    return np.array([[1.0, z, t] for z in (-1.0, 1.0) for t in (-1.0, 1.0)])


def oracle_objective(X, beta, criterion):
    """Criterion value via explicit inversion; +inf for numerically singular."""
    X = np.asarray(X, dtype=float)
    eta = X @ np.asarray(beta, dtype=float)
    p = 1.0 / (1.0 + np.exp(-eta))
    M = (X.T * (p * (1 - p))) @ X
    if np.linalg.matrix_rank(M, tol=1e-10) < M.shape[0]:
        return np.inf
    Minv = np.linalg.inv(M)
    if criterion.kind == "D":
        return float(1.0 / np.linalg.det(M))
    A = criterion.A
    return float(abs(np.linalg.det(A.T @ Minv @ A)))


def oracle_horizon(rows, z_i, t_i, N, base_index, cov_model, beta, spec, criterion):
    """Flat-enumeration lookahead value: explicit branch over every covariate
    and response path with nested one-step argmins (ties to -1)."""
    rows = [np.asarray(r, dtype=float) for r in rows]
    x_i = build_row(z_i, t_i, spec)
    if N == 0:
        return oracle_objective(np.vstack(rows + [x_i]), beta, criterion)
    eta = float(x_i @ np.asarray(beta, float))
    pi = 1.0 / (1.0 + np.exp(-eta))
    rows_i = rows + [x_i]
    total = 0.0
    for z_next in cov_model.support_points():
        p_z = cov_model.prob(base_index + 1, z_next)
        for w_y in (1.0 - pi, pi):
            vals = {t: oracle_objective(
                np.vstack(rows_i + [build_row(z_next, t, spec)]), beta, criterion)
                for t in (-1.0, 1.0)}
            t_star = -1.0 if vals[-1.0] <= vals[1.0] else 1.0
            total += p_z * w_y * oracle_horizon(rows_i, z_next, t_star, N - 1,
                                                base_index + 1, cov_model, beta,
                                                spec, criterion)
    return total


def random_state(rng, spec, prior, n_subjects=8, n=None, fit=False):
    """A trial state with random {-1,1} covariates/treatments and responses."""
    s = spec.n_covariates
    Z = rng.choice([-1.0, 1.0], size=(n_subjects, s))
    t = rng.choice([-1.0, 1.0], size=n_subjects)
    state = TrialState.with_initial(spec, prior, Z, t, n=n, n0=n_subjects)
    y = rng.integers(0, 2, size=n_subjects)
    for v in y:
        state.record_response(int(v))
    return state
