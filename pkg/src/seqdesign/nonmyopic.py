"""Horizon-N expected-objective lookahead via backward induction.

The lookahead branches over every future covariate value and both response
values, allocating each hypothetical future subject by the one-step argmin.
Parameter estimates are held fixed through the tree unless refit_in_tree is
set; hypothesized responses then enter only through the expectation weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covariates import CovariateModel, EmpiricalCovariateModel
from .criteria import Criterion, objective_from_information
from .model import build_row, fit_map, information_matrix, response_prob
from .myopic import AllocationDecision, sample_treatment
from .trial import AllocationEvent, TrialState

__all__ = [
    "NonmyopicConfig",
    "EvalCounter",
    "optimal_future_treatment",
    "expect_over_response",
    "horizon_objective",
    "allocate_nonmyopic",
]

DEFAULT_MAX_HORIZON = 4


@dataclass(frozen=True)
class NonmyopicConfig:
    """Lookahead depth and the covariate distribution assumed for the future.

    covariate_model None means: estimate an empirical distribution from the
    covariates observed so far at each decision.
    """

    horizon: int
    covariate_model: CovariateModel | None = None
    refit_in_tree: bool = False
    max_horizon: int = DEFAULT_MAX_HORIZON

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if self.horizon > self.max_horizon:
            raise ValueError(
                f"horizon {self.horizon} exceeds the configured cap {self.max_horizon}")


@dataclass
class EvalCounter:
    """Counts base-case objective evaluations inside the lookahead tree."""

    leaves: int = 0


def _row_weight(x: np.ndarray, beta: np.ndarray) -> float:
    p = response_prob(x, beta)
    return p * (1.0 - p)


def _append_info(M: np.ndarray, x: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return M + _row_weight(x, beta) * np.outer(x, x)


class RowCache:
    """Per-decision cache of w * x x' contributions, keyed by (covariates, t).

    Valid only while beta is fixed, i.e. within one allocation decision.
    """

    def __init__(self, spec, beta):
        self.spec = spec
        self.beta = np.asarray(beta, dtype=float)
        self._items: dict[tuple, np.ndarray] = {}

    def contribution(self, z, t: float) -> np.ndarray:
        key = (z if isinstance(z, tuple) else tuple(np.atleast_1d(z)), t)
        out = self._items.get(key)
        if out is None:
            x = build_row(z, t, self.spec)
            out = _row_weight(x, self.beta) * np.outer(x, x)
            self._items[key] = out
        return out


def _candidate_value(M: np.ndarray, z, t: float, beta, spec, criterion,
                     cache: RowCache | None = None) -> float:
    if cache is not None:
        return objective_from_information(M + cache.contribution(z, t), criterion)
    x = build_row(z, t, spec)
    return objective_from_information(_append_info(M, x, beta), criterion)


def optimal_future_treatment(M: np.ndarray, z_next, beta, spec,
                             criterion: Criterion,
                             cache: RowCache | None = None) -> tuple[float, float]:
    """One-step argmin treatment for a hypothetical subject; ties go to -1.

    M is the information matrix of all subjects placed so far (real and
    hypothesized). Returns (treatment, objective value at that treatment).
    """
    v_minus = _candidate_value(M, z_next, -1.0, beta, spec, criterion, cache)
    v_plus = _candidate_value(M, z_next, 1.0, beta, spec, criterion, cache)
    if v_plus < v_minus:
        return 1.0, v_plus
    return -1.0, v_minus


def expect_over_response(pi: float, continuation) -> float:
    """(1 - pi) * continuation(0) + pi * continuation(1)."""
    return (1.0 - pi) * continuation(0) + pi * continuation(1)


def _empirical_from(state: TrialState, z_i) -> EmpiricalCovariateModel:
    s = len(state.Z[0]) if state.Z else len(np.atleast_1d(z_i))
    values = list(state.Z) + [tuple(np.atleast_1d(np.asarray(z_i, float)))]
    return EmpiricalCovariateModel.from_observations(values, s=s)


def horizon_objective(state: TrialState, z_i, t_i: float, horizon: int,
                      config: NonmyopicConfig, beta=None,
                      criterion: Criterion | None = None,
                      counter: EvalCounter | None = None) -> float:
    """Expected objective after horizon further subjects, given t_i for subject i.

    Horizon 0 is the myopic candidate objective. The horizon is truncated to
    the number of subjects actually remaining when the trial size is known.
    """
    criterion = criterion or Criterion.treatment_effect(state.spec)
    beta = state.beta() if beta is None else np.asarray(beta, dtype=float)
    cov_model = config.covariate_model or _empirical_from(state, z_i)

    i = state.n_allocated + 1  # 1-based index of the subject being allocated
    if state.n is not None:
        horizon = max(0, min(horizon, state.n - i))

    M0 = information_matrix(state.design_matrix(), beta)
    support = cov_model.support_points()

    if config.refit_in_tree:
        rows = [build_row(state.Z[k], state.t[k], state.spec)
                for k in range(state.n_responded)]
        return _recurse_refit(M0, rows, list(state.y), z_i, t_i, horizon, i,
                              cov_model, support, beta, state, criterion, counter)
    cache = RowCache(state.spec, beta)
    return _recurse(M0, z_i, t_i, horizon, i, cov_model, support, beta,
                    state.spec, criterion, counter, cache)


def _recurse(M, z_i, t_i, horizon, i, cov_model, support, beta, spec, criterion,
             counter, cache) -> float:
    if horizon == 0:
        if counter is not None:
            counter.leaves += 1
        return _candidate_value(M, z_i, t_i, beta, spec, criterion, cache)
    x_i = build_row(z_i, t_i, spec)
    pi = response_prob(x_i, beta)
    M_i = _append_info(M, x_i, beta)
    total = 0.0
    for z_next in support:
        p_z = cov_model.prob(i + 1, z_next)
        if p_z == 0.0:
            continue
        t_star, _ = optimal_future_treatment(M_i, z_next, beta, spec, criterion, cache)
        # Responses do not move the fixed-beta objective, but both branches
        # are evaluated so the expectation matches the flat enumeration.
        val = expect_over_response(
            pi, lambda _y: _recurse(M_i, z_next, t_star, horizon - 1, i + 1,
                                    cov_model, support, beta, spec, criterion,
                                    counter, cache))
        total += p_z * val
    return total


def _recurse_refit(M, rows, ys, z_i, t_i, horizon, i, cov_model, support,
                   beta, state, criterion, counter) -> float:
    spec = state.spec
    if horizon == 0:
        if counter is not None:
            counter.leaves += 1
        return _candidate_value(M, z_i, t_i, beta, spec, criterion)
    x_i = build_row(z_i, t_i, spec)
    pi = response_prob(x_i, beta)
    total = 0.0
    for z_next in support:
        p_z = cov_model.prob(i + 1, z_next)
        if p_z == 0.0:
            continue
        branch = 0.0
        for y_i, w_y in ((0, 1.0 - pi), (1, pi)):
            rows_ext = rows + [x_i]
            ys_ext = ys + [y_i]
            est = fit_map(np.asarray(rows_ext), np.asarray(ys_ext), state.prior)
            beta_new = est.beta
            M_new = information_matrix(np.asarray(rows_ext), beta_new)
            t_star, _ = optimal_future_treatment(M_new, z_next, beta_new, spec,
                                                 criterion)
            branch += w_y * _recurse_refit(M_new, rows_ext, ys_ext, z_next, t_star,
                                           horizon - 1, i + 1, cov_model, support,
                                           beta_new, state, criterion, counter)
        total += p_z * branch
    return total


def allocate_nonmyopic(state: TrialState, new_covariates, config: NonmyopicConfig,
                       rng: np.random.Generator, criterion: Criterion | None = None,
                       deterministic: bool = False,
                       uniform: float | None = None) -> AllocationDecision:
    """Biased-coin allocation on the horizon-N expected objectives."""
    criterion = criterion or Criterion.treatment_effect(state.spec)
    state.record_subject(new_covariates)
    psi_plus = horizon_objective(state, new_covariates, 1.0, config.horizon, config,
                                 criterion=criterion)
    psi_minus = horizon_objective(state, new_covariates, -1.0, config.horizon, config,
                                  criterion=criterion)
    prob_plus, u, treatment = sample_treatment(psi_plus, psi_minus, rng,
                                               deterministic, uniform)
    event = AllocationEvent(subject_index=state.n_allocated + 1, psi_plus=psi_plus,
                            psi_minus=psi_minus, prob_plus=prob_plus,
                            treatment=treatment, uniform_draw=u)
    state.assign_treatment(treatment, event)
    return AllocationDecision(prob_plus=prob_plus, psi_plus=psi_plus,
                              psi_minus=psi_minus, sampled=treatment, uniform_draw=u)
