"""Pseudo-nonmyopic allocation: simulated covariate trajectories to trial end,
greedy rollouts with frozen estimates, averaged terminal objectives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariates import CovariateModel, EmpiricalCovariateModel
from .criteria import Criterion
from .model import build_row, information_matrix
from .myopic import AllocationDecision, sample_treatment
from .nonmyopic import (EvalCounter, RowCache, _append_info, _candidate_value,
                        optimal_future_treatment)
from .trial import AllocationEvent, TrialState

__all__ = [
    "Trajectory",
    "PseudoConfig",
    "generate_trajectories",
    "greedy_rollout",
    "average_objective",
    "allocate_pseudo",
]


@dataclass
class Trajectory:
    """Covariate draws for subjects i+1..n plus the rollout's treatment picks."""

    z_future: list[tuple[float, ...]]
    rollout_treatments: list[float] | None = None


@dataclass(frozen=True)
class PseudoConfig:
    """Number of simulated trajectories and the assumed covariate distribution.

    covariate_model None means: empirical distribution of the covariates
    observed so far, re-estimated at each decision.
    """

    n_trajectories: int
    covariate_model: CovariateModel | None = None

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("at least one trajectory is required")


def generate_trajectories(covariate_model: CovariateModel, i: int, n: int, M: int,
                          rng: np.random.Generator) -> list[Trajectory]:
    """Draw M independent covariate trajectories for subjects i+1 through n."""
    if i >= n:
        raise ValueError("no future subjects remain; use the terminal case")
    return [Trajectory(z_future=[covariate_model.sample(j, rng)
                                 for j in range(i + 1, n + 1)])
            for _ in range(M)]


def greedy_rollout(state: TrialState, t_i: float, trajectory: Trajectory,
                   beta_frozen, criterion: Criterion | None = None,
                   counter: EvalCounter | None = None,
                   _cache: RowCache | None = None,
                   _M_base: np.ndarray | None = None) -> float:
    """Terminal objective of the pseudo-design completed along one trajectory.

    Subjects i+1..n are assigned by the one-step argmin, each conditioning on
    all previously placed rows; beta stays frozen throughout. The trajectory's
    treatment picks are stored on the trajectory for inspection.
    """
    criterion = criterion or Criterion.treatment_effect(state.spec)
    beta = np.asarray(beta_frozen, dtype=float)
    spec = state.spec
    if state.pending_covariates is None:
        raise ValueError("greedy_rollout requires the current subject's covariates")
    z_i = state.pending_covariates
    cache = _cache if _cache is not None else RowCache(spec, beta)
    M = (information_matrix(state.design_matrix(), beta)
         if _M_base is None else _M_base)
    M = M + cache.contribution(z_i, t_i)
    picks = []
    for z in trajectory.z_future:
        t_star, _ = optimal_future_treatment(M, z, beta, spec, criterion, cache)
        if counter is not None:
            counter.leaves += 2
        picks.append(t_star)
        M = M + cache.contribution(z, t_star)
    trajectory.rollout_treatments = picks
    from .criteria import objective_from_information
    return objective_from_information(M, criterion)


def average_objective(state: TrialState, t_i: float, trajectories, beta_frozen,
                      criterion: Criterion | None = None,
                      counter: EvalCounter | None = None) -> float:
    """Mean greedy-rollout objective over the supplied trajectories."""
    if not trajectories:
        raise ValueError("at least one trajectory is required")
    beta = np.asarray(beta_frozen, dtype=float)
    cache = RowCache(state.spec, beta)
    M_base = information_matrix(state.design_matrix(), beta)
    vals = [greedy_rollout(state, t_i, traj, beta_frozen, criterion, counter,
                           _cache=cache, _M_base=M_base)
            for traj in trajectories]
    return float(np.mean(vals))


def allocate_pseudo(state: TrialState, new_covariates, config: PseudoConfig,
                    rng: np.random.Generator, criterion: Criterion | None = None,
                    deterministic: bool = False,
                    uniform: float | None = None) -> AllocationDecision:
    """Biased-coin allocation on trajectory-averaged terminal objectives.

    The same trajectories are reused for both candidate treatments (common
    random numbers). For the final subject no trajectories are generated and
    the candidate objectives are the myopic ones.
    """
    criterion = criterion or Criterion.treatment_effect(state.spec)
    state.record_subject(new_covariates)
    beta = state.beta()
    i = state.n_allocated + 1
    if state.n is None:
        raise ValueError("pseudo-nonmyopic allocation requires a known trial size")

    if i >= state.n:
        M = information_matrix(state.design_matrix(), beta)
        psi_plus = _candidate_value(M, new_covariates, 1.0, beta, state.spec, criterion)
        psi_minus = _candidate_value(M, new_covariates, -1.0, beta, state.spec, criterion)
    else:
        cov_model = config.covariate_model
        if cov_model is None:
            from .nonmyopic import _empirical_from
            cov_model = _empirical_from(state, new_covariates)
        trajectories = generate_trajectories(cov_model, i, state.n,
                                             config.n_trajectories, rng)
        psi_plus = average_objective(state, 1.0, trajectories, beta, criterion)
        psi_minus = average_objective(state, -1.0, trajectories, beta, criterion)

    prob_plus, u, treatment = sample_treatment(psi_plus, psi_minus, rng,
                                               deterministic, uniform)
    event = AllocationEvent(subject_index=i, psi_plus=psi_plus, psi_minus=psi_minus,
                            prob_plus=prob_plus, treatment=treatment, uniform_draw=u)
    state.assign_treatment(treatment, event)
    return AllocationDecision(prob_plus=prob_plus, psi_plus=psi_plus,
                              psi_minus=psi_minus, sampled=treatment, uniform_draw=u)
