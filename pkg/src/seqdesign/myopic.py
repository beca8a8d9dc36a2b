"""Biased-coin myopic allocation and the sequential trial driver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criteria import Criterion, candidate_objective
from .trial import AllocationEvent, TrialState, initial_design

__all__ = [
    "AllocationDecision",
    "allocation_probabilities",
    "sample_treatment",
    "allocate_myopic",
    "run_sequential",
]


@dataclass(frozen=True)
class AllocationDecision:
    prob_plus: float
    psi_plus: float
    psi_minus: float
    sampled: float
    uniform_draw: float


def allocation_probabilities(psi_by_treatment: dict) -> float:
    """Probability of treatment +1 under inverse-objective weighting.

    p(+1) = psi(+1)^-1 / (psi(+1)^-1 + psi(-1)^-1). An infinite objective gets
    probability 0; two infinite objectives split evenly. These are the
    continuous limits of the formula.
    """
    psi_p = float(psi_by_treatment[1])
    psi_m = float(psi_by_treatment[-1])
    if psi_p < 0 or psi_m < 0:
        raise ValueError("objective values must be non-negative")
    inf_p, inf_m = np.isinf(psi_p), np.isinf(psi_m)
    if inf_p and inf_m:
        return 0.5
    if inf_p:
        return 0.0
    if inf_m:
        return 1.0
    if psi_p == 0 and psi_m == 0:
        return 0.5
    if psi_p == 0:
        return 1.0
    if psi_m == 0:
        return 0.0
    # Equivalent to (1/psi_p) / (1/psi_p + 1/psi_m), rearranged for stability.
    return psi_m / (psi_p + psi_m)


def sample_treatment(psi_plus: float, psi_minus: float, rng: np.random.Generator,
                     deterministic: bool = False,
                     uniform: float | None = None) -> tuple[float, float, float]:
    """Turn a pair of candidate objectives into (prob_plus, uniform, treatment).

    With deterministic=True the argmin is taken; exact ties fall back to a
    fair coin using the same uniform draw. An externally supplied uniform
    replaces the rng draw, letting a harness share one coin across policies.
    """
    prob_plus = allocation_probabilities({1: psi_plus, -1: psi_minus})
    u = float(rng.random()) if uniform is None else float(uniform)
    if deterministic:
        if psi_plus < psi_minus:
            treatment = 1.0
        elif psi_minus < psi_plus:
            treatment = -1.0
        else:
            treatment = 1.0 if u < 0.5 else -1.0
    else:
        treatment = 1.0 if u < prob_plus else -1.0
    return prob_plus, u, treatment


def allocate_myopic(state: TrialState, new_covariates, rng: np.random.Generator,
                    criterion: Criterion | None = None,
                    deterministic: bool = False,
                    uniform: float | None = None) -> AllocationDecision:
    """Biased-coin allocation using the one-subject-ahead objective."""
    criterion = criterion or Criterion.treatment_effect(state.spec)
    state.record_subject(new_covariates)
    beta = state.beta()
    psi_plus = candidate_objective(state, new_covariates, 1.0, beta, criterion)
    psi_minus = candidate_objective(state, new_covariates, -1.0, beta, criterion)
    prob_plus, u, treatment = sample_treatment(psi_plus, psi_minus, rng,
                                               deterministic, uniform)
    event = AllocationEvent(subject_index=state.n_allocated + 1, psi_plus=psi_plus,
                            psi_minus=psi_minus, prob_plus=prob_plus,
                            treatment=treatment, uniform_draw=u)
    state.assign_treatment(treatment, event)
    return AllocationDecision(prob_plus=prob_plus, psi_plus=psi_plus,
                              psi_minus=psi_minus, sampled=treatment, uniform_draw=u)


def run_sequential(covariates, responder, spec, prior, criterion: Criterion,
                   n0: int, rng: np.random.Generator, allocator=None,
                   n_random_starts: int = 10, initial_treatments=None,
                   after_response=None) -> TrialState:
    """Run a full sequential trial over a fixed covariate stream.

    covariates is the n x s matrix of arriving subjects; responder(i, x_row)
    returns the response for 1-based subject i with design row x_row. The
    allocator (default myopic) is called as allocator(state, z, rng) for each
    post-initial subject. A precomputed initial treatment vector may be
    supplied to share one initial design across policies. after_response, if
    given, is called with the state after every refit.
    """
    from .model import build_row  # local import to avoid cycle at module load

    Z = np.asarray(covariates, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n = Z.shape[0]
    if n0 > n:
        raise ValueError("covariate stream shorter than the initial design size")

    if initial_treatments is None:
        initial_treatments = initial_design(Z[:n0], spec, criterion,
                                            n_random_starts=n_random_starts, rng=rng)
    t0 = np.asarray(initial_treatments, dtype=float)
    state = TrialState.with_initial(spec, prior, Z[:n0], t0, n=n, n0=n0)
    for i in range(n0):
        x = build_row(Z[i], t0[i], spec)
        state.record_response(int(responder(i + 1, x)))
    if after_response is not None:
        after_response(state)

    alloc = allocator if allocator is not None else (
        lambda st, z, r: allocate_myopic(st, z, r, criterion=criterion))
    for i in range(n0, n):
        alloc(state, Z[i], rng)
        x = build_row(Z[i], state.t[-1], spec)
        state.record_response(int(responder(i + 1, x)))
        if after_response is not None:
            after_response(state)
    return state
