"""Trial state container and the initial-design coordinate exchange."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .criteria import Criterion, objective_from_information
from .model import (CauchyPrior, ModelSpec, ParameterEstimate, build_design_matrix,
                    build_row, fit_map, information_matrix)

__all__ = [
    "SequencingError",
    "AllocationEvent",
    "TrialState",
    "initial_design",
    "exchange_objective",
]

# Ridge added to the information matrix during the initial exchange, where
# beta = 0 and small n0 can make X'WX exactly singular.
EXCHANGE_RIDGE = 1e-6


class SequencingError(RuntimeError):
    """Trial operations called out of order."""


@dataclass(frozen=True)
class AllocationEvent:
    """One allocation: candidate objective values, coin probability, outcome."""

    subject_index: int  # 1-based
    psi_plus: float
    psi_minus: float
    prob_plus: float
    treatment: float
    uniform_draw: float | None = None


class TrialState:
    """Covariates, treatments, responses and the current MAP estimate.

    Subjects pass through: record_subject (covariates observed) -> treatment
    assigned (by a policy or the initial design) -> record_response (refits).
    Single-writer; copies are independent.
    """

    def __init__(self, spec: ModelSpec, prior: CauchyPrior, n: int | None = None,
                 n0: int | None = None):
        if prior.q != spec.q:
            raise ValueError("prior length must equal the number of model terms")
        self.spec = spec
        self.prior = prior
        self.n = n
        self.n0 = n0
        self.Z: list[tuple[float, ...]] = []
        self.t: list[float] = []
        self.y: list[int] = []
        self.beta_hat: ParameterEstimate | None = None
        self.history: list[AllocationEvent] = []
        self.pending_covariates: tuple[float, ...] | None = None

    @classmethod
    def with_initial(cls, spec: ModelSpec, prior: CauchyPrior, covariates, treatments,
                     n: int | None = None, n0: int | None = None) -> "TrialState":
        """State pre-loaded with the initial-design subjects, responses pending."""
        Z = np.asarray(covariates, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        t = np.asarray(treatments, dtype=float)
        if Z.shape[0] != t.shape[0]:
            raise ValueError("covariate and treatment counts differ")
        state = cls(spec, prior, n=n, n0=n0 if n0 is not None else len(t))
        state.Z = [tuple(row) for row in Z]
        state.t = [float(v) for v in t]
        return state

    # -- introspection ----------------------------------------------------

    @property
    def n_allocated(self) -> int:
        return len(self.t)

    @property
    def n_responded(self) -> int:
        return len(self.y)

    def design_matrix(self) -> np.ndarray:
        """Rows for every subject with an assigned treatment."""
        if not self.t:
            return np.empty((0, self.spec.q))
        return build_design_matrix(np.asarray(self.Z), np.asarray(self.t), self.spec)

    def beta(self) -> np.ndarray:
        if self.beta_hat is None:
            return np.zeros(self.spec.q)
        return self.beta_hat.beta

    def copy(self) -> "TrialState":
        return copy.deepcopy(self)

    # -- mutation ---------------------------------------------------------

    def record_subject(self, covariates) -> None:
        """Register an arriving subject's covariates; allocation is pending."""
        if self.pending_covariates is not None:
            raise SequencingError("previous subject still awaits a treatment")
        if len(self.y) != len(self.t):
            raise SequencingError("previous subject's response not yet recorded")
        z = tuple(float(c) for c in np.atleast_1d(np.asarray(covariates, dtype=float)))
        if any(c not in (-1.0, 1.0) for c in z):
            raise ValueError("covariates must be coded {-1, +1}")
        self.pending_covariates = z

    def assign_treatment(self, treatment: float, event: AllocationEvent | None = None) -> None:
        """Attach the treatment for the pending subject."""
        if self.pending_covariates is None:
            raise SequencingError("no subject awaiting a treatment")
        if float(treatment) not in (-1.0, 1.0):
            raise ValueError("treatment must be coded {-1, +1}")
        self.Z.append(self.pending_covariates)
        self.t.append(float(treatment))
        self.pending_covariates = None
        if event is not None:
            self.history.append(event)

    def record_response(self, y: int, tol: float = 1e-8, max_iter: int = 100) -> None:
        """Record the response for the last treated subject and refit."""
        if y not in (0, 1):
            raise ValueError("response must be 0 or 1")
        if len(self.y) >= len(self.t):
            raise SequencingError("no treated subject awaits a response")
        self.y.append(int(y))
        i = len(self.y)
        X = build_design_matrix(np.asarray(self.Z[:i]), np.asarray(self.t[:i]), self.spec)
        self.beta_hat = fit_map(X, np.asarray(self.y), self.prior, tol=tol,
                                max_iter=max_iter)


def exchange_objective(Z: np.ndarray, t: np.ndarray, spec: ModelSpec,
                       criterion: Criterion) -> float:
    """Ridge-regularized criterion at beta = 0, total even for singular designs."""
    X = build_design_matrix(Z, t, spec)
    M = information_matrix(X, np.zeros(spec.q))
    return objective_from_information(M, criterion, ridge=EXCHANGE_RIDGE)


def initial_design(covariates, spec: ModelSpec, criterion: Criterion,
                   n_random_starts: int = 10,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Coordinate-exchange treatment assignment for the first subjects at beta = 0.

    From each random start the sweep visits every subject in order, swapping
    the treatment to whichever level improves the regularized objective;
    sweeps repeat until one passes with no change. Ties keep the incumbent.
    The best of n_random_starts is returned.
    """
    rng = np.random.default_rng() if rng is None else rng
    Z = np.asarray(covariates, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n0 = Z.shape[0]
    if n0 < 1:
        raise ValueError("initial design requires at least one subject")

    best_t, best_val = None, np.inf
    for _ in range(max(1, n_random_starts)):
        t = rng.choice([-1.0, 1.0], size=n0)
        val = exchange_objective(Z, t, spec, criterion)
        changed = True
        while changed:
            changed = False
            for j in range(n0):
                alt = t.copy()
                alt[j] = -alt[j]
                alt_val = exchange_objective(Z, alt, spec, criterion)
                if alt_val < val:
                    t, val = alt, alt_val
                    changed = True
        if val < best_val:
            best_t, best_val = t, val
    return best_t
