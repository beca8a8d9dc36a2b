"""Logistic response model: design rows, Fisher information, Cauchy-penalized MAP fit.

Covariates and treatments are coded {-1, +1}; responses are coded {0, 1}.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Term",
    "ModelSpec",
    "CauchyPrior",
    "ParameterEstimate",
    "FitError",
    "build_row",
    "build_design_matrix",
    "response_prob",
    "linear_predictor_weights",
    "information_matrix",
    "penalized_log_posterior",
    "posterior_gradient",
    "posterior_hessian",
    "fit_map",
]


class FitError(RuntimeError):
    """MAP fitting failed (non-finite objective encountered)."""

    def __init__(self, message: str, iterations: int = 0):
        super().__init__(message)
        self.iterations = iterations


@dataclass(frozen=True)
class Term:
    """One term of the linear predictor.

    kind is one of "intercept", "covariate", "treatment", "interaction";
    index is the covariate index for "covariate" and "interaction" terms.
    """

    kind: str
    index: int | None = None

    def __post_init__(self):
        if self.kind not in ("intercept", "covariate", "treatment", "interaction"):
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.kind in ("covariate", "interaction"):
            if self.index is None or self.index < 0:
                raise ValueError(f"{self.kind} term requires a covariate index >= 0")
        elif self.index is not None:
            raise ValueError(f"{self.kind} term takes no index")


@dataclass(frozen=True)
class ModelSpec:
    """Ordered term structure of the linear predictor.

    Exactly one intercept and one treatment main effect are required.
    """

    terms: tuple[Term, ...]

    def __post_init__(self):
        kinds = [t.kind for t in self.terms]
        if kinds.count("intercept") != 1:
            raise ValueError("spec requires exactly one intercept term")
        if kinds.count("treatment") != 1:
            raise ValueError("spec requires exactly one treatment term")

    @property
    def q(self) -> int:
        return len(self.terms)

    @property
    def n_covariates(self) -> int:
        """Smallest s consistent with the covariate indices referenced."""
        idx = [t.index for t in self.terms if t.index is not None]
        return max(idx) + 1 if idx else 0

    @property
    def treatment_position(self) -> int:
        return next(i for i, t in enumerate(self.terms) if t.kind == "treatment")

    @classmethod
    def main_effects(cls, n_covariates: int = 1, interactions: bool = False) -> "ModelSpec":
        """Intercept, covariate main effects, treatment, optional interactions."""
        terms = [Term("intercept")]
        terms += [Term("covariate", j) for j in range(n_covariates)]
        terms.append(Term("treatment"))
        if interactions:
            terms += [Term("interaction", j) for j in range(n_covariates)]
        return cls(tuple(terms))


@dataclass(frozen=True)
class CauchyPrior:
    """Independent Cauchy priors, one (location, scale) pair per coefficient."""

    locations: tuple[float, ...]
    scales: tuple[float, ...]

    def __post_init__(self):
        if len(self.locations) != len(self.scales):
            raise ValueError("locations and scales must have equal length")
        if any(s <= 0 for s in self.scales):
            raise ValueError("all prior scales must be positive")

    @property
    def q(self) -> int:
        return len(self.locations)

    @classmethod
    def default(cls, spec: ModelSpec, intercept_scale: float = 10.0,
                slope_scale: float = 2.5) -> "CauchyPrior":
        scales = tuple(intercept_scale if t.kind == "intercept" else slope_scale
                       for t in spec.terms)
        return cls(locations=(0.0,) * spec.q, scales=scales)


@dataclass(frozen=True)
class ParameterEstimate:
    beta: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))


def build_row(covariates, treatment: float, spec: ModelSpec) -> np.ndarray:
    """Design-matrix row for one subject, entries ordered per spec.terms."""
    z = np.atleast_1d(np.asarray(covariates, dtype=float))
    row = np.empty(spec.q)
    for k, term in enumerate(spec.terms):
        if term.kind == "intercept":
            row[k] = 1.0
        elif term.kind == "covariate":
            if term.index >= z.size:
                raise IndexError(
                    f"term references covariate {term.index} but only {z.size} supplied")
            row[k] = z[term.index]
        elif term.kind == "treatment":
            row[k] = treatment
        else:  # interaction
            if term.index >= z.size:
                raise IndexError(
                    f"term references covariate {term.index} but only {z.size} supplied")
            row[k] = z[term.index] * treatment
    return row


def build_design_matrix(Z, t, spec: ModelSpec) -> np.ndarray:
    """Stack build_row over subjects; Z is n x s (or length-n for s=1), t length n."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    t = np.asarray(t, dtype=float)
    return np.array([build_row(Z[i], t[i], spec) for i in range(len(t))]).reshape(len(t), spec.q)


def response_prob(x, beta) -> float:
    """P(y=1) under the logistic model, stable for large |eta|."""
    eta = float(np.dot(np.asarray(x, float), np.asarray(beta, float)))
    if eta >= 0:
        return 1.0 / (1.0 + np.exp(-eta))
    e = np.exp(eta)
    return e / (1.0 + e)


def _probs(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    eta = X @ beta
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def linear_predictor_weights(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Diagonal of W: pi_j (1 - pi_j) evaluated at the supplied beta."""
    p = _probs(np.asarray(X, float), np.asarray(beta, float))
    return p * (1.0 - p)


def information_matrix(X, beta) -> np.ndarray:
    """X'WX with W = diag(pi (1 - pi)) at the supplied beta."""
    X = np.asarray(X, dtype=float)
    w = linear_predictor_weights(X, beta)
    return (X.T * w) @ X


def penalized_log_posterior(X, y, beta, prior: CauchyPrior) -> float:
    """Bernoulli log-likelihood plus log Cauchy prior density (constants included).

    The additive constant is the exact one: each prior term contributes
    -log(pi * scale) at its mode.
    """
    X = np.asarray(X, dtype=float).reshape(-1, prior.q)
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    loglik = 0.0
    if len(y):
        eta = X @ beta
        # log(1 + e^eta) computed stably: max(eta,0) + log1p(e^{-|eta|})
        loglik = float(y @ eta - np.sum(np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))))
    loc = np.asarray(prior.locations)
    sc = np.asarray(prior.scales)
    u = (beta - loc) / sc
    logprior = float(np.sum(-np.log(np.pi * sc) - np.log1p(u * u)))
    return loglik + logprior


def posterior_gradient(X, y, beta, prior: CauchyPrior) -> np.ndarray:
    X = np.asarray(X, dtype=float).reshape(-1, prior.q)
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    g = np.zeros(prior.q)
    if len(y):
        g = X.T @ (y - _probs(X, beta))
    u = beta - np.asarray(prior.locations)
    sc2 = np.asarray(prior.scales) ** 2
    return g - 2.0 * u / (sc2 + u * u)


def posterior_hessian(X, y, beta, prior: CauchyPrior) -> np.ndarray:
    X = np.asarray(X, dtype=float).reshape(-1, prior.q)
    beta = np.asarray(beta, dtype=float)
    H = -information_matrix(X, beta) if X.shape[0] else np.zeros((prior.q, prior.q))
    u = beta - np.asarray(prior.locations)
    sc2 = np.asarray(prior.scales) ** 2
    d = 2.0 * (u * u - sc2) / (sc2 + u * u) ** 2
    return H + np.diag(d)


def fit_map(X, y, prior: CauchyPrior, init=None, tol: float = 1e-8,
            max_iter: int = 100) -> ParameterEstimate:
    """Maximize the Cauchy-penalized log posterior by damped Newton ascent.

    Step-halving (up to 30 halvings) guards each Newton step; when the Hessian
    is not negative definite the step falls back to steepest ascent. The fit
    converges when the gradient infinity-norm drops to tol.
    """
    X = np.asarray(X, dtype=float).reshape(-1, prior.q)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1:
        raise ValueError("fit_map requires at least one observation")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("responses must be coded {0, 1}")
    beta = np.zeros(prior.q) if init is None else np.asarray(init, dtype=float).copy()

    f = penalized_log_posterior(X, y, beta, prior)
    if not np.isfinite(f):
        raise FitError("objective non-finite at the initial point", iterations=0)
    it = 0
    gnorm = float(np.max(np.abs(posterior_gradient(X, y, beta, prior))))
    while it < max_iter and gnorm > tol:
        it += 1
        g = posterior_gradient(X, y, beta, prior)
        H = posterior_hessian(X, y, beta, prior)
        step = None
        try:
            # Newton direction is an ascent direction only for H negative definite
            # (equivalently -H positive definite, checked via Cholesky).
            np.linalg.cholesky(-H)
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            step = None
        if step is None or not np.all(np.isfinite(step)) or float(g @ step) <= 0:
            gn = np.linalg.norm(g)
            step = g / gn if gn > 0 else g
        scale = 1.0
        improved = False
        for _ in range(31):
            cand = beta + scale * step
            fc = penalized_log_posterior(X, y, cand, prior)
            if np.isfinite(fc) and fc > f:
                beta, f = cand, fc
                improved = True
                break
            scale *= 0.5
        if not improved:
            # Near the optimum the objective gain can fall below rounding while
            # the gradient is still above tol; accept a tiny full Newton step.
            if np.linalg.norm(step) < 1e-6:
                cand = beta + step
                fc = penalized_log_posterior(X, y, cand, prior)
                if np.isfinite(fc):
                    beta, f = cand, fc
                else:
                    break
            else:
                break
        if not np.all(np.isfinite(beta)):
            raise FitError("estimate diverged to non-finite values", iterations=it)
        gnorm = float(np.max(np.abs(posterior_gradient(X, y, beta, prior))))
    return ParameterEstimate(beta=beta, converged=gnorm <= tol, iterations=it,
                             final_gradient_norm=gnorm)
