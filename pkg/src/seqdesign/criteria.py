"""Information-matrix objective functions and relative efficiency."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, build_row, information_matrix

__all__ = [
    "Criterion",
    "SINGULARITY_RTOL",
    "objective_from_information",
    "d_objective",
    "da_objective",
    "candidate_objective",
    "relative_efficiency",
]

# |det M| below this fraction of the matrix scale counts as singular.
SINGULARITY_RTOL = 1e-12


@dataclass(frozen=True)
class Criterion:
    """Objective over the information matrix: full determinant or m contrasts.

    kind "D" minimizes |inv(M)|; kind "DA" minimizes |A' inv(M) A| with A a
    q x m contrast matrix, m < q.
    """

    kind: str
    A: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("D", "DA"):
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.kind == "DA":
            if self.A is None:
                raise ValueError("DA criterion requires a contrast matrix")
            A = np.asarray(self.A, dtype=float)
            if A.ndim == 1:
                A = A[:, None]
            if A.shape[1] >= A.shape[0]:
                raise ValueError("contrast matrix must have m < q columns")
            if np.any(np.all(A == 0, axis=0)):
                raise ValueError("contrast matrix has an all-zero column")
            object.__setattr__(self, "A", A)
            nz = np.flatnonzero(A[:, 0])
            unit = int(nz[0]) if A.shape[1] == 1 and nz.size == 1 else None
            object.__setattr__(self, "unit_contrast_index", unit)
        elif self.A is not None:
            raise ValueError("D criterion takes no contrast matrix")
        else:
            object.__setattr__(self, "unit_contrast_index", None)

    @property
    def m(self) -> int:
        """Number of contrasts scored; defined for the DA kind only."""
        if self.kind != "DA":
            raise ValueError("m is defined only for the DA criterion")
        return self.A.shape[1]

    @classmethod
    def treatment_effect(cls, spec: ModelSpec) -> "Criterion":
        """Single-contrast criterion on the treatment main effect."""
        A = np.zeros(spec.q)
        A[spec.treatment_position] = 1.0
        return cls(kind="DA", A=A)


def _singularity_threshold(M: np.ndarray) -> float:
    # Hadamard bound: |det M| <= product of row norms; scale the tolerance by it.
    norms = np.linalg.norm(M, axis=1)
    scale = float(np.prod(norms))
    return SINGULARITY_RTOL * max(scale, 1e-300)


def _det(M: np.ndarray) -> float:
    # Closed forms for the small orders that dominate sequential use.
    q = M.shape[0]
    if q == 1:
        return float(M[0, 0])
    if q == 2:
        return float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    if q == 3:
        a, b, c = M[0]
        d, e, f = M[1]
        g, h, i = M[2]
        return float(a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g))
    return float(np.linalg.det(M))


def _minor_det(M: np.ndarray, j: int) -> float:
    """Determinant of M with row j and column j removed."""
    q = M.shape[0]
    if q == 2:
        return float(M[1 - j, 1 - j])
    if q == 3:
        k, l = [i for i in range(3) if i != j]
        return float(M[k, k] * M[l, l] - M[k, l] * M[l, k])
    sub = np.delete(np.delete(M, j, axis=0), j, axis=1)
    return float(np.linalg.det(sub))


def _objective3(M: np.ndarray, criterion: Criterion) -> float:
    # Scalar fast path for the dominant q=3 case: one unpack, closed-form
    # determinant, row-norm scale and (j,j) minor, no further numpy calls.
    a, b, c, d, e, f, g, h, i = M.ravel().tolist()
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    scale = ((a * a + b * b + c * c) * (d * d + e * e + f * f)
             * (g * g + h * h + i * i)) ** 0.5
    if det <= 0 or det < SINGULARITY_RTOL * max(scale, 1e-300):
        return float("inf")
    if criterion.kind == "D":
        return 1.0 / det
    j = criterion.unit_contrast_index
    if j is not None:
        if j == 0:
            minor = e * i - f * h
        elif j == 1:
            minor = a * i - c * g
        else:
            minor = a * e - b * d
        coef = float(criterion.A[j, 0])
        return abs(coef * coef * minor / det)
    V = np.linalg.solve(M, criterion.A)
    C = criterion.A.T @ V
    if criterion.m == 1:
        return float(abs(C[0, 0]))
    return float(abs(_det(C)))


def objective_from_information(M: np.ndarray, criterion: Criterion,
                               ridge: float = 0.0) -> float:
    """Criterion value for an information matrix; +inf when M is singular."""
    M = np.asarray(M, dtype=float)
    if ridge:
        M = M + ridge * np.eye(M.shape[0])
    if M.shape[0] == 3:
        return _objective3(M, criterion)
    det = _det(M)
    if det <= 0 or abs(det) < _singularity_threshold(M):
        return np.inf
    if criterion.kind == "D":
        return 1.0 / det
    j = criterion.unit_contrast_index
    if j is not None:
        # Single elementary contrast: A' inv(M) A = a^2 * cofactor_jj / det.
        a = float(criterion.A[j, 0])
        return abs(a * a * _minor_det(M, j) / det)
    V = np.linalg.solve(M, criterion.A)
    C = criterion.A.T @ V
    if criterion.m == 1:
        return float(abs(C[0, 0]))
    return float(abs(_det(C)))


def d_objective(X, beta) -> float:
    """|inv(X'WX)|, or +inf when the information matrix is singular."""
    crit = Criterion(kind="D")
    return objective_from_information(information_matrix(X, beta), crit)


def da_objective(X, beta, criterion: Criterion) -> float:
    """|A' inv(X'WX) A|, or +inf when the information matrix is singular."""
    if criterion.kind != "DA":
        raise ValueError("da_objective requires a DA criterion")
    return objective_from_information(information_matrix(X, beta), criterion)


def evaluate(X, beta, criterion: Criterion) -> float:
    """Dispatch on criterion kind."""
    return objective_from_information(information_matrix(X, beta), criterion)


def candidate_objective(state, new_covariates, candidate_treatment, beta,
                        criterion: Criterion) -> float:
    """Objective after appending one hypothetical subject; state is not mutated."""
    x_new = build_row(new_covariates, candidate_treatment, state.spec)
    X = state.design_matrix()
    if X.shape[1] != x_new.size:
        raise ValueError("design matrix and candidate row dimensions differ")
    return evaluate(np.vstack([X, x_new]), beta, criterion)


def relative_efficiency(psi_ref: float, psi: float, m: int) -> float:
    """(psi_ref / psi)^(1/m)."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    if not (np.isfinite(psi_ref) and np.isfinite(psi)) or psi_ref <= 0 or psi <= 0:
        raise ValueError("efficiency requires finite positive objective values")
    return float((psi_ref / psi) ** (1.0 / m))
