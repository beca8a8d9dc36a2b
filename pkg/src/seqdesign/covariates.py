"""Covariate distribution models: static, dynamic (index-dependent), empirical.

Support is {-1, +1} per covariate with independent coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

__all__ = [
    "CovariateModel",
    "StaticCovariateModel",
    "DynamicCovariateModel",
    "EmpiricalCovariateModel",
]


def _as_point(value) -> tuple[float, ...]:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    return tuple(float(c) for c in v)


class CovariateModel:
    """Distribution over covariate vectors, possibly varying with subject index."""

    s: int

    def support_points(self) -> list[tuple[float, ...]]:
        return [tuple(float(c) for c in pt) for pt in product((-1.0, 1.0), repeat=self.s)]

    def _p_plus(self, subject_index: int) -> np.ndarray:
        """Per-coordinate P(z = +1) at the given subject index."""
        raise NotImplementedError

    def prob(self, subject_index: int, value) -> float:
        """Probability of the covariate vector at the given subject index."""
        pt = _as_point(value)
        if len(pt) != self.s or any(c not in (-1.0, 1.0) for c in pt):
            raise ValueError(f"value {value!r} outside the support {{-1,1}}^{self.s}")
        p = self._p_plus(subject_index)
        probs = np.where(np.asarray(pt) > 0, p, 1.0 - p)
        return float(np.prod(probs))

    def sample(self, subject_index: int, rng: np.random.Generator) -> tuple[float, ...]:
        p = self._p_plus(subject_index)
        u = rng.random(self.s)
        return tuple(1.0 if u[j] < p[j] else -1.0 for j in range(self.s))


@dataclass(frozen=True)
class StaticCovariateModel(CovariateModel):
    """Index-independent per-coordinate P(z = +1)."""

    p_plus: tuple[float, ...] = (0.5,)

    def __post_init__(self):
        p = tuple(float(v) for v in np.atleast_1d(self.p_plus))
        if any(not 0.0 <= v <= 1.0 for v in p):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "p_plus", p)

    @property
    def s(self) -> int:
        return len(self.p_plus)

    def _p_plus(self, subject_index: int) -> np.ndarray:
        return np.asarray(self.p_plus)


@dataclass(frozen=True)
class DynamicCovariateModel(CovariateModel):
    """P(z = +1) given by a rule of the subject index, clamped to [0, 1].

    The rule returns either a scalar (applied to every coordinate) or a
    length-s sequence.
    """

    rule: object  # callable: subject_index -> probability (or per-coord probs)
    s: int = 1

    def _p_plus(self, subject_index: int) -> np.ndarray:
        p = np.atleast_1d(np.asarray(self.rule(subject_index), dtype=float))
        if p.size == 1 and self.s > 1:
            p = np.repeat(p, self.s)
        if p.size != self.s:
            raise ValueError("rule returned the wrong number of probabilities")
        return np.clip(p, 0.0, 1.0)

    @classmethod
    def linear(cls, slope: float, intercept: float = 0.0, s: int = 1) -> "DynamicCovariateModel":
        """P(z_i = +1) = intercept + slope * i (clamped)."""
        return cls(rule=LinearRule(intercept=intercept, slope=slope), s=s)


@dataclass(frozen=True)
class LinearRule:
    """Picklable linear index rule for dynamic covariate models."""

    intercept: float
    slope: float

    def __call__(self, subject_index: int) -> float:
        return self.intercept + self.slope * subject_index

    @property
    def _linear_params(self) -> tuple[float, float]:
        return (self.intercept, self.slope)


@dataclass(frozen=True)
class EmpiricalCovariateModel(CovariateModel):
    """Observed proportions over the support, clamped away from 0 and 1.

    Clamping keeps every support point at positive probability so lookahead
    branches are never silently deleted; probabilities are renormalized after
    the clamp. With no observations the distribution is uniform.
    """

    counts: tuple[tuple[tuple[float, ...], int], ...] = ()
    s: int = 1
    clamp: tuple[float, float] = (0.01, 0.99)

    def __post_init__(self):
        lo, hi = self.clamp
        if not 0.0 < lo < hi < 1.0:
            raise ValueError("clamp bounds must satisfy 0 < lo < hi < 1")
        norm = tuple(sorted((_as_point(k), int(v)) for k, v in dict(self.counts).items()))
        for pt, c in norm:
            if len(pt) != self.s or any(x not in (-1.0, 1.0) for x in pt):
                raise ValueError(f"count key {pt} outside the support")
            if c < 0:
                raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", norm)

    @classmethod
    def from_observations(cls, values, s: int = 1,
                          clamp: tuple[float, float] = (0.01, 0.99)) -> "EmpiricalCovariateModel":
        counts: dict[tuple[float, ...], int] = {}
        for v in values:
            pt = _as_point(v)
            counts[pt] = counts.get(pt, 0) + 1
        return cls(counts=tuple(counts.items()), s=s, clamp=clamp)

    def observe(self, value) -> "EmpiricalCovariateModel":
        """Return a new model with one more observation of the given value."""
        pt = _as_point(value)
        if len(pt) != self.s or any(x not in (-1.0, 1.0) for x in pt):
            raise ValueError(f"value {value!r} outside the support")
        counts = dict(self.counts)
        counts[pt] = counts.get(pt, 0) + 1
        return EmpiricalCovariateModel(counts=tuple(counts.items()), s=self.s, clamp=self.clamp)

    def _proportions(self) -> dict[tuple[float, ...], float]:
        support = self.support_points()
        counts = dict(self.counts)
        total = sum(counts.get(pt, 0) for pt in support)
        if total == 0:
            return {pt: 1.0 / len(support) for pt in support}
        lo, hi = self.clamp
        raw = np.array([counts.get(pt, 0) / total for pt in support])
        clamped = np.clip(raw, lo, hi)
        clamped /= clamped.sum()
        return dict(zip(support, clamped))

    def prob(self, subject_index: int, value) -> float:
        pt = _as_point(value)
        props = self._proportions()
        if pt not in props:
            raise ValueError(f"value {value!r} outside the support")
        return float(props[pt])

    def sample(self, subject_index: int, rng: np.random.Generator) -> tuple[float, ...]:
        props = self._proportions()
        support = list(props)
        idx = rng.choice(len(support), p=[props[pt] for pt in support])
        return support[idx]

    def _p_plus(self, subject_index: int) -> np.ndarray:
        raise NotImplementedError("empirical model is defined over the joint support")
