"""Convex feasible sets with exact Euclidean projections.

Each set exposes ``project(x)`` (the nearest feasible point), ``violation(x)``
(a nonnegative residual, 0 inside the set), and ``contains(x, tol)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .numerics import solve_spd

__all__ = [
    "NonnegHalfspace",
    "Box",
    "Polyhedron",
    "EqualityAffine",
    "ConstraintSet",
    "project",
]


@dataclass(frozen=True)
class NonnegHalfspace:
    """``{x : x >= 0, w.x <= cap}`` with strictly positive weights.

    Projection is exact: clip at zero, then bisect the scalar dual multiplier
    of the budget row until ``w . max(x - lam*w, 0) = cap``.
    """

    weights: np.ndarray
    cap: float
    tol: float = 1e-10

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.shape[0] < 1:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be strictly positive and finite")
        if not np.isfinite(self.cap) or self.cap < 0.0:
            raise ValueError("cap must be nonnegative and finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "cap", float(self.cap))

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        w = self.weights
        if self.cap == 0.0:
            return np.zeros_like(x)
        y = np.maximum(x, 0.0)
        if float(w @ y) <= self.cap:
            return y
        # w.max(x - lam*w, 0) is continuous, strictly decreasing to 0
        lo, hi = 0.0, float(np.max(x / w)) + 1.0
        for _ in range(200):
            lam = 0.5 * (lo + hi)
            y = np.maximum(x - lam * w, 0.0)
            g = float(w @ y)
            if abs(g - self.cap) <= self.tol * max(1.0, self.cap):
                break
            if g > self.cap:
                lo = lam
            else:
                hi = lam
        return np.maximum(x - 0.5 * (lo + hi) * w, 0.0)

    def violation(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        neg = float(max(0.0, -x.min())) if x.size else 0.0
        over = float(max(0.0, self.weights @ x - self.cap))
        return max(neg, over)

    def contains(self, x: np.ndarray, tol: float = 1e-8) -> bool:
        return self.violation(x) <= tol


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; bounds may be ``+-inf``.  Projection clips."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        lo, up = np.broadcast_arrays(lo, up)
        lo = np.array(lo, dtype=float)
        up = np.array(up, dtype=float)
        if np.any(lo > up):
            raise ValueError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def violation(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        below = np.max(np.maximum(self.lower - x, 0.0), initial=0.0)
        above = np.max(np.maximum(x - self.upper, 0.0), initial=0.0)
        return float(max(below, above))

    def contains(self, x: np.ndarray, tol: float = 1e-8) -> bool:
        return self.violation(x) <= tol


@dataclass(frozen=True)
class Polyhedron:
    """``{x : A x <= b}``; projection by Dykstra's alternating projections."""

    a: np.ndarray
    b: np.ndarray
    tol: float = 1e-8
    max_cycles: int = 5000

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[0] != b.shape[0]:
            raise ValueError("A must be (m, d) with b of length m")
        if np.any(np.linalg.norm(a, axis=1) == 0.0):
            raise ValueError("zero row in A")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = self.a.shape[0]
        corrections = np.zeros((m, x.shape[0]))
        y = x.copy()
        row_sq = np.einsum("ij,ij->i", self.a, self.a)
        for _ in range(self.max_cycles):
            shift = 0.0
            for i in range(m):
                z = y + corrections[i]
                excess = float(self.a[i] @ z - self.b[i])
                if excess > 0.0:
                    ynew = z - (excess / row_sq[i]) * self.a[i]
                else:
                    ynew = z
                corrections[i] = z - ynew
                shift = max(shift, float(np.max(np.abs(ynew - y))))
                y = ynew
            if shift <= self.tol * 0.1 and self.violation(y) <= self.tol:
                return y
        raise RuntimeError(
            f"Dykstra projection did not converge in {self.max_cycles} cycles "
            "(ill-posed polyhedron?)"
        )

    def violation(self, x: np.ndarray) -> float:
        return float(np.max(np.maximum(self.a @ np.asarray(x, dtype=float) - self.b, 0.0), initial=0.0))

    def contains(self, x: np.ndarray, tol: float = 1e-8) -> bool:
        return self.violation(x) <= tol


@dataclass(frozen=True)
class EqualityAffine:
    """``{x : A x + b = 0}`` with full row-rank A.  Exact projection."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[0] != b.shape[0]:
            raise ValueError("A must be (m, d) with b of length m")
        if np.linalg.matrix_rank(a) < a.shape[0]:
            raise ValueError("A must have full row rank")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        residual = self.a @ x + self.b
        correction = self.a.T @ solve_spd(self.a @ self.a.T, residual)
        return x - correction

    def violation(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.a @ np.asarray(x, dtype=float) + self.b), initial=0.0))

    def contains(self, x: np.ndarray, tol: float = 1e-8) -> bool:
        return self.violation(x) <= tol


ConstraintSet = Union[NonnegHalfspace, Box, Polyhedron, EqualityAffine]


def project(constraint: ConstraintSet, x: np.ndarray) -> np.ndarray:
    """Nearest point of the feasible set in Euclidean norm."""
    return constraint.project(x)
