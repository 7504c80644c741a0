"""Small dense linear-algebra kernel: SPD solves, trace of an inverse, and a
central-difference gradient checker used to validate every analytic gradient
in the repository."""

from __future__ import annotations

import re
from typing import Callable

import numpy as np
import scipy.linalg

__all__ = ["NotSpdError", "solve_spd", "trace_inverse", "fd_gradient"]


class NotSpdError(ValueError):
    """Cholesky factorization broke down; ``pivot`` is the failing leading minor."""

    def __init__(self, message: str, pivot: int = -1):
        super().__init__(message)
        self.pivot = pivot


def _cholesky(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    try:
        return scipy.linalg.cholesky(a, lower=True)
    except scipy.linalg.LinAlgError as exc:
        # one jitter retry: near-singular SPD inputs (e.g. Laplacians of barely
        # connected graphs) often factor after a tiny diagonal shift
        n = a.shape[0]
        jitter = 1e-10 * float(np.trace(a)) / n
        if jitter > 0.0:
            try:
                return scipy.linalg.cholesky(a + jitter * np.eye(n), lower=True)
            except scipy.linalg.LinAlgError:
                pass
        m = re.search(r"(\d+)", str(exc))
        pivot = int(m.group(1)) if m else -1
        raise NotSpdError(
            f"matrix is not positive definite (leading minor {pivot})", pivot
        ) from exc


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive definite ``a``.

    Raises :class:`NotSpdError` (with the failing pivot index) if the
    factorization breaks down even after a single jitter retry.
    """
    low = _cholesky(a)
    b = np.asarray(b, dtype=float)
    y = scipy.linalg.solve_triangular(low, b, lower=True)
    return scipy.linalg.solve_triangular(low.T, y, lower=False)


def trace_inverse(a: np.ndarray) -> float:
    """Tr(a^-1) via one Cholesky factorization: ``||L^-1||_F^2``."""
    low = _cholesky(a)
    w = scipy.linalg.solve_triangular(low, np.eye(low.shape[0]), lower=True)
    return float((w * w).sum())


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """Central-difference gradient with step ``h_i = 1e-5 * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        h = 1e-5 * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite evaluation near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return g
