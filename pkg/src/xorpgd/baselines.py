"""Comparison samplers: systematic-sweep Gibbs and loopy belief propagation
with independent per-variable draws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .factor_graph import FactorGraph

__all__ = [
    "GibbsConfig",
    "BpConfig",
    "BpResult",
    "gibbs_conditional",
    "gibbs_sample",
    "bp_marginals",
    "bp_sample",
]


@dataclass(frozen=True)
class GibbsConfig:
    """Burn-in is counted in full sweeps, thinning in single-site steps."""

    burn_in: int = 100
    thin: int = 30

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")


@dataclass(frozen=True)
class BpConfig:
    max_iters: int = 20
    damping: float = 0.0
    tol: float = 1e-8

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (0.0 <= self.damping < 1.0):
            raise ValueError("damping must lie in [0, 1)")


class _GibbsKernel:
    """Per-variable factor lookup tables for fast single-site updates.

    The chain state is a plain int using the factor-graph bit convention
    (variable v lives at bit n-1-v), so conditional evaluation is a handful
    of integer shifts per touching factor.
    """

    def __init__(self, fg: FactorGraph):
        n = fg.num_vars
        self.num_vars = n
        self.per_var = []
        for v in range(n):
            entries = []
            for fi in fg.var_factors[v]:
                f = fg.factors[fi]
                k = len(f.scope)
                my_shift = None
                others = []
                for j, u in enumerate(f.scope):
                    shift = k - 1 - j
                    if u == v:
                        my_shift = shift
                    else:
                        others.append((n - 1 - u, shift))
                entries.append((f.log_table.tolist(), others, my_shift))
            self.per_var.append(entries)

    def conditional(self, state: int, v: int) -> float:
        """P(var v = 1 | rest) from the factors touching v."""
        l0 = 0.0
        l1 = 0.0
        for log_table, others, my_shift in self.per_var[v]:
            base = 0
            for state_bit, shift in others:
                base |= ((state >> state_bit) & 1) << shift
            l0 += log_table[base]
            l1 += log_table[base | (1 << my_shift)]
        if not self.per_var[v]:
            return 0.5
        # stable sigmoid of l1 - l0
        d = l1 - l0
        if d >= 0:
            return 1.0 / (1.0 + math.exp(-d))
        e = math.exp(d)
        return e / (1.0 + e)


def gibbs_conditional(fg: FactorGraph, assignment, v: int) -> float:
    """P(var v = 1 | all other variables fixed as in ``assignment``)."""
    if not (0 <= v < fg.num_vars):
        raise ValueError(f"variable index {v} out of range")
    state = 0
    for b in assignment:
        state = (state << 1) | int(b)
    return _GibbsKernel(fg).conditional(state, v)


def gibbs_sample(fg: FactorGraph, config: GibbsConfig, count: int, rng) -> np.ndarray:
    """Systematic-sweep Gibbs chain; deterministic given the seed.

    The first sample is emitted ``thin`` single-site steps after the burn-in
    sweeps finish, then one sample every ``thin`` steps.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n = fg.num_vars
    kernel = _GibbsKernel(fg)
    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    state = 0
    for b in bits:
        state = (state << 1) | int(b)

    cursor = 0  # next variable in the systematic order

    def step(state: int) -> int:
        nonlocal cursor
        v = cursor
        cursor = cursor + 1 if cursor + 1 < n else 0
        p1 = kernel.conditional(state, v)
        bit = 1 if rng.random() < p1 else 0
        mask = 1 << (n - 1 - v)
        return (state | mask) if bit else (state & ~mask)

    for _ in range(config.burn_in * n):
        state = step(state)
    out = np.zeros((count, n), dtype=np.uint8)
    for i in range(count):
        for _ in range(config.thin):
            state = step(state)
        for v in range(n):
            out[i, v] = (state >> (n - 1 - v)) & 1
    return out


@dataclass
class BpResult:
    marginals: np.ndarray  # P(var = 1)
    converged: bool
    iterations: int


def _logsumexp(a: np.ndarray, axis) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def bp_marginals(fg: FactorGraph, config: BpConfig = BpConfig()) -> BpResult:
    """Loopy sum-product in log space with synchronous updates.

    Exact on acyclic models once converged; on loopy models the result after
    ``max_iters`` is returned with ``converged=False`` if the message change
    never fell below ``tol``.
    """
    n = fg.num_vars
    factors = fg.factors
    # messages keyed by (factor index, position in scope), each a log pair
    f2v = {}
    v2f = {}
    shapes = {}
    for fi, f in enumerate(factors):
        k = len(f.scope)
        shapes[fi] = f.log_table.reshape((2,) * k)
        for j in range(k):
            f2v[(fi, j)] = np.zeros(2)
            v2f[(fi, j)] = np.zeros(2)
    converged = False
    iterations = 0
    for it in range(config.max_iters):
        iterations = it + 1
        # variable -> factor
        new_v2f = {}
        for fi, f in enumerate(factors):
            for j, v in enumerate(f.scope):
                total = np.zeros(2)
                for fo in fg.var_factors[v]:
                    if fo == fi:
                        continue
                    jo = factors[fo].scope.index(v)
                    total = total + f2v[(fo, jo)]
                total = total - total.max()
                new_v2f[(fi, j)] = total
        # factor -> variable
        delta = 0.0
        new_f2v = {}
        for fi, f in enumerate(factors):
            k = len(f.scope)
            tensor = shapes[fi].copy()
            for j in range(k):
                shape = [1] * k
                shape[j] = 2
                tensor = tensor + new_v2f[(fi, j)].reshape(shape)
            for j in range(k):
                axes = tuple(a for a in range(k) if a != j)
                incoming = new_v2f[(fi, j)]
                if axes:
                    msg = _logsumexp(tensor - incoming.reshape(
                        [2 if a == j else 1 for a in range(k)]
                    ), axis=axes)
                else:
                    msg = tensor - incoming
                msg = msg - msg.max()
                msg = config.damping * f2v[(fi, j)] + (1.0 - config.damping) * msg
                delta = max(delta, float(np.max(np.abs(msg - f2v[(fi, j)]))))
                new_f2v[(fi, j)] = msg
        f2v = new_f2v
        v2f = new_v2f
        if delta < config.tol:
            converged = True
            break
    beliefs = np.full(n, 0.5)
    for v in range(n):
        if not fg.var_factors[v]:
            continue
        total = np.zeros(2)
        for fi in fg.var_factors[v]:
            j = factors[fi].scope.index(v)
            total = total + f2v[(fi, j)]
        total = total - total.max()
        p = np.exp(total)
        beliefs[v] = p[1] / p.sum()
    return BpResult(marginals=beliefs, converged=converged, iterations=iterations)


def bp_sample(marginals: np.ndarray, count: int, rng) -> np.ndarray:
    """Independent per-variable draws from the beliefs (mean-field product).

    The joint sampler behind the beliefs is deliberately the weakest
    defensible choice; correlations between variables are discarded.
    """
    marginals = np.asarray(marginals, dtype=float)
    if np.any(marginals < 0.0) or np.any(marginals > 1.0):
        raise ValueError("marginals must lie in [0, 1]")
    return (rng.random((count, marginals.shape[0])) < marginals).astype(np.uint8)
