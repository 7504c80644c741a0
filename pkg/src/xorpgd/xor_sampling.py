"""Constant-factor-accurate sampling from binary MRFs via random parity
constraints.

The pipeline has three stages:

1. *Discretization*: assignment weights are bucketed into geometric intervals
   of ratio ``r = 2^b / (2^b - 1)``; every weight in bucket ``i`` is replaced
   by the bucket floor ``M / r^(i+1)``, and weights below ``M / r^l`` are
   dropped (the tail).  The bucketed distribution is within a factor
   ``rho = r^2 / (1 - eps)`` of the true one.
2. *Slice embedding*: each surviving assignment is replicated ``k`` times via
   auxiliary bits, ``k`` proportional to its bucketed weight, which reduces
   weighted sampling to uniform sampling over an unweighted pair set.
3. *Pivot sampling*: random XOR constraints over all model+auxiliary bits cut
   the pair set down until an NP-style oracle can enumerate the survivors;
   with at most ``P`` survivors, one is returned uniformly with acceptance
   probability ``count / P``, otherwise the draw fails.

Failure is a value, not an error: batch statistics over retries are
first-class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .factor_graph import (
    DEFAULT_ENUMERATION_CAP,
    FactorGraph,
    index_to_assignment,
    log_weight_array,
)

__all__ = [
    "DiscretizationConfig",
    "DiscretizedWeights",
    "SliceSet",
    "ParityConstraint",
    "OracleResult",
    "ExhaustiveOracle",
    "GF2BranchOracle",
    "XorSamplerConfig",
    "SampleResult",
    "BatchStats",
    "XorSampler",
    "discretize",
    "zero_tail_config",
    "embed_slices",
    "draw_parity_constraints",
    "oracle_solve",
    "make_oracle",
    "oracle_request_text",
    "xor_sample",
    "sample_batch",
]

_U1 = np.uint64(1)

# weights within this log-space distance of a bucket boundary are treated as
# exactly on it, so closed upper endpoints survive floating-point noise
_BOUNDARY_SNAP = 1e-9


def _snap_integer(x):
    nearest = np.rint(x)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(nearest) if abs(x - nearest) < _BOUNDARY_SNAP else x
    x = np.array(x, dtype=float)
    close = np.abs(x - nearest) < _BOUNDARY_SNAP
    x[close] = nearest[close]
    return x


def _parity_u64(v: np.ndarray) -> np.ndarray:
    """Bitwise parity (popcount mod 2) of each uint64 entry."""
    v = v.copy()
    v ^= v >> np.uint64(32)
    v ^= v >> np.uint64(16)
    v ^= v >> np.uint64(8)
    v ^= v >> np.uint64(4)
    v ^= v >> np.uint64(2)
    v ^= v >> np.uint64(1)
    return v & _U1


# ---------------------------------------------------------------------------
# Stage 1: weight discretization


@dataclass(frozen=True)
class DiscretizationConfig:
    """Geometric bucketing parameters.

    ``r = 2^b / (2^b - 1)`` is the bucket ratio and the bucket count for an
    n-variable model is ``l = ceil(log_r(2^n / epsilon))``, which caps the
    dynamic range kept after discretization at ``2^n / epsilon``.
    """

    b: int = 7
    epsilon: float = 0.01

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise ValueError(f"b must be an integer >= 1, got {self.b}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        object.__setattr__(self, "b", int(self.b))

    @property
    def r(self) -> float:
        return (2.0 ** self.b) / (2.0 ** self.b - 1.0)

    @property
    def rho(self) -> float:
        """Constant sandwich factor of the bucketed distribution."""
        return self.r ** 2 / (1.0 - self.epsilon)

    def num_buckets(self, num_vars: int) -> int:
        raw = (num_vars * math.log(2.0) - math.log(self.epsilon)) / math.log(self.r)
        return max(1, math.ceil(_snap_integer(raw)))


@dataclass(frozen=True)
class DiscretizedWeights:
    """Bucket assignment and bucketed weights for every model assignment.

    ``bucket[i]`` is the bucket of assignment index ``i``; buckets ``0..l-1``
    carry weight ``M / r^(bucket+1)`` and the tail bucket ``l`` carries 0.
    """

    graph: FactorGraph
    config: DiscretizationConfig
    num_vars: int
    num_buckets: int
    log_max: float
    log_min: float
    bucket: np.ndarray  # int32, length 2**num_vars
    tail_empty: bool

    @property
    def rho(self) -> float:
        return self.config.rho

    def log_bucket_weights(self) -> np.ndarray:
        """Log bucketed weight per bucket index (length l+1, tail = -inf)."""
        l = self.num_buckets
        logr = math.log(self.config.r)
        out = self.log_max - (np.arange(l + 1, dtype=float) + 1.0) * logr
        out[l] = -np.inf
        return out

    def log_w_prime(self) -> np.ndarray:
        """Log bucketed weight per assignment index (tail = -inf)."""
        return self.log_bucket_weights()[self.bucket]

    def p_prime(self) -> np.ndarray:
        """Normalized bucketed distribution (tail assignments get 0)."""
        lwp = self.log_w_prime()
        finite = lwp[np.isfinite(lwp)]
        p = np.exp(lwp - finite.max())
        p[~np.isfinite(lwp)] = 0.0
        return p / p.sum()


def discretize(
    fg: FactorGraph,
    config: DiscretizationConfig = DiscretizationConfig(),
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> DiscretizedWeights:
    """Assign every assignment to its geometric weight bucket.

    Bucket ``i`` (for ``i < l``) holds weights in ``(M/r^(i+1), M/r^i]`` and
    the tail bucket ``l`` holds ``(0, M/r^l]``; ``tail_empty`` records whether
    ``M / r^l < m`` so the tail cannot be hit.
    """
    lw = log_weight_array(fg, cap)
    log_max = float(lw.max())
    log_min = float(lw.min())
    l = config.num_buckets(fg.num_vars)
    logr = math.log(config.r)
    depth = _snap_integer((log_max - lw) / logr)
    bucket = np.floor(depth).astype(np.int64)
    np.clip(bucket, 0, l, out=bucket)
    tail_empty = log_max - l * logr < log_min - _BOUNDARY_SNAP
    if tail_empty:
        # no assignment can mathematically reach the tail; clamp float fuzz
        np.clip(bucket, 0, l - 1, out=bucket)
    return DiscretizedWeights(
        graph=fg,
        config=config,
        num_vars=fg.num_vars,
        num_buckets=l,
        log_max=log_max,
        log_min=log_min,
        bucket=bucket.astype(np.int32),
        tail_empty=tail_empty,
    )


def zero_tail_config(
    fg: FactorGraph,
    config: DiscretizationConfig = DiscretizationConfig(),
    cap: int = DEFAULT_ENUMERATION_CAP,
    max_halvings: int = 900,
) -> DiscretizationConfig:
    """Shrink ``epsilon`` until the tail bucket is provably empty.

    Dropping ``epsilon`` raises the bucket count ``l`` until ``M/r^l`` falls
    below the smallest model weight.
    """
    lw = log_weight_array(fg, cap)
    log_max = float(lw.max())
    log_min = float(lw.min())
    logr = math.log(config.r)
    eps = config.epsilon
    for _ in range(max_halvings):
        candidate = replace(config, epsilon=eps)
        l = candidate.num_buckets(fg.num_vars)
        if log_max - l * logr < log_min - _BOUNDARY_SNAP:
            return candidate
        eps *= 0.5
    raise RuntimeError("could not reach an empty tail; weight range too extreme")


# ---------------------------------------------------------------------------
# Stage 2: slice embedding


@dataclass(frozen=True)
class SliceSet:
    """Unweighted pair set ``{(theta, delta) : int(delta) < k(theta)}``.

    ``slice_count[i]`` is ``k`` for assignment index ``i`` (0 inside the
    tail); ``unit`` is the weight each slice stands for, so
    ``k * unit`` approximates the bucketed weight within
    ``distortion_bound``.
    """

    graph: FactorGraph | None
    num_vars: int
    aux_bits: int
    slice_count: np.ndarray  # int64, length 2**num_vars
    unit: float
    distortion_bound: float
    quantization: int

    @property
    def size(self) -> int:
        """Number of admissible pairs."""
        return int(self.slice_count.sum())

    @property
    def total_bits(self) -> int:
        return self.num_vars + self.aux_bits


def embed_slices(
    dw: DiscretizedWeights,
    quantization: int = 8,
    max_aux_bits: int = 40,
) -> SliceSet:
    """Replicate each non-tail assignment proportionally to its bucketed weight.

    For ``b = 1`` the bucketed weights are exact powers of two times the
    smallest one, so ``k = w'/m'`` exactly and the embedding adds no
    distortion.  For general ``b``, ``k = round(w'/u)`` at resolution
    ``u = m'/2^q``; the extra multiplicative distortion is bounded by
    ``(1 + 2^-q) / (1 - 2^-q)``.  Slice counts are reduced by their common
    divisor before allocating auxiliary bits.
    """
    q = int(quantization)
    if q < 1:
        raise ValueError(
            "quantization too coarse: q must be >= 1 "
            "(the distortion bound (1+2^-q)/(1-2^-q) is undefined at q=0)"
        )
    l = dw.num_buckets
    occupied = np.unique(dw.bucket)
    occupied = occupied[occupied < l]
    i_max = int(occupied.max())  # bucket of the smallest kept weight
    i_min = int(occupied.min())
    b = dw.config.b
    if b == 1:
        k_of_bucket = [1 << (i_max - i) if i <= i_max else 0 for i in range(l + 1)]
        distortion = 1.0
        log_unit = dw.log_max - (i_max + 1) * math.log(2.0)
    else:
        r = dw.config.r
        span_bits = q + (i_max - i_min) * math.log2(r)
        if span_bits > max_aux_bits + 2:
            raise ValueError(
                f"slice embedding needs about {span_bits:.0f} auxiliary bits, "
                f"cap is {max_aux_bits}"
            )
        k_of_bucket = [
            round((2 ** q) * r ** (i_max - i)) if i <= i_max else 0
            for i in range(l + 1)
        ]
        distortion = (1.0 + 2.0 ** -q) / (1.0 - 2.0 ** -q)
        log_unit = dw.log_max - (i_max + 1) * math.log(r) - q * math.log(2.0)
    # tail and any bucket below the smallest occupied one carry no slices
    karr = np.asarray(k_of_bucket, dtype=np.int64)
    karr[l] = 0
    occupied_k = karr[occupied]
    g = int(np.gcd.reduce(occupied_k))
    if g > 1:
        karr = karr // g
        log_unit += math.log(g)
    k_max = int(karr[occupied].max())
    aux_bits = (k_max - 1).bit_length() if k_max > 1 else 0
    if aux_bits > max_aux_bits:
        raise ValueError(
            f"slice embedding needs {aux_bits} auxiliary bits, cap is {max_aux_bits}"
        )
    slice_count = karr[dw.bucket]
    return SliceSet(
        graph=dw.graph,
        num_vars=dw.num_vars,
        aux_bits=aux_bits,
        slice_count=slice_count,
        unit=math.exp(log_unit),
        distortion_bound=distortion,
        quantization=q,
    )


# ---------------------------------------------------------------------------
# Stage 3: parity constraints and oracles

# Joint bit layout: bits 0..Q-1 are the auxiliary (slice) bits, bits
# Q..Q+n-1 are the model assignment index, i.e. joint = (theta_index << Q) | delta.


@dataclass(frozen=True)
class ParityConstraint:
    """Random XOR constraint: parity of the masked joint bits must equal
    ``parity``."""

    mask: int
    parity: int

    def __post_init__(self):
        if self.mask < 0 or self.parity not in (0, 1):
            raise ValueError("mask must be nonnegative and parity 0/1")

    def variables(self) -> tuple[int, ...]:
        out = []
        m = self.mask
        pos = 0
        while m:
            if m & 1:
                out.append(pos)
            m >>= 1
            pos += 1
        return tuple(out)

    def satisfied(self, joint: int) -> bool:
        return (joint & self.mask).bit_count() & 1 == self.parity


def draw_parity_constraints(num_bits: int, count: int, rng) -> list[ParityConstraint]:
    """Draw ``count`` independent constraints: each bit joins a constraint
    with probability 1/2 and the target parity is uniform."""
    out = []
    for _ in range(count):
        if num_bits > 0:
            bits = rng.integers(0, 2, size=num_bits, dtype=np.uint8)
            mask = int.from_bytes(
                np.packbits(bits, bitorder="little").tobytes(), "little"
            )
        else:
            mask = 0
        out.append(ParityConstraint(mask, int(rng.integers(0, 2))))
    return out


@dataclass
class OracleResult:
    """Solutions of the slice-plus-parity system, truncated at ``limit + 1``."""

    solutions: list[tuple[int, int]]  # (theta_index, delta), ascending
    truncated: bool

    @property
    def count(self) -> int:
        return len(self.solutions)


class ExhaustiveOracle:
    """Reference backend: filters every joint bit pattern directly."""

    def __init__(self, max_bits: int = 22):
        self.max_bits = max_bits

    def solve(
        self,
        slices: SliceSet,
        parities: Sequence[ParityConstraint],
        limit: int,
    ) -> OracleResult:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        n, q = slices.num_vars, slices.aux_bits
        width = n + q
        if width > self.max_bits:
            raise ValueError(
                f"instance needs {width} bits; exhaustive backend capped at {self.max_bits}"
            )
        kvec = slices.slice_count.astype(np.uint64)
        dmask = np.uint64((1 << q) - 1)
        sols: list[tuple[int, int]] = []
        truncated = False
        total = 1 << width
        chunk = 1 << 20
        for start in range(0, total, chunk):
            joint = np.arange(start, min(start + chunk, total), dtype=np.uint64)
            delta = joint & dmask
            theta = (joint >> np.uint64(q)).astype(np.int64)
            ok = delta < kvec[theta]
            for pc in parities:
                ok &= _parity_u64(joint & np.uint64(pc.mask)) == np.uint64(pc.parity)
            hits = joint[ok]
            for j in hits:
                if len(sols) > limit:
                    truncated = True
                    break
                sols.append((int(j) >> q, int(j) & ((1 << q) - 1)))
            if truncated:
                break
        if len(sols) > limit:
            truncated = True
            sols = sols[: limit + 1]
        return OracleResult(sols, truncated)


class GF2BranchOracle:
    """Default backend: branches over model assignments and counts each
    branch's auxiliary solutions after GF(2) elimination of the parity
    system, so the ``2^(n+Q)`` joint space is never materialized.

    For every assignment the admissible auxiliary values form the integer
    interval ``[0, k)``, which splits into dyadic blocks; each block fixes a
    bit prefix, and the eliminated parity system yields the block's solution
    count from its rank plus per-block consistency conditions evaluated
    vectorially across all assignments.
    """

    def __init__(self, enumeration_cap: int = DEFAULT_ENUMERATION_CAP):
        self.enumeration_cap = enumeration_cap

    def solve(
        self,
        slices: SliceSet,
        parities: Sequence[ParityConstraint],
        limit: int,
    ) -> OracleResult:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        n, q = slices.num_vars, slices.aux_bits
        if n > self.enumeration_cap:
            raise ValueError(
                f"model has {n} bits; backend enumeration capped at {self.enumeration_cap}"
            )
        if n + q > 62:
            raise ValueError("joint bit width beyond 62 is not supported")
        kvec = slices.slice_count
        rows, rank_below = _reduce_delta_system([pc.mask & ((1 << q) - 1) for pc in parities], q)
        counts = self._count_all(slices, parities, rows, rank_below)
        total = int(counts.sum())
        truncated = total > limit
        need = limit + 1 if truncated else total
        sols: list[tuple[int, int]] = []
        if need:
            for theta in np.nonzero(counts)[0]:
                tsynd = _syndrome_scalar(parities, int(theta), q)
                deltas = _enumerate_theta(
                    rows, rank_below, int(kvec[theta]), tsynd, need - len(sols)
                )
                sols.extend((int(theta), d) for d in deltas)
                if len(sols) >= need:
                    break
        return OracleResult(sols, truncated)

    def _count_all(self, slices, parities, rows, rank_below) -> np.ndarray:
        n, q = slices.num_vars, slices.aux_bits
        kvec = slices.slice_count
        total = 1 << n
        counts = np.zeros(total, dtype=np.int64)
        max_beta = int(kvec.max()).bit_length() - 1 if kvec.max() > 0 else -1
        # rows sorted by effective pivot (null rows participate everywhere)
        eff = [q if p is None else p for (_, _, p) in rows]
        order = sorted(range(len(rows)), key=lambda i: -eff[i])
        dmask_sorted = np.array([rows[i][0] for i in order], dtype=np.uint64)
        comb_sorted = np.array([rows[i][1] for i in order], dtype=np.uint64)
        eff_sorted = [eff[i] for i in order]
        chunk = 1 << 16
        for start in range(0, total, chunk):
            stop = min(start + chunk, total)
            kk = kvec[start:stop]
            if not kk.any():
                continue
            tpack = _syndromes_packed(parities, start, stop, q)
            if len(rows):
                tp = _parity_u64(comb_sorted[:, None] & tpack[None, :]).astype(np.uint8)
            for beta in range(max_beta, -1, -1):
                sel = ((kk >> beta) & 1).astype(bool)
                if not sel.any():
                    continue
                fixed = (kk & ~((1 << (beta + 1)) - 1)).astype(np.uint64)
                n_cond = 0
                while n_cond < len(rows) and eff_sorted[n_cond] >= beta:
                    n_cond += 1
                ok = sel
                if n_cond:
                    c2 = _parity_u64(
                        dmask_sorted[:n_cond, None] & fixed[None, :]
                    ).astype(np.uint8)
                    ok = sel & (c2 == tp[:n_cond]).all(axis=0)
                counts[start:stop][ok] += np.int64(1) << np.int64(beta - rank_below[beta])
        return counts


def _reduce_delta_system(dmasks: list[int], q: int):
    """Fully reduce the auxiliary-bit columns of the parity system.

    Returns ``(rows, rank_below)`` where each row is ``(dmask, comb, pivot)``
    — ``comb`` tracks which original constraints were combined and ``pivot``
    is the row's lowest set bit (None for rows with no auxiliary support) —
    and ``rank_below[beta]`` counts pivot columns strictly below ``beta``.
    """
    work = [[d, 1 << j] for j, d in enumerate(dmasks)]
    pivot_of_row: list[int | None] = [None] * len(work)
    for col in range(q):
        pr = None
        for i, (d, _) in enumerate(work):
            if pivot_of_row[i] is None and (d >> col) & 1:
                pr = i
                break
        if pr is None:
            continue
        pivot_of_row[pr] = col
        dp, cp = work[pr]
        for i, (d, c) in enumerate(work):
            if i != pr and (d >> col) & 1:
                work[i][0] = d ^ dp
                work[i][1] = c ^ cp
    rows = [(d, c, pivot_of_row[i]) for i, (d, c) in enumerate(work)]
    pivots = sorted(p for p in pivot_of_row if p is not None)
    rank_below = [0] * (q + 2)
    for beta in range(q + 2):
        rank_below[beta] = sum(1 for p in pivots if p < beta)
    return rows, rank_below


def _syndromes_packed(parities, start: int, stop: int, q: int) -> np.ndarray:
    """Per-assignment packed right-hand sides of the parity system after the
    model bits are substituted in."""
    theta = np.arange(start, stop, dtype=np.uint64)
    tpack = np.zeros(stop - start, dtype=np.uint64)
    for j, pc in enumerate(parities):
        tmask = np.uint64(pc.mask >> q)
        bit = _parity_u64(theta & tmask) ^ np.uint64(pc.parity)
        tpack |= bit << np.uint64(j)
    return tpack


def _syndrome_scalar(parities, theta: int, q: int) -> int:
    out = 0
    for j, pc in enumerate(parities):
        bit = ((pc.mask >> q) & theta).bit_count() & 1
        out |= (bit ^ pc.parity) << j
    return out


def _enumerate_theta(rows, rank_below, k: int, tsynd: int, max_needed: int) -> list[int]:
    """All admissible auxiliary values for one assignment, ascending, up to
    ``max_needed``."""
    if k <= 0 or max_needed <= 0:
        return []
    sols: list[int] = []
    max_beta = k.bit_length() - 1
    pivot_rows = [(d, c, p) for (d, c, p) in rows if p is not None]
    for beta in range(max_beta, -1, -1):
        if not (k >> beta) & 1:
            continue
        fixed = k & ~((1 << (beta + 1)) - 1)
        consistent = True
        for d, c, p in rows:
            if p is not None and p < beta:
                continue
            if ((d & fixed).bit_count() & 1) != ((c & tsynd).bit_count() & 1):
                consistent = False
                break
        if not consistent:
            continue
        free_cols = [
            col
            for col in range(beta)
            if not any(p == col for (_, _, p) in pivot_rows)
        ]
        block: list[int] = []
        for m in range(1 << len(free_cols)):
            delta = fixed
            for j, col in enumerate(free_cols):
                if (m >> j) & 1:
                    delta |= 1 << col
            for d, c, p in pivot_rows:
                if p >= beta:
                    continue
                rest = d & ~(1 << p)
                bit = ((rest & delta).bit_count() & 1) ^ ((c & tsynd).bit_count() & 1)
                if bit:
                    delta |= 1 << p
            block.append(delta)
        sols.extend(sorted(block))
        if len(sols) >= max_needed:
            return sols[:max_needed]
    return sols


def make_oracle(kind: str, **kwargs):
    if kind == "gf2":
        return GF2BranchOracle(**kwargs)
    if kind == "enumerate":
        return ExhaustiveOracle(**kwargs)
    raise ValueError(f"unknown oracle backend {kind!r} (use 'gf2' or 'enumerate')")


def oracle_solve(
    slices: SliceSet,
    parities: Sequence[ParityConstraint],
    limit: int,
    backend: str = "gf2",
) -> OracleResult:
    """Solve the slice-plus-parity system with the named backend."""
    return make_oracle(backend).solve(slices, parities, limit)


def oracle_request_text(
    slices: SliceSet,
    parities: Sequence[ParityConstraint],
    limit: int,
    max_slice_lines: int = 1024,
) -> str:
    """DIMACS-like dump of an oracle request for offline debugging.

    XOR clauses use ``x``-prefixed lines (a leading negated literal flips the
    target parity to 0); the slice predicate is emitted as comments.
    """
    n, q = slices.num_vars, slices.aux_bits
    lines = [
        f"c xor oracle request: model_bits={n} aux_bits={q} limit={limit}",
        f"c joint bit layout: bits 1..{q} auxiliary, bits {q + 1}..{q + n} model index",
        f"p cnf {n + q} {len(parities)}",
    ]
    for pc in parities:
        lits = [v + 1 for v in pc.variables()]
        if not lits:
            lines.append(f"c empty xor constraint with target {pc.parity}")
            continue
        if pc.parity == 0:
            lits[0] = -lits[0]
        lines.append("x " + " ".join(str(v) for v in lits) + " 0")
    emitted = 0
    for theta in np.nonzero(slices.slice_count)[0]:
        if emitted >= max_slice_lines:
            lines.append("c slice list truncated")
            break
        lines.append(f"c slice theta={int(theta)} k={int(slices.slice_count[theta])}")
        emitted += 1
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# The sampler


@dataclass(frozen=True)
class XorSamplerConfig:
    """Sampler parameters.

    ``kappa`` is the configured pivot-stage approximation constant; it is
    validated statistically, never derived.  The default makes
    ``rho * kappa = sqrt(2)``.  ``alpha`` is an opaque confidence knob kept
    for interface compatibility and is not interpreted.  ``constraint_count``
    pins the number of XOR constraints; when None it is calibrated once by
    binary search (smallest count whose survivors fit the pivot) and reused
    for every draw.
    """

    discretization: DiscretizationConfig = DiscretizationConfig()
    pivot: int = 100
    kappa: float | None = None
    quantization: int = 8
    max_attempts: int = 10_000
    seed: int | None = None
    alpha: float | None = None
    constraint_count: int | None = None
    oracle: str = "gf2"
    max_aux_bits: int = 40
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP

    def __post_init__(self):
        if self.pivot < 1:
            raise ValueError("pivot must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.oracle not in ("gf2", "enumerate"):
            raise ValueError(f"unknown oracle backend {self.oracle!r}")
        if self.constraint_count is not None and self.constraint_count < 0:
            raise ValueError("constraint_count must be >= 0")
        kappa = self.resolved_kappa
        if kappa < 1.0 - 1e-12:
            raise ValueError(f"kappa must be >= 1, got {kappa}")
        rk = self.rho_kappa
        if not (1.0 - 1e-9 <= rk <= math.sqrt(2.0) + 1e-9):
            raise ValueError(
                f"rho*kappa = {rk:.6f} outside [1, sqrt(2)]; adjust kappa or epsilon"
            )

    @property
    def resolved_kappa(self) -> float:
        if self.kappa is not None:
            return self.kappa
        return math.sqrt(2.0) / self.discretization.rho

    @property
    def rho_kappa(self) -> float:
        return self.discretization.rho * self.resolved_kappa


@dataclass(frozen=True)
class SampleResult:
    """Outcome of a single pivot draw; ``assignment`` is None on Failure."""

    assignment: np.ndarray | None
    attempts: int
    oracle_calls: int

    @property
    def success(self) -> bool:
        return self.assignment is not None


@dataclass
class BatchStats:
    successes: int = 0
    total_attempts: int = 0
    oracle_calls: int = 0

    @property
    def failures(self) -> int:
        return self.total_attempts - self.successes

    @property
    def success_rate(self) -> float:
        return self.successes / self.total_attempts if self.total_attempts else 0.0


class XorSampler:
    """Draws model assignments via the discretize / embed / pivot pipeline.

    Discretization, the slice embedding, and the calibrated constraint count
    are computed once on first use and reused across draws, so build one
    sampler per (model, config) pair and keep it.  A sampler instance is
    single-writer; concurrent use requires one instance per worker.
    """

    def __init__(self, graph: FactorGraph, config: XorSamplerConfig | None = None):
        self.graph = graph
        self.config = config or XorSamplerConfig()
        self._slices: SliceSet | None = None
        self._disc: DiscretizedWeights | None = None
        self._oracle = None
        self._num_constraints = self.config.constraint_count
        self.total_oracle_calls = 0

    @property
    def discretization(self) -> DiscretizedWeights:
        if self._disc is None:
            self._disc = discretize(
                self.graph, self.config.discretization, self.config.enumeration_cap
            )
        return self._disc

    @property
    def slices(self) -> SliceSet:
        if self._slices is None:
            self._slices = embed_slices(
                self.discretization,
                quantization=self.config.quantization,
                max_aux_bits=self.config.max_aux_bits,
            )
        return self._slices

    @property
    def num_constraints(self) -> int | None:
        return self._num_constraints

    def _backend(self):
        if self._oracle is None:
            if self.config.oracle == "gf2":
                self._oracle = GF2BranchOracle(self.config.enumeration_cap)
            else:
                self._oracle = ExhaustiveOracle()
        return self._oracle

    def _solve(self, parities, limit) -> OracleResult:
        self.total_oracle_calls += 1
        return self._backend().solve(self.slices, parities, limit)

    def _calibrate(self, rng) -> int:
        """Smallest constraint count whose survivors fit under the pivot,
        found by binary search on one probe draw per midpoint."""
        ss = self.slices
        width = ss.total_bits
        pivot = self.config.pivot
        lo, hi = 0, width
        while lo < hi:
            mid = (lo + hi) // 2
            res = self._solve(draw_parity_constraints(width, mid, rng), pivot)
            if res.truncated:
                lo = mid + 1
            else:
                hi = mid
        # probes are noisy; bump until the count is workable
        while lo < width:
            if any(
                not self._solve(draw_parity_constraints(width, lo, rng), pivot).truncated
                for _ in range(4)
            ):
                break
            lo += 1
        return lo

    def draw(self, rng) -> SampleResult:
        """One pivot attempt; Failure is a value, not an error."""
        calls_before = self.total_oracle_calls
        if self._num_constraints is None:
            self._num_constraints = self._calibrate(rng)
        ss = self.slices
        parities = draw_parity_constraints(ss.total_bits, self._num_constraints, rng)
        res = self._solve(parities, self.config.pivot)
        calls = self.total_oracle_calls - calls_before
        if res.truncated or not res.solutions:
            return SampleResult(None, 1, calls)
        # slot rule: every survivor occupies exactly one of the P slots, so a
        # uniform slot both accepts with probability count/P and picks uniformly
        slot = int(rng.integers(self.config.pivot))
        if slot >= len(res.solutions):
            return SampleResult(None, 1, calls)
        theta_index, _ = res.solutions[slot]
        bits = index_to_assignment(theta_index, self.graph.num_vars)
        return SampleResult(bits, 1, calls)

    def sample_batch(self, count: int, rng) -> tuple[np.ndarray, BatchStats]:
        """Draw until ``count`` successes; raises if any single success needs
        more than ``max_attempts`` attempts."""
        if count < 1:
            raise ValueError("count must be >= 1")
        stats = BatchStats()
        out = np.zeros((count, self.graph.num_vars), dtype=np.uint8)
        for i in range(count):
            for _ in range(self.config.max_attempts):
                res = self.draw(rng)
                stats.total_attempts += res.attempts
                stats.oracle_calls += res.oracle_calls
                if res.success:
                    stats.successes += 1
                    out[i] = res.assignment
                    break
            else:
                raise RuntimeError(
                    f"sample {i} still failing after {self.config.max_attempts} attempts; "
                    "pivot or constraint count is likely misconfigured"
                )
        return out, stats


def xor_sample(sampler: XorSampler, rng) -> SampleResult:
    """Single draw from a prepared sampler."""
    return sampler.draw(rng)


def sample_batch(sampler: XorSampler, count: int, rng) -> tuple[np.ndarray, BatchStats]:
    """Exactly ``count`` successful draws, in draw order, plus attempt stats."""
    return sampler.sample_batch(count, rng)
