"""Binary Markov random fields with exact enumeration-based inference.

A model is a product of strictly positive potential tables over subsets of
binary variables.  All weight accumulation happens in natural-log space so
that instances with hundreds of large potentials stay finite; exact queries
(partition function, marginals, expectations) enumerate every assignment and
are capped at a configurable variable count.

Assignment indexing convention: assignment ``a`` maps to the integer whose
binary digits are ``a[0] a[1] ... a[n-1]`` read left to right, i.e. the last
variable is the fastest-changing bit.  Factor tables follow the same rule
over their scope (UAI convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DEFAULT_ENUMERATION_CAP",
    "UaiParseError",
    "EnumerationCapError",
    "Factor",
    "FactorGraph",
    "ExactInference",
    "assignment_to_index",
    "index_to_assignment",
    "load_uai",
    "to_uai",
    "weight",
    "log_weight",
    "log_weight_array",
    "partition_function",
    "log_partition_function",
    "exact_marginals",
    "exact_probabilities",
    "exact_expectation",
    "concatenate",
]

DEFAULT_ENUMERATION_CAP = 24

_CHUNK = 1 << 20  # assignments per enumeration block


class UaiParseError(ValueError):
    """Malformed UAI MARKOV input."""


class EnumerationCapError(ValueError):
    """Model has too many variables for exhaustive enumeration."""


def _check_cap(num_vars: int, cap: int) -> None:
    if num_vars > cap:
        raise EnumerationCapError(
            f"model has {num_vars} variables; enumeration is capped at {cap}"
        )


@dataclass(frozen=True)
class Factor:
    """Positive potential table over an ordered subset of binary variables.

    ``table[j]`` is the potential of the joint assignment whose bits, read
    along ``scope``, are the binary digits of ``j`` (last scope variable
    fastest).
    """

    scope: tuple[int, ...]
    table: np.ndarray
    log_table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        scope = tuple(int(v) for v in self.scope)
        table = np.array(self.table, dtype=float).reshape(-1)
        if not scope:
            raise ValueError("factor scope must be nonempty")
        if len(set(scope)) != len(scope):
            raise ValueError(f"duplicate variable in factor scope {scope}")
        if min(scope) < 0:
            raise ValueError(f"negative variable index in scope {scope}")
        if table.shape[0] != 2 ** len(scope):
            raise ValueError(
                f"table has {table.shape[0]} entries, expected {2 ** len(scope)}"
            )
        if not np.all(np.isfinite(table)) or np.any(table <= 0.0):
            raise ValueError("potential entries must be strictly positive and finite")
        table.setflags(write=False)
        log_table = np.log(table)
        log_table.setflags(write=False)
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "log_table", log_table)

    def value(self, bits: Sequence[int]) -> float:
        """Potential at a full model assignment."""
        idx = 0
        for v in self.scope:
            idx = (idx << 1) | int(bits[v])
        return float(self.table[idx])


@dataclass(frozen=True)
class FactorGraph:
    """Immutable binary MRF: ``w(a) = prod_f table_f(a restricted to scope)``."""

    num_vars: int
    factors: tuple[Factor, ...]
    var_factors: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.num_vars)
        if n < 1:
            raise ValueError("factor graph needs at least one variable")
        factors = tuple(self.factors)
        touching: list[list[int]] = [[] for _ in range(n)]
        for fi, f in enumerate(factors):
            if max(f.scope) >= n:
                raise ValueError(
                    f"factor scope {f.scope} references variable >= num_vars={n}"
                )
            for v in f.scope:
                touching[v].append(fi)
        object.__setattr__(self, "num_vars", n)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "var_factors", tuple(tuple(t) for t in touching))


@dataclass(frozen=True)
class ExactInference:
    """Partition function and per-variable marginals from full enumeration."""

    partition: float
    log_partition: float
    marginals: np.ndarray  # P(var = 1) per variable


def assignment_to_index(bits: Sequence[int]) -> int:
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    return idx


def index_to_assignment(idx: int, num_vars: int) -> np.ndarray:
    bits = np.zeros(num_vars, dtype=np.uint8)
    for v in range(num_vars):
        bits[v] = (idx >> (num_vars - 1 - v)) & 1
    return bits


def log_weight(fg: FactorGraph, bits: Sequence[int]) -> float:
    total = 0.0
    for f in fg.factors:
        idx = 0
        for v in f.scope:
            idx = (idx << 1) | int(bits[v])
        total += float(f.log_table[idx])
    return total


def weight(fg: FactorGraph, bits: Sequence[int]) -> float:
    """Unnormalized weight of an assignment (log-space product, exponentiated)."""
    if len(bits) != fg.num_vars:
        raise ValueError(f"assignment has {len(bits)} bits, expected {fg.num_vars}")
    return math.exp(log_weight(fg, bits))


def _factor_indices(f: Factor, idx: np.ndarray, num_vars: int) -> np.ndarray:
    """Table index of each global assignment index for one factor."""
    k = len(f.scope)
    out = np.zeros_like(idx)
    for j, v in enumerate(f.scope):
        out |= ((idx >> (num_vars - 1 - v)) & 1) << (k - 1 - j)
    return out


def log_weight_array(fg: FactorGraph, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Log-weights of all ``2**num_vars`` assignments, ordered by index."""
    _check_cap(fg.num_vars, cap)
    n = fg.num_vars
    total = 1 << n
    out = np.zeros(total, dtype=float)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        acc = np.zeros(idx.shape[0], dtype=float)
        for f in fg.factors:
            acc += f.log_table[_factor_indices(f, idx, n)]
        out[start : start + idx.shape[0]] = acc
    return out


def log_partition_function(fg: FactorGraph, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    lw = log_weight_array(fg, cap)
    m = float(lw.max())
    return m + math.log(float(np.exp(lw - m).sum()))


def partition_function(fg: FactorGraph, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Z = sum of all assignment weights.  May overflow to inf for extreme
    models; use :func:`log_partition_function` in that regime."""
    lz = log_partition_function(fg, cap)
    return math.exp(lz) if lz < 709.0 else math.inf


def exact_probabilities(fg: FactorGraph, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Normalized probability of every assignment, ordered by index."""
    lw = log_weight_array(fg, cap)
    lw = lw - lw.max()
    p = np.exp(lw)
    return p / p.sum()


def exact_marginals(fg: FactorGraph, cap: int = DEFAULT_ENUMERATION_CAP) -> ExactInference:
    n = fg.num_vars
    lw = log_weight_array(fg, cap)
    m = float(lw.max())
    scaled = np.exp(lw - m)
    z_scaled = float(scaled.sum())
    idx = np.arange(1 << n, dtype=np.int64)
    marg = np.zeros(n, dtype=float)
    for v in range(n):
        mask = ((idx >> (n - 1 - v)) & 1).astype(bool)
        marg[v] = float(scaled[mask].sum()) / z_scaled
    log_z = m + math.log(z_scaled)
    z = math.exp(log_z) if log_z < 709.0 else math.inf
    return ExactInference(partition=z, log_partition=log_z, marginals=marg)


def exact_expectation(
    fg: FactorGraph,
    h: Callable[[np.ndarray], float],
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """E_p[h] over the normalized model distribution, by full enumeration."""
    probs = exact_probabilities(fg, cap)
    n = fg.num_vars
    total = 0.0
    for i in range(probs.shape[0]):
        val = float(h(index_to_assignment(i, n)))
        if not math.isfinite(val):
            raise ValueError(f"h returned non-finite value {val} at assignment {i}")
        total += probs[i] * val
    return total


def concatenate(a: FactorGraph, b: FactorGraph) -> FactorGraph:
    """Variable-disjoint union: b's variables are shifted past a's."""
    shifted = [
        Factor(tuple(v + a.num_vars for v in f.scope), f.table) for f in b.factors
    ]
    return FactorGraph(a.num_vars + b.num_vars, tuple(a.factors) + tuple(shifted))


# ---------------------------------------------------------------------------
# UAI MARKOV interchange format (binary variables only)

def _tokenize(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.split():
            yield tok, lineno


class _TokenStream:
    def __init__(self, text: str):
        self._it = _tokenize(text)
        self.lineno = 0

    def next(self, what: str) -> str:
        try:
            tok, self.lineno = next(self._it)
        except StopIteration:
            raise UaiParseError(f"unexpected end of input while reading {what}")
        return tok

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise UaiParseError(f"line {self.lineno}: expected integer {what}, got {tok!r}")

    def next_float(self, what: str) -> float:
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise UaiParseError(f"line {self.lineno}: expected number {what}, got {tok!r}")

    def exhausted(self) -> bool:
        try:
            tok, lineno = next(self._it)
        except StopIteration:
            return True
        self.lineno = lineno
        self._trailing = tok
        return False


def load_uai(text) -> FactorGraph:
    """Parse a UAI MARKOV model restricted to binary variables.

    Whitespace-insensitive.  Raises :class:`UaiParseError` (with the line
    number of the offending token) on malformed input, non-binary
    cardinalities, or non-positive table entries.
    """
    if hasattr(text, "read"):
        text = text.read()
    ts = _TokenStream(text)
    header = ts.next("preamble")
    if header.upper() != "MARKOV":
        raise UaiParseError(f"line {ts.lineno}: expected MARKOV preamble, got {header!r}")
    n = ts.next_int("variable count")
    if n < 1:
        raise UaiParseError(f"line {ts.lineno}: need at least one variable")
    for v in range(n):
        card = ts.next_int(f"cardinality of variable {v}")
        if card != 2:
            raise UaiParseError(
                f"line {ts.lineno}: non-binary variable {v} (cardinality {card})"
            )
    m = ts.next_int("clique count")
    if m < 0:
        raise UaiParseError(f"line {ts.lineno}: negative clique count")
    scopes: list[tuple[int, ...]] = []
    for c in range(m):
        size = ts.next_int(f"size of clique {c}")
        if size < 1:
            raise UaiParseError(f"line {ts.lineno}: clique {c} has size {size}")
        scope = []
        for _ in range(size):
            v = ts.next_int(f"variable of clique {c}")
            if not (0 <= v < n):
                raise UaiParseError(f"line {ts.lineno}: variable {v} out of range")
            scope.append(v)
        if len(set(scope)) != len(scope):
            raise UaiParseError(f"line {ts.lineno}: duplicate variable in clique {c}")
        scopes.append(tuple(scope))
    factors = []
    for c, scope in enumerate(scopes):
        count = ts.next_int(f"table size of clique {c}")
        if count != 2 ** len(scope):
            raise UaiParseError(
                f"line {ts.lineno}: clique {c} table has {count} entries, "
                f"expected {2 ** len(scope)}"
            )
        vals = np.empty(count, dtype=float)
        for j in range(count):
            x = ts.next_float(f"table entry of clique {c}")
            if not math.isfinite(x) or x <= 0.0:
                raise UaiParseError(
                    f"line {ts.lineno}: non-positive table entry {x} in clique {c}"
                )
            vals[j] = x
        factors.append(Factor(scope, vals))
    if not ts.exhausted():
        raise UaiParseError(
            f"line {ts.lineno}: unexpected trailing token {ts._trailing!r}"
        )
    return FactorGraph(n, tuple(factors))


def to_uai(fg: FactorGraph) -> str:
    """Serialize a model back to UAI MARKOV text."""
    lines = ["MARKOV", str(fg.num_vars), " ".join("2" for _ in range(fg.num_vars))]
    lines.append(str(len(fg.factors)))
    for f in fg.factors:
        lines.append(f"{len(f.scope)} " + " ".join(str(v) for v in f.scope))
    for f in fg.factors:
        lines.append(str(f.table.shape[0]))
        lines.append(" ".join(f"{x:.17g}" for x in f.table))
    return "\n".join(lines) + "\n"
