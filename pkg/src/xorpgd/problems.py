"""Benchmark problems: stochastic inventory management and stochastic
network design, with objective/gradient callbacks, constraint sets, exact
objective evaluation, and seeded instance generators."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .constraints import NonnegHalfspace
from .factor_graph import (
    FactorGraph,
    Factor,
    exact_expectation,
    load_uai,
    to_uai,
)
from .numerics import solve_spd, trace_inverse

__all__ = [
    "StochasticProblem",
    "InventoryInstance",
    "NetworkInstance",
    "inventory_cost",
    "inventory_subgradient",
    "inventory_problem",
    "inventory_constraint",
    "commute_time",
    "commute_gradient",
    "surviving_connected",
    "network_problem",
    "network_constraint",
    "gen_inventory",
    "gen_network",
    "gen_mrf",
    "evaluate_objective_exact",
    "save_instance",
    "load_instance",
    "parse_edge_list",
    "NETWORK_KINDS",
]


@dataclass
class StochasticProblem:
    """Objective ``E_theta f(x, theta)`` with per-scenario callbacks.

    ``notes`` is a scratch dict the callbacks may update (e.g. counting
    degenerate scenarios); it is reporting-only state.
    """

    model: FactorGraph
    dim: int
    objective: Callable[[np.ndarray, np.ndarray], float]
    gradient: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "problem"
    notes: dict = field(default_factory=dict)


def evaluate_objective_exact(problem: StochasticProblem, x: np.ndarray) -> float:
    """Exact ``E_theta f(x, theta)`` by full enumeration of the scenario model."""
    x = np.asarray(x, dtype=float)
    return exact_expectation(problem.model, lambda bits: problem.objective(x, bits))


# ---------------------------------------------------------------------------
# Inventory management


@dataclass(frozen=True)
class InventoryInstance:
    """Single-season stocking problem with binary high/low demand per material.

    Scenario bit ``theta_i = 1`` selects the high demand for material ``i``.
    """

    order_cost: np.ndarray
    backorder_cost: np.ndarray
    holding_cost: np.ndarray
    storage: np.ndarray
    storage_cap: float
    demand_low: np.ndarray
    demand_high: np.ndarray
    model: FactorGraph

    def __post_init__(self):
        arrays = {}
        for name in ("order_cost", "backorder_cost", "holding_cost", "storage",
                     "demand_low", "demand_high"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 1 or not np.all(np.isfinite(a)) or np.any(a <= 0.0):
                raise ValueError(f"{name} must be a strictly positive vector")
            arrays[name] = a
        n = arrays["order_cost"].shape[0]
        for name, a in arrays.items():
            if a.shape[0] != n:
                raise ValueError("inventory cost vectors must share one length")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.backorder_cost < self.order_cost):
            raise ValueError("back-order cost must be >= order cost per material")
        if not (self.storage_cap > 0.0):
            raise ValueError("storage cap must be positive")
        if self.model.num_vars != n:
            raise ValueError("demand model must have one variable per material")

    @property
    def num_materials(self) -> int:
        return self.order_cost.shape[0]

    def demand(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.demand_low + theta * (self.demand_high - self.demand_low)


def inventory_cost(inst: InventoryInstance, x: np.ndarray, d: np.ndarray) -> float:
    """Order cost plus back-order and holding penalties for one demand vector."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("stock levels must be nonnegative")
    short = np.maximum(d - x, 0.0)
    excess = np.maximum(x - d, 0.0)
    return float(
        inst.order_cost @ x + inst.backorder_cost @ short + inst.holding_cost @ excess
    )


def inventory_subgradient(inst: InventoryInstance, x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Per-material subgradient; the kink at ``x_i = d_i`` contributes 0."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    return (
        inst.order_cost
        - inst.backorder_cost * (d > x)
        + inst.holding_cost * (x > d)
    )


def inventory_problem(inst: InventoryInstance) -> StochasticProblem:
    def objective(x, bits):
        return inventory_cost(inst, x, inst.demand(bits))

    def gradient(x, bits):
        return inventory_subgradient(inst, x, inst.demand(bits))

    return StochasticProblem(
        model=inst.model,
        dim=inst.num_materials,
        objective=objective,
        gradient=gradient,
        name="inventory",
    )


def inventory_constraint(inst: InventoryInstance, storage_pct: float = 100.0) -> NonnegHalfspace:
    if storage_pct < 0.0:
        raise ValueError("storage percentage must be nonnegative")
    return NonnegHalfspace(inst.storage, inst.storage_cap * storage_pct / 100.0)


# ---------------------------------------------------------------------------
# Network design


@dataclass(frozen=True)
class NetworkInstance:
    """Conductance-upgrade problem on an undirected graph under edge failures.

    Scenario bit ``theta_e = 1`` means edge ``e`` survives the disaster; the
    decision variable is the per-edge conductance increase.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    base_conductance: np.ndarray
    upgrade_cost: np.ndarray
    budget: float
    model: FactorGraph
    disconnection_penalty: float = 1e6

    def __post_init__(self):
        m = int(self.num_nodes)
        if m < 2:
            raise ValueError("need at least two nodes")
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        seen = set()
        for u, v in edges:
            if u == v or not (0 <= u < m and 0 <= v < m):
                raise ValueError(f"bad edge ({u}, {v})")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            seen.add(key)
        g0 = np.asarray(self.base_conductance, dtype=float)
        cost = np.asarray(self.upgrade_cost, dtype=float)
        if g0.shape != (len(edges),) or np.any(g0 < 0.0):
            raise ValueError("base conductance must be a nonnegative vector per edge")
        if cost.shape != (len(edges),) or np.any(cost <= 0.0):
            raise ValueError("upgrade cost must be strictly positive per edge")
        if not (self.budget > 0.0):
            raise ValueError("budget must be positive")
        if self.model.num_vars != len(edges):
            raise ValueError("failure model must have one variable per edge")
        if not _connected(m, edges, np.ones(len(edges))):
            raise ValueError("the fully intact graph must be connected")
        g0.setflags(write=False)
        cost.setflags(write=False)
        object.__setattr__(self, "num_nodes", m)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "base_conductance", g0)
        object.__setattr__(self, "upgrade_cost", cost)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def incidence(self) -> np.ndarray:
        """Signed node-edge incidence matrix (nodes x edges)."""
        b = np.zeros((self.num_nodes, self.num_edges))
        for e, (u, v) in enumerate(self.edges):
            b[u, e] = 1.0
            b[v, e] = -1.0
        return b


def _connected(num_nodes: int, edges, active: np.ndarray) -> bool:
    parent = list(range(num_nodes))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for e, (u, v) in enumerate(edges):
        if active[e]:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
    root = find(0)
    return all(find(i) == root for i in range(num_nodes))


def surviving_connected(inst: NetworkInstance, theta, g: np.ndarray | None = None) -> bool:
    """Whether the surviving positively-conducting edges connect the graph."""
    g = inst.base_conductance if g is None else np.asarray(g, dtype=float)
    active = (np.asarray(theta, dtype=float) > 0.5) & (g > 1e-12)
    return _connected(inst.num_nodes, inst.edges, active)


def _regularized_laplacian(inst: NetworkInstance, g: np.ndarray, theta: np.ndarray) -> np.ndarray:
    m = inst.num_nodes
    lap = np.zeros((m, m))
    for e, (u, v) in enumerate(inst.edges):
        w = float(theta[e]) * float(g[e])
        if w == 0.0:
            continue
        lap[u, u] += w
        lap[v, v] += w
        lap[u, v] -= w
        lap[v, u] -= w
    return lap + np.full((m, m), 1.0 / m)


def commute_time(inst: NetworkInstance, g: np.ndarray, theta) -> float:
    """Average pairwise commute time of the surviving weighted graph.

    ``4 (1.g) / (m-1) * (Tr (L + 11'/m)^-1 - 1)`` with the Laplacian built
    from surviving edges only; a disconnected surviving graph returns the
    configured penalty instead (the trace blows up there).
    """
    g = np.asarray(g, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(g < 0.0):
        raise ValueError("conductances must be nonnegative")
    if not surviving_connected(inst, theta, g):
        return inst.disconnection_penalty
    m = inst.num_nodes
    reg = _regularized_laplacian(inst, g, theta)
    return 4.0 * float(g.sum()) / (m - 1) * (trace_inverse(reg) - 1.0)


def commute_gradient(inst: NetworkInstance, g: np.ndarray, theta) -> np.ndarray:
    """Analytic gradient of the commute time in the conductances.

    Disconnected scenarios sit on the flat penalty plateau and return zeros.
    """
    g = np.asarray(g, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if not surviving_connected(inst, theta, g):
        return np.zeros(inst.num_edges)
    m = inst.num_nodes
    reg = _regularized_laplacian(inst, g, theta)
    minv_b = solve_spd(reg, inst.incidence())
    trace_inv = float(np.trace(solve_spd(reg, np.eye(m))))
    quad = np.einsum("ij,ij->j", minv_b, minv_b)  # b_e' M^-2 b_e per edge
    scale = 4.0 / (m - 1)
    return scale * (trace_inv - 1.0) - scale * float(g.sum()) * theta * quad


def network_problem(inst: NetworkInstance) -> StochasticProblem:
    """Decision variable is the conductance increase over the base values."""

    problem = StochasticProblem(
        model=inst.model,
        dim=inst.num_edges,
        objective=lambda x, bits: 0.0,
        gradient=lambda x, bits: np.zeros(inst.num_edges),
        name="network",
    )
    problem.notes["disconnected_samples"] = 0

    def objective(x, bits):
        return commute_time(inst, inst.base_conductance + np.asarray(x, dtype=float), bits)

    def gradient(x, bits):
        g = inst.base_conductance + np.asarray(x, dtype=float)
        if not surviving_connected(inst, bits, g):
            problem.notes["disconnected_samples"] += 1
            return np.zeros(inst.num_edges)
        return commute_gradient(inst, g, bits)

    problem.objective = objective
    problem.gradient = gradient
    return problem


def network_constraint(inst: NetworkInstance, budget_pct: float = 100.0) -> NonnegHalfspace:
    if budget_pct < 0.0:
        raise ValueError("budget percentage must be nonnegative")
    return NonnegHalfspace(inst.upgrade_cost, inst.budget * budget_pct / 100.0)


# ---------------------------------------------------------------------------
# Instance generators


def _open_unit(rng, size=None):
    # uniform on (0, 1]: flips the half-open side of random()
    return 1.0 - rng.random(size)


def gen_mrf(
    num_vars: int,
    rng,
    clique_range: tuple[int, int] | None = None,
    max_clique: int = 6,
) -> FactorGraph:
    """Clique-structured scenario model with heavy-tailed potential entries.

    Clique count is uniform on ``[n, 2n]`` (unless overridden), clique sizes
    uniform on ``[1, min(6, n)]``, and each table entry is
    ``v1 + v2 * v3`` with ``v1 ~ U(0,1)``, ``v2 ~ {0,1}``,
    ``v3 ~ U(10,1000)``.
    """
    lo, hi = clique_range if clique_range else (num_vars, 2 * num_vars)
    num_cliques = int(rng.integers(lo, hi + 1))
    factors = []
    for _ in range(num_cliques):
        size = int(rng.integers(1, min(max_clique, num_vars) + 1))
        scope = tuple(sorted(rng.choice(num_vars, size=size, replace=False).tolist()))
        v1 = _open_unit(rng, 2 ** size)
        v2 = rng.integers(0, 2, size=2 ** size)
        v3 = rng.uniform(10.0, 1000.0, size=2 ** size)
        factors.append(Factor(scope, v1 + v2 * v3))
    return FactorGraph(num_vars, tuple(factors))


def gen_inventory(num_materials: int, seed: int) -> InventoryInstance:
    """Seeded instance matching the published generation ranges.

    Costs: order in (0,5], holding in (0,10], back-order = order + (0,10];
    demands are two draws from (0,10] per material (low = smaller); storage
    per unit in (0,10]; cap ``5n``.
    """
    if num_materials < 1:
        raise ValueError("need at least one material")
    rng = np.random.default_rng(seed)
    n = num_materials
    c = 5.0 * _open_unit(rng, n)
    h = 10.0 * _open_unit(rng, n)
    b = c + 10.0 * _open_unit(rng, n)
    d1 = 10.0 * _open_unit(rng, n)
    d2 = 10.0 * _open_unit(rng, n)
    w = 10.0 * _open_unit(rng, n)
    model = gen_mrf(n, rng)
    return InventoryInstance(
        order_cost=c,
        backorder_cost=b,
        holding_cost=h,
        storage=w,
        storage_cap=5.0 * n,
        demand_low=np.minimum(d1, d2),
        demand_high=np.maximum(d1, d2),
        model=model,
    )


def _grid_edges(rows: int, cols: int) -> tuple[int, list[tuple[int, int]]]:
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return rows * cols, edges


def _two_community_edges(bridges: int) -> tuple[int, list[tuple[int, int]]]:
    # two 4-cliques joined by the requested number of bridge edges
    edges = []
    for base in (0, 4):
        for i in range(4):
            for j in range(i + 1, 4):
                edges.append((base + i, base + j))
    bridge_pairs = [(0, 4), (1, 5), (2, 6), (3, 7)]
    edges.extend(bridge_pairs[:bridges])
    return 8, edges


NETWORK_KINDS = ("grid", "weak", "strong", "ring")


def gen_network(kind: str, seed: int) -> NetworkInstance:
    """Seeded desk-scale network family.

    ``grid`` is a 3x3 lattice, ``weak``/``strong`` are two dense communities
    joined by 1 or 3 bridge edges, ``ring`` is an 8-cycle with two chords.
    Base conductances start at 1, upgrade costs are uniform on (0, 10), and
    the full budget is 1000.  The failure model biases each edge toward
    survival and adds correlation cliques over edge groups.
    """
    rng = np.random.default_rng(seed)
    if kind == "grid":
        m, edges = _grid_edges(3, 3)
    elif kind == "weak":
        m, edges = _two_community_edges(1)
    elif kind == "strong":
        m, edges = _two_community_edges(3)
    elif kind == "ring":
        m = 8
        edges = [(i, (i + 1) % 8) for i in range(8)] + [(0, 4), (2, 6)]
    else:
        raise ValueError(f"unknown network kind {kind!r}; choose from {NETWORK_KINDS}")
    ne = len(edges)
    cost = np.maximum(rng.uniform(0.0, 10.0, size=ne), 1e-6)
    factors = []
    for e in range(ne):
        survive_odds = rng.uniform(5.0, 20.0)
        factors.append(Factor((e,), np.array([1.0, survive_odds])))
    num_cliques = int(rng.integers(2, max(3, ne // 2) + 1))
    for _ in range(num_cliques):
        size = int(rng.integers(2, min(4, ne) + 1))
        scope = tuple(sorted(rng.choice(ne, size=size, replace=False).tolist()))
        v1 = _open_unit(rng, 2 ** size)
        v2 = rng.integers(0, 2, size=2 ** size)
        v3 = rng.uniform(10.0, 1000.0, size=2 ** size)
        factors.append(Factor(scope, v1 + v2 * v3))
    model = FactorGraph(ne, tuple(factors))
    return NetworkInstance(
        num_nodes=m,
        edges=tuple(edges),
        base_conductance=np.ones(ne),
        upgrade_cost=cost,
        budget=1000.0,
        model=model,
    )


# ---------------------------------------------------------------------------
# Serialization


def parse_edge_list(text: str):
    """Whitespace edge list ``u v cost base_conductance`` per line."""
    edges = []
    costs = []
    conductances = []
    max_node = -1
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 'u v cost conductance'")
        u, v = int(parts[0]), int(parts[1])
        edges.append((u, v))
        costs.append(float(parts[2]))
        conductances.append(float(parts[3]))
        max_node = max(max_node, u, v)
    return max_node + 1, edges, np.array(costs), np.array(conductances)


def save_instance(inst, json_path: str) -> None:
    """Write the instance as JSON plus a sibling ``.uai`` scenario model."""
    json_path = os.fspath(json_path)
    uai_name = os.path.splitext(os.path.basename(json_path))[0] + ".uai"
    uai_path = os.path.join(os.path.dirname(json_path) or ".", uai_name)
    if isinstance(inst, InventoryInstance):
        payload = {
            "type": "inventory",
            "order_cost": inst.order_cost.tolist(),
            "backorder_cost": inst.backorder_cost.tolist(),
            "holding_cost": inst.holding_cost.tolist(),
            "storage": inst.storage.tolist(),
            "storage_cap": inst.storage_cap,
            "demand_low": inst.demand_low.tolist(),
            "demand_high": inst.demand_high.tolist(),
            "uai_file": uai_name,
        }
    elif isinstance(inst, NetworkInstance):
        payload = {
            "type": "network",
            "num_nodes": inst.num_nodes,
            "edges": [list(e) for e in inst.edges],
            "base_conductance": inst.base_conductance.tolist(),
            "upgrade_cost": inst.upgrade_cost.tolist(),
            "budget": inst.budget,
            "disconnection_penalty": inst.disconnection_penalty,
            "uai_file": uai_name,
        }
    else:
        raise TypeError(f"cannot serialize {type(inst).__name__}")
    with open(uai_path, "w") as fh:
        fh.write(to_uai(inst.model))
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_instance(json_path: str):
    json_path = os.fspath(json_path)
    with open(json_path) as fh:
        payload = json.load(fh)
    base = os.path.dirname(json_path) or "."
    with open(os.path.join(base, payload["uai_file"])) as fh:
        model = load_uai(fh.read())
    kind = payload.get("type")
    if kind == "inventory":
        return InventoryInstance(
            order_cost=np.array(payload["order_cost"]),
            backorder_cost=np.array(payload["backorder_cost"]),
            holding_cost=np.array(payload["holding_cost"]),
            storage=np.array(payload["storage"]),
            storage_cap=float(payload["storage_cap"]),
            demand_low=np.array(payload["demand_low"]),
            demand_high=np.array(payload["demand_high"]),
            model=model,
        )
    if kind == "network":
        return NetworkInstance(
            num_nodes=int(payload["num_nodes"]),
            edges=tuple(tuple(e) for e in payload["edges"]),
            base_conductance=np.array(payload["base_conductance"]),
            upgrade_cost=np.array(payload["upgrade_cost"]),
            budget=float(payload["budget"]),
            model=model,
            disconnection_penalty=float(payload.get("disconnection_penalty", 1e6)),
        )
    raise ValueError(f"unknown instance type {kind!r}")
