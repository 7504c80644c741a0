"""Shared builders for the test suite."""

import numpy as np

from xorpgd.factor_graph import Factor, FactorGraph
from xorpgd.problems import StochasticProblem


def single_var(p0: float, p1: float) -> FactorGraph:
    return FactorGraph(1, (Factor((0,), np.array([p0, p1])),))


def pairwise(table) -> FactorGraph:
    return FactorGraph(2, (Factor((0, 1), np.asarray(table, dtype=float).reshape(-1)),))


def uniform_model(num_vars: int) -> FactorGraph:
    return FactorGraph(
        num_vars, (Factor(tuple(range(num_vars)), np.ones(2 ** num_vars)),)
    )


def random_factor_graph(rng, num_vars: int, spread: float = 2.0,
                        max_scope: int = 3) -> FactorGraph:
    """Random positive-table model with log-uniform entries."""
    num_factors = int(rng.integers(1, 2 * num_vars + 1))
    factors = []
    for _ in range(num_factors):
        size = int(rng.integers(1, min(max_scope, num_vars) + 1))
        scope = tuple(sorted(rng.choice(num_vars, size=size, replace=False).tolist()))
        table = np.exp(rng.uniform(-spread, spread, size=2 ** size))
        factors.append(Factor(scope, table))
    return FactorGraph(num_vars, tuple(factors))


def random_tree_graph(rng, num_vars: int, spread: float = 1.5) -> FactorGraph:
    """Random tree-structured model (unary roots plus parent-child tables)."""
    factors = [Factor((0,), np.exp(rng.uniform(-spread, spread, size=2)))]
    for v in range(1, num_vars):
        parent = int(rng.integers(0, v))
        table = np.exp(rng.uniform(-spread, spread, size=4))
        factors.append(Factor((parent, v), table))
    return FactorGraph(num_vars, tuple(factors))


def quadratic_scenario_problem(model: FactorGraph, targets: np.ndarray) -> StochasticProblem:
    """f(x, theta) = 0.5 ||x - targets(theta)||^2 with per-scenario targets.

    ``targets`` maps each variable's bit to a coordinate displacement:
    target vector is ``targets * theta`` elementwise.
    """
    targets = np.asarray(targets, dtype=float)

    def objective(x, bits):
        t = targets * np.asarray(bits, dtype=float)
        d = np.asarray(x, dtype=float) - t
        return 0.5 * float(d @ d)

    def gradient(x, bits):
        t = targets * np.asarray(bits, dtype=float)
        return np.asarray(x, dtype=float) - t

    return StochasticProblem(
        model=model, dim=targets.shape[0], objective=objective,
        gradient=gradient, name="toy-quadratic",
    )


def toy_bernoulli_problem() -> StochasticProblem:
    """Scalar toy: f(x, theta) = 0.5 (x - theta)^2 with p(theta=1) = 0.7."""
    model = single_var(3.0, 7.0)
    return quadratic_scenario_problem(model, np.array([1.0]))
