"""Stochastic optimization loops: projected gradient descent with sampled
gradients (plain and accelerated schedules), the unconstrained fixed-step
baseline, a penalized dual-ascent variant for single-budget constraints, and
an augmented-Lagrangian primal-dual method for affine equality constraints.

Every run is a deterministic function of (problem, config, seed) and emits a
:class:`RunTrace` with per-iteration records and empirical diagnostics.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .baselines import BpConfig, GibbsConfig, bp_marginals, bp_sample, gibbs_sample
from .constraints import Box, ConstraintSet, EqualityAffine, NonnegHalfspace, project
from .factor_graph import FactorGraph, exact_probabilities, index_to_assignment
from .numerics import solve_spd
from .xor_sampling import XorSampler, XorSamplerConfig

__all__ = [
    "GradientEstimate",
    "ExactEstimator",
    "XorEstimator",
    "GibbsEstimator",
    "BpEstimator",
    "estimate_gradient",
    "PgdConfig",
    "SgdConfig",
    "PenaltyConfig",
    "AlConfig",
    "PiecewiseSchedule",
    "IterationRecord",
    "RunTrace",
    "pgd_step_size",
    "averaged_output",
    "xor_pgd",
    "xor_sgd",
    "xor_sgd_penalty",
    "primal_dual_al",
]


# ---------------------------------------------------------------------------
# Gradient estimators
#
# A problem is anything with ``model`` (FactorGraph), ``dim``,
# ``objective(x, theta_bits) -> float`` and ``gradient(x, theta_bits) -> array``.


@dataclass
class GradientEstimate:
    mean: np.ndarray
    attempts: int
    variance: float  # unbiased estimate of E ||g - gbar||^2 (nan if N < 2)
    obj_estimate: float


class ExactEstimator:
    """Enumerates the model once and returns the exact expected gradient."""

    def __init__(self, problem):
        self.problem = problem
        self._probs = exact_probabilities(problem.model)
        n = problem.model.num_vars
        self._assignments = [index_to_assignment(i, n) for i in range(1 << n)]

    def estimate(self, x: np.ndarray, rng=None) -> GradientEstimate:
        mean = np.zeros(self.problem.dim)
        obj = 0.0
        sq = 0.0
        for p, bits in zip(self._probs, self._assignments):
            g = np.asarray(self.problem.gradient(x, bits), dtype=float)
            mean += p * g
            sq += p * float(g @ g)
            obj += p * float(self.problem.objective(x, bits))
        variance = max(0.0, sq - float(mean @ mean))
        return GradientEstimate(mean, attempts=0, variance=variance, obj_estimate=obj)


class _SampleEstimator:
    """Shared averaging logic over a batch of sampled scenarios."""

    def __init__(self, problem, num_samples: int):
        if num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        self.problem = problem
        self.num_samples = num_samples

    def _draw(self, rng) -> tuple[np.ndarray, int]:
        raise NotImplementedError

    def estimate(self, x: np.ndarray, rng) -> GradientEstimate:
        thetas, attempts = self._draw(rng)
        grads = np.stack(
            [np.asarray(self.problem.gradient(x, t), dtype=float) for t in thetas]
        )
        objs = [float(self.problem.objective(x, t)) for t in thetas]
        mean = grads.mean(axis=0)
        if len(thetas) > 1:
            centered = grads - mean
            variance = float((centered * centered).sum()) / (len(thetas) - 1)
        else:
            variance = float("nan")
        if not np.all(np.isfinite(mean)):
            raise ValueError("non-finite gradient sample")
        return GradientEstimate(
            mean, attempts=attempts, variance=variance,
            obj_estimate=float(np.mean(objs)),
        )


class XorEstimator(_SampleEstimator):
    """Gradient samples from the parity-constraint sampler.

    The sampler (discretization, slices, calibrated constraint count) is
    built once and reused for every iteration of a run.
    """

    def __init__(self, problem, num_samples: int, sampler_config: XorSamplerConfig | None = None):
        super().__init__(problem, num_samples)
        self.sampler = XorSampler(problem.model, sampler_config or XorSamplerConfig())

    def _draw(self, rng):
        thetas, stats = self.sampler.sample_batch(self.num_samples, rng)
        return thetas, stats.total_attempts


class GibbsEstimator(_SampleEstimator):
    """Gradient samples from a fresh Gibbs chain per iteration."""

    def __init__(self, problem, num_samples: int, gibbs_config: GibbsConfig = GibbsConfig()):
        super().__init__(problem, num_samples)
        self.gibbs_config = gibbs_config

    def _draw(self, rng):
        thetas = gibbs_sample(self.problem.model, self.gibbs_config, self.num_samples, rng)
        return thetas, self.num_samples


class BpEstimator(_SampleEstimator):
    """Independent draws from cached loopy-BP beliefs."""

    def __init__(self, problem, num_samples: int, bp_config: BpConfig = BpConfig()):
        super().__init__(problem, num_samples)
        self._marginals = bp_marginals(problem.model, bp_config).marginals

    def _draw(self, rng):
        thetas = bp_sample(self._marginals, self.num_samples, rng)
        return thetas, self.num_samples


def estimate_gradient(estimator, x: np.ndarray, rng) -> tuple[np.ndarray, int]:
    """Mean gradient at ``x`` plus the sampler attempts it cost."""
    est = estimator.estimate(x, rng)
    return est.mean, est.attempts


# ---------------------------------------------------------------------------
# Schedules and configs


@dataclass(frozen=True)
class PiecewiseSchedule:
    """Step value ``initial`` divided by ``factor`` after each drop iteration."""

    initial: float
    drops: tuple[int, ...] = (50, 100)
    factor: float = 10.0

    def value(self, k: int) -> float:
        return self.initial / self.factor ** sum(1 for d in self.drops if k > d)


@dataclass(frozen=True)
class PgdConfig:
    """Projected-descent configuration.

    ``schedule`` fixes both the step rule and the averaging rule jointly:
    ``plain`` uses ``t_k = rho_kappa / (mu k)`` with a uniform average and
    ``improved`` uses ``t_k = 2 rho_kappa / (mu (k+1))`` with a
    ``k``-weighted average.  ``piecewise`` is the drop-based schedule used
    for baseline parity and pairs with a uniform average.
    """

    iterations: int
    mu: float
    rho_kappa: float = math.sqrt(2.0)
    schedule: str = "plain"
    mu_reg: float = 0.0
    piecewise: PiecewiseSchedule = PiecewiseSchedule(0.1)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
        if not (1.0 - 1e-9 <= self.rho_kappa <= math.sqrt(2.0) + 1e-9):
            raise ValueError(f"rho_kappa {self.rho_kappa} outside [1, sqrt(2)]")
        if self.schedule not in ("plain", "improved", "piecewise"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.mu_reg < 0.0:
            raise ValueError("mu_reg must be nonnegative")


@dataclass(frozen=True)
class SgdConfig:
    """Fixed-step unconstrained baseline.

    If ``smoothness`` is given the step is checked against the admissible
    bound ``(2 - rho_kappa^2) / (smoothness * rho_kappa)``; violations only
    warn, since published runs routinely exceed it.
    """

    iterations: int
    step: float
    rho_kappa: float = math.sqrt(2.0)
    smoothness: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step <= 0.0:
            raise ValueError("step must be positive")
        if self.smoothness is not None:
            bound = (2.0 - self.rho_kappa ** 2) / (self.smoothness * self.rho_kappa)
            if self.step > bound + 1e-12:
                warnings.warn(
                    f"step {self.step} exceeds the fixed-step bound {bound:.3g}",
                    stacklevel=2,
                )


@dataclass(frozen=True)
class PenaltyConfig:
    """Dual-ascent on the scalar budget multiplier with drop schedules."""

    iterations: int
    step: PiecewiseSchedule = PiecewiseSchedule(0.1, (50, 100))
    eta: PiecewiseSchedule = PiecewiseSchedule(10.0, (50, 100))
    multiplier0: float = 0.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.multiplier0 < 0.0:
            raise ValueError("multiplier0 must be nonnegative")


@dataclass(frozen=True)
class AlConfig:
    """Augmented-Lagrangian primal-dual parameters.

    The prox step decays as ``eta_k = domain_diameter / (grad_bound *
    sqrt(2k))``; ``tau`` is the dual-ball radius entering the reported
    residual diagnostic.
    """

    iterations: int
    beta: float
    tau: float = 1.0
    domain_diameter: float = 1.0
    grad_bound: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.beta <= 0.0:
            raise ValueError("penalty must be positive")
        if self.tau <= 0.0 or self.domain_diameter <= 0.0 or self.grad_bound <= 0.0:
            raise ValueError("tau, domain_diameter and grad_bound must be positive")

    def eta(self, k: int) -> float:
        return self.domain_diameter / (self.grad_bound * math.sqrt(2.0 * k))


def pgd_step_size(k: int, cfg: PgdConfig) -> float:
    """Step at iteration ``k >= 1`` under the config's schedule."""
    if k < 1:
        raise ValueError("iterations are 1-based")
    if cfg.schedule == "plain":
        return cfg.rho_kappa / (cfg.mu * k)
    if cfg.schedule == "improved":
        return 2.0 * cfg.rho_kappa / (cfg.mu * (k + 1))
    return cfg.piecewise.value(k)


def averaged_output(iterates: Sequence[np.ndarray], schedule: str) -> np.ndarray:
    """Schedule-matched average: uniform, or k-weighted for ``improved``."""
    xs = np.stack([np.asarray(x, dtype=float) for x in iterates])
    k_total = xs.shape[0]
    if schedule == "improved":
        w = np.arange(1, k_total + 1, dtype=float)
        return (w[:, None] * xs).sum(axis=0) * (2.0 / (k_total * (k_total + 1)))
    return xs.mean(axis=0)


# ---------------------------------------------------------------------------
# Traces


@dataclass
class IterationRecord:
    k: int
    step: float
    x: np.ndarray
    attempts: int
    violation: float
    obj_estimate: float


@dataclass
class RunTrace:
    method: str
    records: list[IterationRecord] = field(default_factory=list)
    x_out: np.ndarray | None = None
    sigma2_hat: float = float("nan")
    grad_norm2_hat: float = float("nan")
    multipliers: list = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def total_attempts(self) -> int:
        return sum(r.attempts for r in self.records)

    def satisfaction_rate(self, tol: float = 1e-8) -> float:
        if not self.records:
            return float("nan")
        good = sum(1 for r in self.records if r.violation <= tol)
        return good / len(self.records)

    def write_csv(self, path, config_hash: str = "") -> None:
        """Trace table: one row per iteration, config hash in a comment."""
        with open(path, "w") as fh:
            if config_hash:
                fh.write(f"# config {config_hash}\n")
            fh.write("k,t_k,feasibility_residual,obj_estimate,attempts\n")
            for r in self.records:
                fh.write(
                    f"{r.k},{r.step:.12g},{r.violation:.12g},"
                    f"{r.obj_estimate:.12g},{r.attempts}\n"
                )

    def summary(self) -> dict:
        return {
            "method": self.method,
            "iterations": len(self.records),
            "x_out": [float(v) for v in np.asarray(self.x_out).ravel()],
            "sigma2_hat": _json_float(self.sigma2_hat),
            "grad_norm2_hat": _json_float(self.grad_norm2_hat),
            "total_attempts": self.total_attempts,
            "satisfaction_rate": _json_float(self.satisfaction_rate()),
            "final_violation": _json_float(
                self.records[-1].violation if self.records else float("nan")
            ),
            "wall_time_s": self.wall_time_s,
        }


def _json_float(v: float):
    return None if v != v else float(v)


def _nanmax(current: float, candidate: float) -> float:
    if candidate != candidate:
        return current
    if current != current:
        return candidate
    return max(current, candidate)


# ---------------------------------------------------------------------------
# Optimizers


def xor_pgd(
    problem,
    estimator,
    constraint: ConstraintSet,
    cfg: PgdConfig,
    x0: np.ndarray,
    rng,
    deadline: float | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """Projected stochastic descent; every iterate stays feasible.

    One gradient batch per iteration, step per the config schedule, exact
    projection after each move, schedule-matched average as output.  If a
    ``deadline`` (perf_counter value) is given the loop stops early once it
    passes; such runs trade the trace-length contract for the time budget.
    """
    t_start = time.perf_counter()
    x = project(constraint, np.asarray(x0, dtype=float))
    trace = RunTrace(method=f"xor-pgd/{cfg.schedule}")
    iterates = [x]
    sigma2 = float("nan")
    gnorm2 = float("nan")
    for k in range(1, cfg.iterations):
        if deadline is not None and time.perf_counter() > deadline:
            break
        est = estimator.estimate(x, rng)
        step = pgd_step_size(k, cfg)
        grad = est.mean + cfg.mu_reg * x
        if not np.all(np.isfinite(grad)):
            raise ValueError(f"non-finite gradient at iteration {k}")
        trace.records.append(
            IterationRecord(k, step, x, est.attempts, constraint.violation(x), est.obj_estimate)
        )
        sigma2 = _nanmax(sigma2, est.variance)
        gnorm2 = _nanmax(gnorm2, float(est.mean @ est.mean))
        x = project(constraint, x - step * grad)
        iterates.append(x)
    trace.records.append(
        IterationRecord(
            cfg.iterations,
            pgd_step_size(cfg.iterations, cfg),
            x,
            0,
            constraint.violation(x),
            float("nan"),
        )
    )
    trace.x_out = averaged_output(iterates, cfg.schedule)
    trace.sigma2_hat = sigma2
    trace.grad_norm2_hat = gnorm2
    trace.wall_time_s = time.perf_counter() - t_start
    return trace.x_out, trace


def xor_sgd(
    problem,
    estimator,
    cfg: SgdConfig,
    x0: np.ndarray,
    rng,
    deadline: float | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """Fixed-step unconstrained baseline with uniform averaging."""
    t_start = time.perf_counter()
    x = np.asarray(x0, dtype=float)
    trace = RunTrace(method="xor-sgd")
    iterates = [x]
    sigma2 = float("nan")
    gnorm2 = float("nan")
    for k in range(1, cfg.iterations):
        if deadline is not None and time.perf_counter() > deadline:
            break
        est = estimator.estimate(x, rng)
        trace.records.append(
            IterationRecord(k, cfg.step, x, est.attempts, 0.0, est.obj_estimate)
        )
        sigma2 = _nanmax(sigma2, est.variance)
        gnorm2 = _nanmax(gnorm2, float(est.mean @ est.mean))
        x = x - cfg.step * est.mean
        iterates.append(x)
    trace.records.append(
        IterationRecord(cfg.iterations, cfg.step, x, 0, 0.0, float("nan"))
    )
    trace.x_out = averaged_output(iterates, "plain")
    trace.sigma2_hat = sigma2
    trace.grad_norm2_hat = gnorm2
    trace.wall_time_s = time.perf_counter() - t_start
    return trace.x_out, trace


def xor_sgd_penalty(
    problem,
    estimator,
    constraint: NonnegHalfspace,
    cfg: PenaltyConfig,
    x0: np.ndarray,
    rng,
    deadline: float | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """Min-max form of the budgeted problem via dual ascent on the scalar
    multiplier; iterates stay nonnegative but may violate the budget row."""
    if not isinstance(constraint, NonnegHalfspace):
        raise ValueError("penalty baseline needs a NonnegHalfspace constraint")
    t_start = time.perf_counter()
    x = np.maximum(np.asarray(x0, dtype=float), 0.0)
    mult = cfg.multiplier0
    w = constraint.weights
    trace = RunTrace(method="xor-sgd-penalty")
    iterates = [x]
    sigma2 = float("nan")
    gnorm2 = float("nan")
    for k in range(1, cfg.iterations):
        if deadline is not None and time.perf_counter() > deadline:
            break
        est = estimator.estimate(x, rng)
        step = cfg.step.value(k)
        eta = cfg.eta.value(k)
        trace.records.append(
            IterationRecord(k, step, x, est.attempts, constraint.violation(x), est.obj_estimate)
        )
        sigma2 = _nanmax(sigma2, est.variance)
        gnorm2 = _nanmax(gnorm2, float(est.mean @ est.mean))
        x = np.maximum(x - step * (est.mean + mult * w), 0.0)
        mult = max(0.0, mult + eta * (float(w @ x) - constraint.cap))
        trace.multipliers.append(mult)
        iterates.append(x)
    trace.records.append(
        IterationRecord(cfg.iterations, cfg.step.value(cfg.iterations), x, 0,
                        constraint.violation(x), float("nan"))
    )
    trace.x_out = averaged_output(iterates, "plain")
    trace.sigma2_hat = sigma2
    trace.grad_norm2_hat = gnorm2
    trace.wall_time_s = time.perf_counter() - t_start
    return trace.x_out, trace


def primal_dual_al(
    problem,
    constraint: EqualityAffine,
    cfg: AlConfig,
    estimator,
    x0: np.ndarray,
    rng,
    deadline: float | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """Augmented-Lagrangian primal-dual method for ``A x + b = 0``.

    Each step minimizes the linearized objective plus the quadratic penalty
    plus a prox term in closed form (one SPD solve in
    ``beta A'A + I/eta_k``), then ascends the multiplier by
    ``beta (A x + b)``.  The output is the uniform average of the iterates.
    """
    if not isinstance(constraint, EqualityAffine):
        raise ValueError("primal_dual_al needs an EqualityAffine constraint")
    t_start = time.perf_counter()
    a = constraint.a
    b = constraint.b
    ata = a.T @ a
    eye = np.eye(a.shape[1])
    x = np.asarray(x0, dtype=float)
    lam = np.zeros(a.shape[0])
    trace = RunTrace(method="al-primal-dual")
    iterates = []
    sigma2 = float("nan")
    gnorm2 = float("nan")
    for k in range(1, cfg.iterations + 1):
        if deadline is not None and time.perf_counter() > deadline:
            break
        eta = cfg.eta(k)
        est = estimator.estimate(x, rng)
        rhs = x / eta - est.mean - a.T @ lam - cfg.beta * (a.T @ b)
        x = solve_spd(cfg.beta * ata + eye / eta, rhs)
        lam = lam + cfg.beta * (a @ x + b)
        trace.records.append(
            IterationRecord(k, eta, x, est.attempts, constraint.violation(x), est.obj_estimate)
        )
        trace.multipliers.append(lam.copy())
        sigma2 = _nanmax(sigma2, est.variance)
        gnorm2 = _nanmax(gnorm2, float(est.mean @ est.mean))
        iterates.append(x)
    trace.x_out = averaged_output(iterates, "plain")
    trace.sigma2_hat = sigma2
    trace.grad_norm2_hat = gnorm2
    trace.wall_time_s = time.perf_counter() - t_start
    return trace.x_out, trace
