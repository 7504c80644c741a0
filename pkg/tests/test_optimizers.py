import math

import numpy as np
import pytest

from xorpgd.constraints import Box, EqualityAffine, NonnegHalfspace
from xorpgd.factor_graph import Factor, FactorGraph, exact_probabilities
from xorpgd.optimizers import (
    AlConfig,
    BpEstimator,
    ExactEstimator,
    GibbsEstimator,
    PenaltyConfig,
    PgdConfig,
    PiecewiseSchedule,
    SgdConfig,
    XorEstimator,
    averaged_output,
    estimate_gradient,
    pgd_step_size,
    primal_dual_al,
    xor_pgd,
    xor_sgd,
    xor_sgd_penalty,
)
from xorpgd.problems import StochasticProblem, evaluate_objective_exact
from xorpgd.xor_sampling import XorSamplerConfig

from helpers import quadratic_scenario_problem, single_var, toy_bernoulli_problem


def quadratic_problem(dim):
    model = single_var(1.0, 1.0)
    return StochasticProblem(
        model=model,
        dim=dim,
        objective=lambda x, b: 0.5 * float(np.dot(x, x)),
        gradient=lambda x, b: np.asarray(x, dtype=float),
        name="quadratic",
    )


class TestSchedules:
    def test_plain_step(self):
        cfg = PgdConfig(iterations=10, mu=1.0, rho_kappa=math.sqrt(2.0))
        assert pgd_step_size(2, cfg) == pytest.approx(0.7071, abs=1e-4)

    def test_improved_step(self):
        cfg = PgdConfig(iterations=10, mu=2.0, rho_kappa=1.0, schedule="improved")
        assert pgd_step_size(1, cfg) == pytest.approx(0.5)

    def test_averages(self):
        xs = [np.array([1.0]), np.array([2.0]), np.array([3.0])]
        assert averaged_output(xs, "plain")[0] == pytest.approx(2.0)
        assert averaged_output(xs, "improved")[0] == pytest.approx(14.0 / 6.0)

    def test_piecewise_drops(self):
        sched = PiecewiseSchedule(10.0, (50, 100))
        assert sched.value(1) == 10.0
        assert sched.value(50) == 10.0
        assert sched.value(51) == 1.0
        assert sched.value(101) == pytest.approx(0.1)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PgdConfig(iterations=0, mu=1.0)
        with pytest.raises(ValueError):
            PgdConfig(iterations=5, mu=-1.0)
        with pytest.raises(ValueError):
            PgdConfig(iterations=5, mu=1.0, rho_kappa=2.0)
        with pytest.raises(ValueError):
            PgdConfig(iterations=5, mu=1.0, schedule="bogus")

    def test_sgd_step_bound_warns(self):
        with pytest.warns(UserWarning, match="bound"):
            SgdConfig(iterations=5, step=10.0, rho_kappa=1.2, smoothness=1.0)


class TestEstimators:
    def test_exact_gradient_toy(self):
        toy = toy_bernoulli_problem()
        est = ExactEstimator(toy)
        g = est.estimate(np.zeros(1), None)
        assert g.mean[0] == pytest.approx(-0.7)
        assert g.obj_estimate == pytest.approx(0.5 * 0.7)

    def test_estimate_gradient_wrapper(self):
        toy = toy_bernoulli_problem()
        g, attempts = estimate_gradient(ExactEstimator(toy), np.zeros(1), None)
        assert g[0] == pytest.approx(-0.7)
        assert attempts == 0

    def test_single_sample_equals_sample_gradient(self):
        toy = toy_bernoulli_problem()
        est = GibbsEstimator(toy, 1)
        rng = np.random.default_rng(0)
        g = est.estimate(np.array([0.3]), rng)
        assert g.mean[0] in (pytest.approx(0.3), pytest.approx(-0.7))

    def test_xor_estimator_sign_split_band(self):
        # one positive and one negative exact component; sampled means must
        # stay inside the constant-factor band around each
        model = FactorGraph(
            2, (Factor((0,), [2.0, 3.0]), Factor((1,), [7.0, 3.0]))
        )
        probs = exact_probabilities(model)
        marg = np.array([probs[2] + probs[3], probs[1] + probs[3]])
        x = np.array([0.2, 0.8])
        exact = x - marg
        assert exact[0] < 0 < exact[1]
        problem = quadratic_scenario_problem(model, np.ones(2))
        est = XorEstimator(problem, 8, XorSamplerConfig())
        rng = np.random.default_rng(5)
        means = np.mean([est.estimate(x, rng).mean for _ in range(1200)], axis=0)
        band = est.sampler.config.rho_kappa * est.sampler.slices.distortion_bound
        se = 3.0 * 1.0 / math.sqrt(1200 * 8)
        # negative component: mirrored band
        assert exact[0] * band - se <= means[0] <= exact[0] / band + se
        assert exact[1] / band - se <= means[1] <= exact[1] * band + se

    def test_bp_estimator_runs(self):
        toy = toy_bernoulli_problem()
        est = BpEstimator(toy, 4)
        g = est.estimate(np.array([0.5]), np.random.default_rng(2))
        assert np.isfinite(g.mean[0])


class TestXorPgd:
    def test_constrained_boundary_convergence(self):
        toy = toy_bernoulli_problem()
        est = ExactEstimator(toy)
        c = Box(-np.inf, 0.5)
        x_out, trace = xor_pgd(
            toy, est, c, PgdConfig(iterations=500, mu=1.0), np.array([0.3]),
            np.random.default_rng(0),
        )
        assert abs(x_out[0] - 0.5) <= 1e-3
        assert len(trace.records) == 500
        assert all(r.violation <= 1e-8 for r in trace.records)

    def test_unconstrained_mean_convergence(self):
        toy = toy_bernoulli_problem()
        x_out, _ = xor_pgd(
            toy, ExactEstimator(toy), Box(-np.inf, np.inf),
            PgdConfig(iterations=2000, mu=1.0), np.array([-2.0]),
            np.random.default_rng(0),
        )
        assert abs(x_out[0] - 0.7) <= 5e-3

    def test_single_iteration_returns_projected_start(self):
        toy = toy_bernoulli_problem()
        c = Box(-np.inf, 0.5)
        x_out, trace = xor_pgd(
            toy, ExactEstimator(toy), c, PgdConfig(iterations=1, mu=1.0),
            np.array([2.0]), np.random.default_rng(0),
        )
        assert x_out[0] == pytest.approx(0.5)
        assert len(trace.records) == 1

    def test_sampled_run_deterministic(self):
        toy = toy_bernoulli_problem()
        c = Box(-np.inf, 0.5)
        cfg = PgdConfig(iterations=40, mu=1.0)

        def run():
            est = XorEstimator(toy, 4, XorSamplerConfig())
            return xor_pgd(toy, est, c, cfg, np.array([0.1]),
                           np.random.default_rng(3))[0]

        assert run()[0] == pytest.approx(run()[0], abs=0)

    def test_trace_csv(self, tmp_path):
        toy = toy_bernoulli_problem()
        _, trace = xor_pgd(
            toy, ExactEstimator(toy), Box(-np.inf, 0.5),
            PgdConfig(iterations=5, mu=1.0), np.array([0.0]),
            np.random.default_rng(0),
        )
        path = tmp_path / "trace.csv"
        trace.write_csv(path, "deadbeef")
        lines = path.read_text().splitlines()
        assert lines[0] == "# config deadbeef"
        assert lines[1] == "k,t_k,feasibility_residual,obj_estimate,attempts"
        assert len(lines) == 2 + 5


class TestXorSgd:
    def test_fixed_step_quadratic(self):
        prob = quadratic_problem(2)
        x_out, trace = xor_sgd(
            prob, ExactEstimator(prob), SgdConfig(iterations=300, step=0.5),
            np.array([4.0, -2.0]), np.random.default_rng(0),
        )
        assert np.linalg.norm(x_out) <= 0.1


class TestPenalty:
    def test_budget_found_by_dual_ascent(self):
        # minimize 0.5||x - 5||^2 over x >= 0 with x1 + x2 <= 4
        model = single_var(1.0, 1.0)
        prob = StochasticProblem(
            model=model, dim=2,
            objective=lambda x, b: 0.5 * float(np.sum((np.asarray(x) - 5.0) ** 2)),
            gradient=lambda x, b: np.asarray(x, dtype=float) - 5.0,
            name="shift",
        )
        half = NonnegHalfspace(np.ones(2), 4.0)
        cfg = PenaltyConfig(400, PiecewiseSchedule(0.2, (100, 250)),
                            PiecewiseSchedule(1.0, (100, 250)))
        x_out, trace = xor_sgd_penalty(
            prob, ExactEstimator(prob), half, cfg, np.zeros(2),
            np.random.default_rng(0),
        )
        assert np.allclose(x_out, 2.0, atol=0.3)
        assert trace.multipliers[-1] > 0.0

    def test_requires_halfspace(self):
        prob = quadratic_problem(2)
        with pytest.raises(ValueError, match="NonnegHalfspace"):
            xor_sgd_penalty(prob, ExactEstimator(prob), Box(0, 1),
                            PenaltyConfig(5), np.zeros(2), np.random.default_rng(0))


class TestPrimalDualAl:
    def test_equality_constrained_quadratic(self):
        prob = quadratic_problem(2)
        eq = EqualityAffine(np.array([[1.0, 1.0]]), np.array([-1.0]))
        cfg = AlConfig(iterations=2000, beta=1.0, tau=1.0,
                       domain_diameter=2.0, grad_bound=2.0)
        xbar, trace = primal_dual_al(prob, eq, cfg, ExactEstimator(prob),
                                     np.zeros(2), np.random.default_rng(0))
        assert np.allclose(xbar, 0.5, atol=1e-2)
        assert eq.violation(xbar) <= 1e-2

    def test_feasible_optimum_stays_put(self):
        prob = quadratic_problem(2)
        eq = EqualityAffine(np.array([[1.0, -1.0]]), np.array([0.0]))
        cfg = AlConfig(iterations=50, beta=1.0, domain_diameter=1.0, grad_bound=1.0)
        xbar, _ = primal_dual_al(prob, eq, cfg, ExactEstimator(prob),
                                 np.zeros(2), np.random.default_rng(0))
        assert np.allclose(xbar, 0.0, atol=1e-12)

    def test_penalty_must_be_positive(self):
        with pytest.raises(ValueError, match="penalty must be positive"):
            AlConfig(iterations=10, beta=0.0)

    def test_requires_equality_constraint(self):
        prob = quadratic_problem(2)
        with pytest.raises(ValueError, match="EqualityAffine"):
            primal_dual_al(prob, Box(0, 1), AlConfig(iterations=5, beta=1.0),
                           ExactEstimator(prob), np.zeros(2),
                           np.random.default_rng(0))


class TestRateShapes:
    def test_plain_gap_shrinks_like_one_over_k(self):
        toy = toy_bernoulli_problem()
        c = Box(-np.inf, 0.5)
        opt = evaluate_objective_exact(toy, np.array([0.5]))
        rng = np.random.default_rng(0)
        for _ in range(5):
            x0 = np.array([float(rng.uniform(-2.0, 0.5))])
            gaps = {}
            for k_total in (100, 1000):
                x_out, _ = xor_pgd(toy, ExactEstimator(toy), c,
                                   PgdConfig(iterations=k_total, mu=1.0), x0,
                                   np.random.default_rng(1))
                gaps[k_total] = evaluate_objective_exact(toy, x_out) - opt
            assert gaps[1000] <= gaps[100] / 5.0 + 1e-12

    def test_improved_schedule_dominates_on_average(self):
        toy = toy_bernoulli_problem()
        c = Box(-np.inf, 0.5)
        opt = evaluate_objective_exact(toy, np.array([0.5]))
        finals = {"plain": [], "improved": []}
        for seed in range(8):
            for schedule in ("plain", "improved"):
                est = GibbsEstimator(toy, 10)
                cfg = PgdConfig(iterations=150, mu=1.0, schedule=schedule)
                x_out, _ = xor_pgd(toy, est, c, cfg, np.array([-1.5]),
                                   np.random.default_rng(seed))
                finals[schedule].append(evaluate_objective_exact(toy, x_out) - opt)
        assert np.mean(finals["improved"]) <= np.mean(finals["plain"]) + 1e-9
