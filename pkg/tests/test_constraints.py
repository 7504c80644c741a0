import numpy as np
import pytest

from xorpgd.constraints import Box, EqualityAffine, NonnegHalfspace, Polyhedron, project


class TestNonnegHalfspace:
    def setup_method(self):
        self.c = NonnegHalfspace(np.array([1.0, 1.0]), 4.0)

    def test_symmetric_overflow(self):
        assert np.allclose(self.c.project(np.array([3.0, 3.0])), [2.0, 2.0], atol=1e-10)

    def test_clip_only(self):
        assert np.allclose(self.c.project(np.array([-1.0, 1.0])), [0.0, 1.0], atol=1e-10)

    def test_kkt_with_nonnegativity_clip(self):
        assert np.allclose(self.c.project(np.array([5.0, 1.0])), [4.0, 0.0], atol=1e-10)

    def test_interior_untouched(self):
        x = np.array([1.0, 0.5])
        assert np.allclose(self.c.project(x), x)

    def test_zero_cap_projects_to_origin(self):
        c0 = NonnegHalfspace(np.array([2.0, 3.0]), 0.0)
        assert np.allclose(c0.project(np.array([5.0, -1.0])), 0.0)

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError):
            NonnegHalfspace(np.array([1.0, 0.0]), 1.0)

    def test_violation(self):
        assert self.c.violation(np.array([1.0, 1.0])) == 0.0
        assert self.c.violation(np.array([5.0, 0.0])) == pytest.approx(1.0)
        assert self.c.violation(np.array([-0.5, 0.0])) == pytest.approx(0.5)

    def test_projection_idempotent_and_feasible(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            d = int(rng.integers(1, 6))
            c = NonnegHalfspace(rng.uniform(0.2, 3.0, d), float(rng.uniform(0.5, 10.0)))
            x = rng.normal(0.0, 4.0, d)
            y = c.project(x)
            assert c.violation(y) <= 1e-8
            assert np.allclose(c.project(y), y, atol=1e-8)


class TestBox:
    def test_clip(self):
        b = Box(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
        assert np.allclose(b.project(np.array([-1.0, 5.0])), [0.0, 2.0])

    def test_infinite_bounds(self):
        b = Box(-np.inf, 0.5)
        assert b.project(np.array([3.0]))[0] == pytest.approx(0.5)
        assert b.project(np.array([-7.0]))[0] == pytest.approx(-7.0)

    def test_bad_bounds_rejected(self):
        with pytest.raises(ValueError):
            Box(np.array([1.0]), np.array([0.0]))


class TestPolyhedron:
    def test_matches_halfspace_on_simple_instance(self):
        # same feasible set expressed two ways
        a = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        b = np.array([4.0, 0.0, 0.0])
        poly = Polyhedron(a, b)
        half = NonnegHalfspace(np.array([1.0, 1.0]), 4.0)
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.normal(0.0, 3.0, 2)
            assert np.allclose(poly.project(x), half.project(x), atol=1e-6)

    def test_interior_point(self):
        poly = Polyhedron(np.array([[1.0, 0.0]]), np.array([1.0]))
        x = np.array([0.2, 7.0])
        assert np.allclose(poly.project(x), x)


class TestEqualityAffine:
    def test_projection_lands_on_plane(self):
        eq = EqualityAffine(np.array([[1.0, 1.0]]), np.array([-1.0]))
        y = eq.project(np.array([3.0, 3.0]))
        assert eq.violation(y) <= 1e-10
        assert np.allclose(y, [0.5, 0.5])

    def test_rank_deficient_rejected(self):
        with pytest.raises(ValueError, match="rank"):
            EqualityAffine(np.array([[1.0, 1.0], [2.0, 2.0]]), np.zeros(2))


class TestProjectionProperties:
    def test_nonexpansive(self):
        rng = np.random.default_rng(7)
        sets = [
            NonnegHalfspace(np.array([1.0, 2.0]), 3.0),
            Box(np.zeros(2), np.ones(2)),
            Polyhedron(np.array([[1.0, 1.0], [1.0, -1.0]]), np.array([1.0, 0.5])),
            EqualityAffine(np.array([[2.0, -1.0]]), np.array([0.3])),
        ]
        for c in sets:
            for _ in range(100):
                u = rng.normal(0.0, 3.0, 2)
                v = rng.normal(0.0, 3.0, 2)
                pu, pv = project(c, u), project(c, v)
                assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-9

    def test_grid_argmin_agreement_2d(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            c = NonnegHalfspace(rng.uniform(0.5, 2.0, 2), float(rng.uniform(1.0, 5.0)))
            span = c.cap / c.weights.min()
            grid = np.linspace(0.0, span, 400)
            xs, ys = np.meshgrid(grid, grid)
            pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
            feasible = pts[pts @ c.weights <= c.cap]
            x = c.project(rng.normal(0.0, 1.0, 2) + 0.5 * span)
            # perturb a feasible-ish query and compare against brute force
            q = x + rng.normal(0.0, 0.02 * span, 2)
            p = c.project(q)
            d = np.linalg.norm(feasible - q, axis=1)
            g = feasible[np.argmin(d)]
            pitch = np.sqrt(2.0) * (grid[1] - grid[0])
            assert np.linalg.norm(p - q) <= d.min() + 1e-9
            assert np.linalg.norm(p - g) <= pitch + 1e-9
