import numpy as np
import pytest
from scipy.optimize import rosen, rosen_der

from wdstfuse.lbfgs import minimize_lbfgs, strong_wolfe


def rosenbrock(x):
    return rosen(x), rosen_der(x)


class TestMinimize:
    def test_rosenbrock(self):
        res = minimize_lbfgs(rosenbrock, np.array([-1.2, 1.0]), max_iters=500, grad_tol=1e-8)
        assert res.status == "converged"
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-6)
        losses = [t["loss"] for t in res.trace]
        assert np.all(np.diff(losses) <= 0)
        assert res.trace[0]["iteration"] == 0 and res.trace[0]["line_search"] == "init"
        assert len(res.trace) == res.iterations + 1

    def test_quadratic_matches_solve(self, rng):
        a = rng.standard_normal((20, 20))
        q = a @ a.T + 20 * np.eye(20)
        b = rng.standard_normal(20)
        res = minimize_lbfgs(lambda x: (0.5 * x @ q @ x - b @ x, q @ x - b), np.zeros(20), grad_tol=1e-10)
        assert np.allclose(res.x, np.linalg.solve(q, b), atol=1e-8)

    def test_keeps_shape_and_info(self):
        def f(x):
            return float(np.sum(x**2)), 2 * x, {"tag": float(x.sum())}

        seen = []
        res = minimize_lbfgs(f, np.ones((2, 3)), callback=seen.append)
        assert res.x.shape == (2, 3)
        assert "tag" in res.trace[-1] and "tag" in res.info
        assert seen == res.trace

    def test_already_optimal(self):
        res = minimize_lbfgs(lambda x: (float(x @ x), 2 * x), np.zeros(3))
        assert res.status == "converged" and res.iterations == 0

    def test_iteration_cap(self):
        res = minimize_lbfgs(rosenbrock, np.array([-1.2, 1.0]), max_iters=3)
        assert res.status == "max_iters" and res.iterations == 3

    def test_line_search_failure_returns_best(self):
        # gradient points the wrong way: no step can decrease f
        def bad(x):
            return float(x @ x), -2 * x

        res = minimize_lbfgs(bad, np.array([1.0, 2.0]))
        assert res.status == "line_search_failed" and res.warning
        assert np.array_equal(res.x, [1.0, 2.0])


class TestStrongWolfe:
    def test_conditions_hold(self):
        def phi(a):
            x = np.array([-1.2, 1.0]) + a * np.array([1.0, 0.5])
            return rosen(x), rosen_der(x) @ np.array([1.0, 0.5]), None

        f0, d0, _ = phi(0.0)
        assert d0 < 0
        step, f, _, _ = strong_wolfe(phi, f0, d0, 1.0)
        _, d, _ = phi(step)
        assert f <= f0 + 1e-4 * step * d0
        assert abs(d) <= 0.9 * abs(d0)
