"""Finite-difference derivatives, evaluation batches and the worker pool."""
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levmarq.derivatives import (
    BLINDING_SENTINEL,
    BatchEvaluationError,
    BlindingPolicy,
    DerivativeError,
    diff_plan,
    evaluate_batch,
    fd_step,
    hessian_from_gradient,
    numeric_derivatives,
    numeric_gradient,
    numeric_hessian,
)
from levmarq.parallel import WorkerPool


def rosenbrock(x):
    return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2


def rosenbrock_grad(x):
    return np.array([
        -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
        200.0 * (x[1] - x[0] ** 2),
    ])


class Counter:
    """Thread-safe call counter around a callable."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0
        self._lock = threading.Lock()

    def __call__(self, x):
        with self._lock:
            self.calls += 1
        return self.fn(x)


class TestStep:
    @pytest.mark.parametrize("theta, expected", [
        (0.0, 1e-7), (1e-5, 1e-7), (1e-3, 1e-7), (2.0, 2e-4), (-50.0, 5e-3),
    ])
    def test_step_rule(self, theta, expected):
        assert fd_step(theta) == pytest.approx(expected, rel=1e-15)

    def test_plan_layout(self):
        plan = diff_plan([1.0, 2.0, 3.0])
        assert plan.n_points == 2 * 3 + 6
        np.testing.assert_allclose(plan.eval_points[0], [1.0 + 1e-4, 2.0, 3.0])
        np.testing.assert_allclose(plan.eval_points[3], [1.0 - 1e-4, 2.0, 3.0])
        assert plan.hessian_pairs[:3] == [(0, 0), (0, 1), (0, 2)]


class TestGradientHessian:
    def test_rosenbrock_gradient_at_standard_start(self):
        # hand-derived: (-215.6, -88)
        g = numeric_gradient(rosenbrock, [-1.2, 1.0])
        np.testing.assert_allclose(g, [-215.6, -88.0], rtol=1e-6)

    def test_rosenbrock_hessian_at_minimum(self):
        # hand-derived: [[802, -400], [-400, 200]]
        theta = np.array([1.0, 1.0])
        _, h, n, _ = numeric_derivatives(rosenbrock, theta, rosenbrock(theta))
        assert n == 2 * 2 + 3
        np.testing.assert_allclose(h.to_dense(), [[802.0, -400.0], [-400.0, 200.0]], rtol=1e-3)

    def test_numeric_hessian_matches_joint_pass(self):
        theta = np.array([0.3, -0.7])
        f0 = rosenbrock(theta)
        _, h_joint, _, _ = numeric_derivatives(rosenbrock, theta, f0)
        plan = diff_plan(theta)
        single = [rosenbrock(p) for p in plan.eval_points[:2]]
        h_alone = numeric_hessian(rosenbrock, theta, f0, single)
        np.testing.assert_array_equal(h_alone.data, h_joint.data)

    def test_hessian_from_gradient_is_symmetric(self):
        h = hessian_from_gradient(rosenbrock_grad, np.array([1.0, 1.0]))
        np.testing.assert_allclose(h.to_dense(), [[802.0, -400.0], [-400.0, 200.0]], rtol=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=6),
           st.integers(0, 2**32 - 1))
    def test_exact_on_quadratics(self, c, seed):
        # central differences are exact for quadratics up to rounding
        m = len(c)
        rng = np.random.default_rng(seed)
        b = rng.standard_normal((m, m))
        a = b.T @ b + np.eye(m)
        x0 = np.asarray(c)

        def q(x):
            return 0.5 * x @ a @ x + x.sum()

        g = numeric_gradient(q, x0)
        np.testing.assert_allclose(g, a @ x0 + 1.0, rtol=1e-5, atol=1e-5)


class TestEvaluationCounts:
    @pytest.mark.parametrize("m", [1, 3, 7])
    def test_numeric_pass(self, m):
        f = Counter(lambda x: float(np.sum(np.cos(x)) + x @ x))
        theta = np.linspace(-1, 1, m)
        *_, n = numeric_derivatives(f, theta, f(theta))[:3]
        assert f.calls - 1 == 2 * m + m * (m + 1) // 2 == n

    @pytest.mark.parametrize("m", [1, 3, 7])
    def test_gradient_pass(self, m):
        g = Counter(lambda x: 2.0 * x)
        hessian_from_gradient(g, np.ones(m))
        assert g.calls == 2 * m


class TestBlinding:
    @staticmethod
    def spiky(x):
        return np.inf if x[0] > 1.0 else float(x @ x)

    def test_sentinel_substituted(self):
        res = evaluate_batch(self.spiky, [[0.0, 0.0], [2.0, 0.0]], blinding=BlindingPolicy())
        np.testing.assert_array_equal(res.values, [0.0, BLINDING_SENTINEL])
        assert res.n_nonfinite == 1
        np.testing.assert_array_equal(res.blinded, [False, True])

    def test_unblinded_gradient_names_parameter(self):
        # only the backward bump of parameter 1 leaves the domain
        with np.errstate(invalid="ignore"), pytest.raises(DerivativeError) as info:
            numeric_gradient(lambda x: np.sqrt(x[1]) + x[0], [1.0, 0.0])
        assert info.value.index == 1

    def test_exception_names_indices(self):
        def boom(x):
            if x[0] > 0:
                raise RuntimeError("bad")
            return 0.0

        with pytest.raises(BatchEvaluationError) as info:
            evaluate_batch(boom, [[-1.0], [1.0], [2.0]])
        assert info.value.indices == [1, 2]


def _smooth(x):
    return float(np.sum(np.sin(x) * np.arange(1, x.size + 1)) + np.prod(np.cos(x)))


class TestPoolDeterminism:
    @pytest.mark.parametrize("backend", ["thread", "process"])
    @pytest.mark.parametrize("nproc", [2, 4, 8])
    def test_bitwise_identical_to_inline(self, backend, nproc):
        theta = np.linspace(-0.9, 1.3, 7)
        f0 = _smooth(theta)
        g1, h1, *_ = numeric_derivatives(_smooth, theta, f0)
        with WorkerPool(nproc, backend) as pool:
            g2, h2, *_ = numeric_derivatives(_smooth, theta, f0, pool)
        np.testing.assert_array_equal(g1, g2)
        np.testing.assert_array_equal(h1.data, h2.data)

    def test_pool_preserves_order(self):
        with WorkerPool(3, "process") as pool:
            assert pool.map(lambda v: v * v, list(range(20))) == [v * v for v in range(20)]

    @pytest.mark.parametrize("nproc, backend", [(0, "thread"), (2, "gpu"), (1.5, "thread")])
    def test_rejects_bad_configuration(self, nproc, backend):
        with pytest.raises(ValueError):
            WorkerPool(nproc, backend)
