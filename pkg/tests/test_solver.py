"""Tests for the steepest-descent direction and the minimizer loop."""

import numpy as np
import pytest

from qdcalc import (
    Abs,
    Add,
    Affine,
    DimensionMismatchError,
    Max,
    Neg,
    SolverParams,
    Var,
    check_unconstrained,
    minimize,
    qd_at,
    qd_eval_dir,
    qd_linear,
    steepest_descent_direction,
)

from helpers import coercive_instance, convex_pl_instance, rand_instance


def pick2(i):
    return Affine(np.eye(2)[i][None, :], [0.0])


class TestDirection:
    def test_abs_at_kink_is_stationary(self):
        h, rate = steepest_descent_direction(qd_at(Abs(Var(1)), [0.0]))
        assert h is None and rate == 0.0

    def test_saddle_direction(self):
        q = qd_at(Add([Abs(pick2(0)), Neg(Abs(pick2(1)))]), [0.0, 0.0])
        h, rate = steepest_descent_direction(q)
        np.testing.assert_allclose(np.abs(h), [0.0, 1.0], atol=1e-9)
        np.testing.assert_allclose(rate, -1.0, atol=1e-9)

    def test_linear_slope(self):
        h, rate = steepest_descent_direction(qd_linear([[2.0]]))
        np.testing.assert_allclose(h, [-1.0], atol=1e-12)
        np.testing.assert_allclose(rate, -2.0, atol=1e-12)

    def test_rate_negative_when_nonstationary(self):
        rng = np.random.default_rng(32)
        nontrivial = 0
        for _ in range(150):
            e, x = rand_instance(rng, pl_only=True)
            if e.out_dim != 1:
                continue
            h, rate = steepest_descent_direction(qd_at(e, x))
            if h is None:
                continue
            nontrivial += 1
            assert rate < 0
            np.testing.assert_allclose(np.linalg.norm(h), 1.0, atol=1e-9)
            q = qd_at(e, x)
            np.testing.assert_allclose(qd_eval_dir(q, h)[0], rate, atol=1e-9)
        assert nontrivial >= 20

    def test_vector_pair_rejected(self):
        with pytest.raises(DimensionMismatchError):
            steepest_descent_direction(qd_linear(np.ones((2, 2))))


class TestMinimize:
    def test_abs_from_five(self):
        res = minimize(Abs(Var(1)), [5.0])
        assert res.status == "stationary"
        assert abs(res.x[0]) <= 1e-6
        assert res.value <= 1e-6

    def test_piecewise_v(self):
        res = minimize(Max([Affine([[1.0]], [0.0]), Affine([[-2.0]], [0.0])]), [1.0])
        assert res.status == "stationary"
        assert abs(res.x[0]) <= 1e-6

    def test_unbounded_linear_hits_iteration_cap(self):
        res = minimize(Affine([[1.0]], [0.0]), [0.0],
                       SolverParams(max_iters=40))
        assert res.status == "max_iters"
        vals = [r.value for r in res.trace]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_accepted_steps_strictly_decrease(self):
        rng = np.random.default_rng(33)
        for _ in range(10):
            n = int(rng.integers(1, 4))
            e = coercive_instance(rng, n)
            res = minimize(e, rng.uniform(-1, 1, size=n))
            vals = [r.value for r in res.trace]
            assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_convex_final_point_is_certified(self):
        rng = np.random.default_rng(34)
        for _ in range(15):
            n = int(rng.integers(1, 4))
            e = convex_pl_instance(rng, n)
            res = minimize(e, rng.uniform(-1, 1, size=n))
            assert res.status == "stationary"
            assert check_unconstrained(qd_at(e, res.x)).holds

    def test_trace_records_steps_and_distances(self):
        res = minimize(Abs(Var(1)), [2.0])
        assert res.iterations == len(res.trace) - 1
        for rec in res.trace[:-1]:
            assert rec.step is not None and rec.step > 0
            assert rec.descent_dist > 0
        assert res.trace[-1].step is None

    def test_callback_sees_every_iterate(self):
        seen = []
        minimize(Abs(Var(1)), [3.0], callback=lambda rec: seen.append(rec.value))
        assert len(seen) >= 2
        np.testing.assert_allclose(seen[0], 3.0)

    def test_result_to_dict(self):
        import json
        res = minimize(Abs(Var(1)), [1.0])
        blob = json.loads(json.dumps(res.to_dict()))
        assert blob["status"] == "stationary"
        assert len(blob["trace"]) == len(res.trace)

    def test_vector_objective_rejected(self):
        with pytest.raises(DimensionMismatchError):
            minimize(Var(2), [1.0, 1.0])

    def test_more_iterations_never_worse(self):
        e = Add([Abs(Affine([[1.0, 0.4]], [0.0])), Abs(Affine([[-0.3, 1.0]], [0.1]))])
        x0 = [1.3, -0.7]
        vals = []
        for cap in (1, 3, 10, 50):
            res = minimize(e, x0, SolverParams(max_iters=cap))
            vals.append(res.value)
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverParams(max_iters=0)
        with pytest.raises(ValueError):
            SolverParams(step_init=-1.0)
        with pytest.raises(ValueError):
            SolverParams(armijo_c=1.0)
        with pytest.raises(ValueError):
            SolverParams(shrink=0.0)
        with pytest.raises(ValueError):
            SolverParams(stop_dist=0.0)

    def test_defaults(self):
        p = SolverParams()
        assert p.max_iters == 500
        assert p.step_init == 1.0
        assert p.armijo_c == 1e-4
        assert p.shrink == 0.5
        assert p.stop_dist == 1e-8
