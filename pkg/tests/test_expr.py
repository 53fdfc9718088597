"""Tests for the expression DSL, its derivative propagation, and JSON I/O."""

import numpy as np
import pytest

from qdcalc import (
    Abs,
    Add,
    Affine,
    Compose,
    Const,
    DimensionMismatchError,
    Max,
    Min,
    Mul,
    Neg,
    Scale,
    SchemaError,
    Smooth,
    Var,
    dini_convergence,
    dini_fd,
    dini_quotients,
    eval_expr,
    expr_from_json,
    expr_to_json,
    is_piecewise_linear,
    qd_at,
    qd_eval_dir,
)

from helpers import ROOT_KINDS, rand_instance, rooted_instance, unit_directions


def x1():
    return Var(1)


class TestEvaluate:
    def test_abs(self):
        np.testing.assert_allclose(eval_expr(Abs(x1()), [-3.0]), [3.0])

    def test_max_of_x_and_neg_x(self):
        e = Max([x1(), Neg(x1())])
        np.testing.assert_allclose(eval_expr(e, [2.0]), [2.0])

    def test_affine(self):
        e = Affine([[1.0, 1.0]], [1.0])
        np.testing.assert_allclose(eval_expr(e, [2.0, 3.0]), [6.0])

    def test_batch_evaluation(self):
        e = Abs(x1())
        pts = np.array([[-2.0], [0.5], [3.0]])
        np.testing.assert_allclose(eval_expr(e, pts), [[2.0], [0.5], [3.0]])

    def test_smooth_primitives(self):
        x = np.array([0.3, -0.7])
        for name, fn in (("sin", np.sin), ("cos", np.cos), ("exp", np.exp),
                         ("sqr", np.square), ("tanh", np.tanh)):
            np.testing.assert_allclose(eval_expr(Smooth(name, 2), x), fn(x))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            eval_expr(Abs(x1()), [1.0, 2.0])


class TestQdAt:
    def test_abs_at_origin(self):
        q = qd_at(Abs(x1()), [0.0])
        np.testing.assert_allclose(np.sort(q.subd.gens.ravel()), [-1.0, 1.0])
        np.testing.assert_allclose(q.supd.gens, [[[0.0]]])

    def test_planar_saddle(self):
        pick = lambda i: Affine(np.eye(2)[i][None, :], [0.0])
        e = Add([Abs(pick(0)), Neg(Abs(pick(1)))])
        q = qd_at(e, [0.0, 0.0])
        sub = sorted(map(tuple, q.subd.gens.reshape(-1, 2).tolist()))
        sup = sorted(map(tuple, q.supd.gens.reshape(-1, 2).tolist()))
        assert sub == [(-1.0, 0.0), (1.0, 0.0)]
        assert sup == [(0.0, -1.0), (0.0, 1.0)]

    def test_affine_is_linear_pair(self):
        A, b = np.array([[1.0, -2.0]]), np.array([0.3])
        q = qd_at(Affine(A, b), [0.7, 0.1])
        np.testing.assert_allclose(q.subd.gens, A[None, :, :])
        np.testing.assert_allclose(q.supd.gens, np.zeros((1, 1, 2)))

    def test_abs_of_smooth_branch(self):
        # Away from the kink the abs must reduce to the signed Jacobian.
        e = Abs(Smooth("sin", 1))
        q = qd_at(e, [np.pi / 4])
        h = np.array([1.0])
        np.testing.assert_allclose(qd_eval_dir(q, h), [np.cos(np.pi / 4)], atol=1e-12)
        q = qd_at(e, [-np.pi / 4])
        np.testing.assert_allclose(qd_eval_dir(q, h), [-np.cos(np.pi / 4)], atol=1e-12)

    def test_neg_negates_derivative(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            e, x = rand_instance(rng)
            qe, qn = qd_at(e, x), qd_at(Neg(e), x)
            for h in unit_directions(rng, e.in_dim, 20):
                np.testing.assert_allclose(qd_eval_dir(qn, h), -qd_eval_dir(qe, h),
                                           atol=1e-9)

    def test_deterministic_support_functions(self):
        rng = np.random.default_rng(18)
        for _ in range(20):
            e, x = rand_instance(rng)
            qa, qb = qd_at(e, x), qd_at(e, x)
            for h in unit_directions(rng, e.in_dim, 30):
                np.testing.assert_allclose(qd_eval_dir(qa, h), qd_eval_dir(qb, h),
                                           atol=1e-12)

    def test_point_shape_checked(self):
        with pytest.raises(DimensionMismatchError):
            qd_at(Abs(x1()), [[0.0], [1.0]])


class TestOracleAgreement:
    """Finite differences against the propagated pair, per root node kind.

    Smooth-capable instances must agree to 1e-5 relative; piecewise-linear
    ones to 1e-9 absolute.  Instances are pre-filtered for genericity and
    quotient-ladder convergence using function values only.
    """

    @pytest.mark.parametrize("kind", ROOT_KINDS)
    def test_kind_agreement(self, kind):
        rng = np.random.default_rng(9000 + ROOT_KINDS.index(kind))
        for _ in range(200):
            e, x, hs = rooted_instance(rng, kind)
            q = qd_at(e, x)
            pl = is_piecewise_linear(e)
            for h in hs:
                got = qd_eval_dir(q, h)
                fd = dini_fd(e, x, h)
                if pl:
                    np.testing.assert_allclose(got, fd, atol=1e-9)
                else:
                    assert np.max(np.abs(got - fd) / (1.0 + np.abs(fd))) <= 1e-5


class TestDiniFd:
    def test_abs_at_zero(self):
        got = dini_fd(Abs(x1()), [0.0], [1.0])
        np.testing.assert_allclose(got, [1.0], atol=1e-6)

    def test_square_at_one(self):
        got = dini_fd(Smooth("sqr", 1), [1.0], [1.0])
        np.testing.assert_allclose(got, [2.0], atol=1e-4)

    def test_max_kink(self):
        got = dini_fd(Max([x1(), Neg(x1())]), [0.0], [-1.0])
        np.testing.assert_allclose(got, [1.0], atol=1e-6)

    def test_quotient_rows_match_steps(self):
        q = dini_quotients(Smooth("sqr", 1), [1.0], [1.0], steps=[1e-1, 1e-2, 1e-3])
        # (1+t)^2 - 1) / t = 2 + t exactly.
        np.testing.assert_allclose(q.ravel(), [2.1, 2.01, 2.001], atol=1e-12)

    def test_convergence_diagnostic(self):
        gap = dini_convergence(Smooth("sqr", 1), [1.0], [1.0], steps=[1e-1, 1e-2, 1e-3])
        np.testing.assert_allclose(gap, 0.09, atol=1e-12)

    def test_steps_validation(self):
        e = Abs(x1())
        with pytest.raises(ValueError):
            dini_fd(e, [0.0], [1.0], steps=[1e-3])
        with pytest.raises(ValueError):
            dini_fd(e, [0.0], [1.0], steps=[1e-3, 1e-2])
        with pytest.raises(ValueError):
            dini_fd(e, [0.0], [1.0], steps=[1e-2, 0.0])


class TestPiecewiseLinearPredicate:
    def test_flags(self):
        assert is_piecewise_linear(Abs(x1()))
        assert is_piecewise_linear(Max([x1(), Neg(x1())]))
        assert not is_piecewise_linear(Smooth("sin", 1))
        assert not is_piecewise_linear(Mul(x1(), x1()))
        assert not is_piecewise_linear(Compose(Smooth("exp", 1), Abs(x1())))


class TestJsonRoundTrip:
    def test_all_kinds_round_trip(self):
        rng = np.random.default_rng(19)
        for kind in ROOT_KINDS:
            for _ in range(5):
                e, x, _ = rooted_instance(rng, kind, max_depth=2, directions=1)
                e2 = expr_from_json(expr_to_json(e))
                np.testing.assert_allclose(eval_expr(e2, x), eval_expr(e, x),
                                           atol=1e-15)
                qa, qb = qd_at(e, x), qd_at(e2, x)
                for h in unit_directions(rng, e.in_dim, 10):
                    np.testing.assert_allclose(qd_eval_dir(qa, h), qd_eval_dir(qb, h),
                                               atol=1e-12)

    def test_json_is_plain_data(self):
        import json
        e = Add([Abs(x1()), Affine([[2.0]], [0.5])])
        blob = json.dumps(expr_to_json(e))
        e2 = expr_from_json(json.loads(blob))
        np.testing.assert_allclose(eval_expr(e2, [1.5]), eval_expr(e, [1.5]))

    def test_unknown_op_rejected(self):
        with pytest.raises(SchemaError):
            expr_from_json({"op": "frobnicate", "n": 1})

    def test_missing_field_rejected(self):
        with pytest.raises(SchemaError):
            expr_from_json({"op": "abs"})

    def test_extra_field_rejected(self):
        with pytest.raises(SchemaError):
            expr_from_json({"op": "var", "n": 1, "bogus": 2})

    def test_non_dict_rejected(self):
        with pytest.raises(SchemaError):
            expr_from_json([1, 2, 3])

    def test_unknown_smooth_name_rejected(self):
        with pytest.raises(SchemaError):
            expr_from_json({"op": "smooth", "name": "gamma", "n": 1})


class TestConstructorValidation:
    def test_affine_shape(self):
        with pytest.raises(DimensionMismatchError):
            Affine([[1.0, 0.0]], [1.0, 2.0])

    def test_add_mixed_dims(self):
        with pytest.raises(DimensionMismatchError):
            Add([x1(), Var(2)])

    def test_scale_diag_length(self):
        with pytest.raises(DimensionMismatchError):
            Scale([1.0, 2.0], x1())

    def test_compose_chain(self):
        with pytest.raises(DimensionMismatchError):
            Compose(Var(2), Affine([[1.0]], [0.0]))

    def test_const_shape(self):
        e = Const([1.0, 2.0], 3)
        assert e.in_dim == 3 and e.out_dim == 2
