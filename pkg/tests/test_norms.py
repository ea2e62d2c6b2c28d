import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lwelasto.assembly import MaterialParams
from lwelasto.mesh import BoxDomain, build_box_mesh
from lwelasto.norms import (
    ErrorSeries, a_norm, convergence_order, field_difference_norm, is_nested, l2_vector_norm,
    least_squares_order, max_in_time, prolong, prolongation,
)
from lwelasto.space import build_space, evaluate_field, interpolate


def _space(n, d, lo=(0, 0, 0), hi=(1, 1, 1)):
    return build_space(build_box_mesh(BoxDomain(lo, hi, (n, n, n))), d)


def test_l2_norm_against_monte_carlo(rng):
    V = _space(2, 3)
    u = rng.standard_normal(3 * V.num_dofs)
    pts = rng.uniform(0, 1, (200_000, 3))
    mc = math.sqrt(np.mean(np.sum(evaluate_field(V, u, pts) ** 2, axis=1)))
    assert math.isclose(l2_vector_norm(V, u), mc, rel_tol=0.01)


def test_l2_norm_of_bubble_interpolant():
    V = _space(3, 4)
    u = interpolate(V, lambda p: np.prod(np.sin(np.pi * p), axis=1))
    # int sin^2(pi x) sin^2(pi y) sin^2(pi z) = 1/8
    assert math.isclose(l2_vector_norm(V, u), math.sqrt(1 / 8), rel_tol=1e-3)


def test_a_norm_sign_and_warning():
    V = _space(2, 1)
    u = interpolate(V, lambda p: np.column_stack([p[:, 1], 0 * p[:, 0], 0 * p[:, 0]]))
    assert math.isclose(a_norm(V, u, MaterialParams(1, 1, 1)), math.sqrt(2))
    bad = MaterialParams.from_engineering(2.5, 1.0, 1.0)
    with pytest.warns(UserWarning):
        assert a_norm(V, u, bad) < 0


def test_max_in_time():
    assert max_in_time([1.0, 3.0, 2.0]) == 3.0
    with pytest.raises(ValueError):
        max_in_time([])


@given(st.floats(0.5, 6.0), st.floats(1e-8, 1.0))
@settings(max_examples=30)
def test_order_recovers_power_law(p, c):
    r = [3.0 ** -1, 3.0 ** -2, 3.0 ** -3]
    errs = [c * h ** p for h in r]
    s = ErrorSeries("h", r, errs, errs)
    assert s.orders()[0] is None
    assert all(abs(o - p) < 1e-9 for o in s.orders()[1:])
    assert abs(s.fitted_order() - p) < 1e-9


def test_order_undefined_for_zero_error():
    assert convergence_order(1e-3, 0.0) is None
    assert least_squares_order([1.0], [1.0]) is None


def test_error_series_validation():
    with pytest.raises(ValueError):
        ErrorSeries("k", [0.1, 0.2], [1, 1], [1, 1])
    with pytest.raises(ValueError):
        ErrorSeries("k", [0.2, 0.1], [-1, 1], [1, 1])


def test_prolongation_is_exact_embedding(rng):
    coarse = _space(1, 2, hi=(1 / 3,) * 3)
    fine = _space(3, 2, hi=(1 / 3,) * 3)
    assert is_nested(fine, coarse) and not is_nested(coarse, fine)
    u = rng.standard_normal(3 * coarse.num_dofs)
    v = prolong(prolongation(fine, coarse), u)
    pts = rng.uniform(0, 1 / 3, (300, 3))
    assert np.allclose(evaluate_field(fine, v, pts), evaluate_field(coarse, u, pts), atol=1e-12)


def test_field_difference_norm(rng):
    a = _space(1, 2)
    b = _space(3, 1)
    ua = rng.standard_normal(3 * a.num_dofs)
    ub = rng.standard_normal(3 * b.num_dofs)
    d1 = field_difference_norm(a, ua, b, ub)
    d2 = field_difference_norm(b, ub, a, ua)
    assert math.isclose(d1, d2, rel_tol=1e-12)
    assert field_difference_norm(a, ua, a, ua) == 0.0
    # a coarse field compared with its own exact embedding
    fine = _space(3, 2)
    assert field_difference_norm(fine, prolong(prolongation(fine, a), ua), a, ua) < 1e-12
    with pytest.raises(ValueError):
        field_difference_norm(a, ua, _space(1, 2, hi=(2, 2, 2)), ua)
