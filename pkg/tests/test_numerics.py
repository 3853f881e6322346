import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bifurnet.errors import ConvergenceError, DimensionError, SingularMatrixError
from bifurnet.numerics import (
    batched_smallest_singular,
    central_diff,
    default_step,
    newton_solve,
    numeric_gradient,
    numeric_jacobian,
    smallest_singular,
    solve_linear,
)


def test_smallest_singular_diagonal():
    s, v = smallest_singular(np.diag([3.0, 0.5, 2.0]))
    assert s == pytest.approx(0.5)
    assert np.allclose(v, [0.0, 1.0, 0.0])


def test_smallest_singular_rank_deficient():
    m = np.array([[1.0, 2.0], [2.0, 4.0]])
    s, v = smallest_singular(m)
    assert s < 1e-14
    assert np.linalg.norm(m @ v) < 1e-14


def test_smallest_singular_sign_is_fixed():
    m = np.array([[2.0, 1.0], [1.0, 3.0]])
    _, v1 = smallest_singular(m)
    _, v2 = smallest_singular(-m)
    assert np.allclose(v1, v2)
    assert v1[np.argmax(np.abs(v1))] > 0


def test_smallest_singular_rejects_bad_input():
    with pytest.raises(DimensionError):
        smallest_singular(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        smallest_singular([[np.nan, 0.0], [0.0, 1.0]])


def test_batched_matches_single(rng):
    ms = rng.normal(size=(6, 4, 4))
    s, v = batched_smallest_singular(ms)
    for k in range(6):
        s1, v1 = smallest_singular(ms[k])
        assert s[k] == pytest.approx(s1)
        assert np.allclose(v[k], v1)


def test_solve_linear_and_singular():
    m = np.array([[4.0, 1.0], [2.0, 3.0]])
    x = solve_linear(m, [1.0, 2.0])
    assert np.allclose(m @ x, [1.0, 2.0])
    with pytest.raises(SingularMatrixError):
        solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])
    with pytest.raises(DimensionError):
        solve_linear(m, [1.0, 2.0, 3.0])


def test_newton_sqrt2():
    hist = []
    x = newton_solve(lambda x: x**2 - 2.0, lambda x: np.array([[2.0 * x[0]]]), [1.0], history=hist)
    assert x[0] == pytest.approx(np.sqrt(2.0), abs=1e-10)
    assert hist[-1] <= 1e-10
    # quadratic convergence: the residual at least squares each step near the root
    assert len(hist) <= 7


def test_newton_failure_carries_state():
    with pytest.raises(ConvergenceError) as info:
        newton_solve(lambda x: x**2 + 1.0, lambda x: np.array([[2.0 * x[0]]]), [0.5], max_iter=8)
    assert info.value.x is not None
    assert info.value.residual_norm >= 1.0


def test_newton_singular_jacobian_is_a_convergence_error():
    with pytest.raises(ConvergenceError):
        newton_solve(lambda x: x**3 - 1.0, lambda x: np.array([[3.0 * x[0] ** 2]]), [0.0])


def test_newton_system():
    def f(x):
        return np.array([x[0] ** 2 + x[1] ** 2 - 1.0, x[0] - x[1]])

    def j(x):
        return np.array([[2 * x[0], 2 * x[1]], [1.0, -1.0]])

    x = newton_solve(f, j, [1.0, 0.2])
    assert np.allclose(x, [np.sqrt(0.5)] * 2)


def test_default_step():
    assert default_step(0.0) == 1e-5
    assert default_step(-300.0) == pytest.approx(3e-3)


def test_central_diff_exact_on_quadratics():
    f = lambda x: 3 * x[0] ** 2 + x[0] * x[1]
    assert central_diff(f, [2.0, 5.0], 0) == pytest.approx(17.0, rel=1e-9)
    assert central_diff(f, [2.0, 5.0], 1) == pytest.approx(2.0, rel=1e-9)


def test_central_diff_nonfinite():
    with pytest.raises(FloatingPointError), np.errstate(invalid="ignore", divide="ignore"):
        central_diff(lambda x: np.log(x[0]), [0.0], 0)


def test_numeric_jacobian_shape():
    j = numeric_jacobian(lambda x: np.array([x[0] * x[1], np.sin(x[0]), x[1]]), [0.3, 2.0])
    assert j.shape == (3, 2)
    assert np.allclose(j, [[2.0, 0.3], [np.cos(0.3), 0.0], [0.0, 1.0]], atol=1e-8)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_numeric_gradient_of_cubic(xs):
    f = lambda x: np.sum(x**3)
    g = numeric_gradient(f, xs)
    assert np.allclose(g, 3 * np.asarray(xs) ** 2, atol=1e-7)
