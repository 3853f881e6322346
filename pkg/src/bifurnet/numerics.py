"""Dense linear algebra helpers, Newton's method and central differences.

Matrices here are small (at most a few dozen rows), so everything is dense
and delegated to LAPACK through numpy/scipy where possible.
"""

import warnings

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DimensionError, SingularMatrixError

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
SINGULAR_PIVOT_RTOL = 1e-12


def as_vector(x, name="vector"):
    """Return ``x`` as a finite 1-d float array."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite entries")
    return arr


def as_square(m, name="matrix"):
    arr = np.atleast_2d(np.asarray(m, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite entries")
    return arr


def smallest_singular(m):
    """Smallest singular value of a square matrix and its right singular vector.

    Parameters
    ----------
    m : array_like, shape (n, n)

    Returns
    -------
    sigma_min : float
    right_vector : ndarray, shape (n,)
        Unit vector with ``||m @ right_vector|| == sigma_min``.
    """
    m = as_square(m)
    _, s, vt = np.linalg.svd(m)
    v = vt[-1].copy()
    # fix the sign so the result is deterministic
    k = np.argmax(np.abs(v))
    if v[k] < 0:
        v = -v
    return float(s[-1]), v


def batched_smallest_singular(ms):
    """Vectorized :func:`smallest_singular` over a stack of shape (k, n, n)."""
    ms = np.asarray(ms, dtype=float)
    _, s, vt = np.linalg.svd(ms)
    v = vt[:, -1, :].copy()
    k = np.argmax(np.abs(v), axis=1)
    sign = np.sign(v[np.arange(len(v)), k])
    sign[sign == 0] = 1.0
    return s[:, -1], v * sign[:, None]


def solve_linear(m, b):
    """Solve ``m x = b`` by LU with partial pivoting.

    Raises
    ------
    SingularMatrixError
        If a pivot falls below ``1e-12 * max|m|``.
    """
    m = as_square(m)
    b = as_vector(b, "rhs")
    if b.shape[0] != m.shape[0]:
        raise DimensionError(f"rhs length {b.shape[0]} does not match matrix {m.shape}")
    scale = np.max(np.abs(m))
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if np.min(pivots) < SINGULAR_PIVOT_RTOL * scale:
        raise SingularMatrixError(
            f"pivot {np.min(pivots):.3e} below threshold {SINGULAR_PIVOT_RTOL * scale:.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def newton_solve(f, jac, x0, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, history=None):
    """Plain Newton iteration for ``f(x) = 0``.

    Stops as soon as ``||f(x)||_inf <= tol``. If ``history`` is a list, the
    residual norm of every iterate is appended to it.

    Raises
    ------
    ConvergenceError
        After ``max_iter`` steps without convergence, or when a step produces
        non-finite values or a singular Jacobian. Carries the last iterate and
        its residual norm.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = as_vector(x0, "x0").copy()
    r = np.atleast_1d(np.asarray(f(x), dtype=float))
    if r.shape != x.shape:
        raise DimensionError(f"residual shape {r.shape} does not match x {x.shape}")
    for it in range(max_iter + 1):
        rnorm = float(np.max(np.abs(r)))
        if history is not None:
            history.append(rnorm)
        if not np.isfinite(rnorm):
            raise ConvergenceError("non-finite residual", x=x, residual_norm=rnorm, iterations=it)
        if rnorm <= tol:
            return x
        if it == max_iter:
            break
        try:
            dx = solve_linear(jac(x), -r)
        except SingularMatrixError as exc:
            raise ConvergenceError(
                f"singular Jacobian at iteration {it}", x=x, residual_norm=rnorm, iterations=it
            ) from exc
        x = x + dx
        r = np.atleast_1d(np.asarray(f(x), dtype=float))
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations (residual {rnorm:.3e})",
        x=x,
        residual_norm=rnorm,
        iterations=max_iter,
    )


def default_step(xi):
    return 1e-5 * max(1.0, abs(xi))


def central_diff(f, x, i, h=None):
    """Central difference of a scalar function along coordinate ``i``."""
    x = as_vector(x)
    if h is None:
        h = default_step(x[i])
    if h <= 0:
        raise ValueError("step must be positive")
    xp = x.copy()
    xm = x.copy()
    xp[i] += h
    xm[i] -= h
    fp = f(xp)
    fm = f(xm)
    if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
        raise FloatingPointError(f"non-finite function value at coordinate {i}")
    return (fp - fm) / (2.0 * h)


def numeric_gradient(f, x, h=None):
    """Full central-difference gradient of a scalar function."""
    x = as_vector(x)
    return np.array([central_diff(f, x, i, h) for i in range(x.size)])


def numeric_jacobian(f, x, h=None):
    """Central-difference Jacobian of a vector function, one column per coordinate."""
    x = as_vector(x)
    cols = [np.atleast_1d(central_diff(f, x, i, h)) for i in range(x.size)]
    return np.column_stack(cols)
