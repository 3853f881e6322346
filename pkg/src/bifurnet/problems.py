"""Parametric systems F(u, p) = 0 with analytic residuals and Jacobians.

Every problem evaluates on stacks: ``u`` of shape (K, n) and ``p`` of shape
(K, d) give residuals of shape (K, n) and Jacobians of shape (K, n, n).
Single points (1-d ``u`` and ``p``) are accepted and returned unstacked.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError
from .numerics import default_step

PROBLEM_NAMES = ("ex1_turning", "ex2_quadratic", "ex3_cubic", "ex4_bvp", "ex5_schnakenberg")

# Short aliases accepted wherever a problem name is parsed.
ALIASES = {
    "ex1": "ex1_turning",
    "ex2": "ex2_quadratic",
    "ex3": "ex3_cubic",
    "ex4": "ex4_bvp",
    "ex5": "ex5_schnakenberg",
}


@dataclass(frozen=True)
class ProblemSpec:
    """A parametric system F: R^n x R^d -> R^n.

    ``residual_fn`` and ``jac_fn`` work on stacked inputs (K, n), (K, d).
    ``djac_dp_fn``, when given, returns dF_u/dp_k on stacks; otherwise a
    central difference of ``jac_fn`` is used.
    """

    name: str
    n: int
    d: int
    param_box: tuple
    param_names: tuple
    residual_fn: Callable
    jac_fn: Callable
    djac_dp_fn: Optional[Callable] = None
    constants: dict = field(default_factory=dict)

    @property
    def box_array(self):
        return np.array(self.param_box, dtype=float).reshape(self.d, 2)

    def param_index(self, name):
        try:
            return self.param_names.index(name)
        except ValueError:
            raise KeyError(f"{self.name} has no parameter {name!r}; have {self.param_names}") from None

    def _stack(self, u, p):
        u = np.asarray(u, dtype=float)
        p = np.asarray(p, dtype=float)
        single = u.ndim <= 1 and p.ndim <= 1
        u2 = np.atleast_1d(u).reshape(-1, self.n) if u.ndim <= 1 else u
        p2 = np.atleast_1d(p).reshape(-1, self.d) if p.ndim <= 1 else p
        if u2.ndim != 2 or u2.shape[1] != self.n:
            raise DimensionError(f"{self.name}: u must have {self.n} columns, got shape {u.shape}")
        if p2.ndim != 2 or p2.shape[1] != self.d:
            raise DimensionError(f"{self.name}: p must have {self.d} columns, got shape {p.shape}")
        if single and (u2.shape[0] != 1 or p2.shape[0] != 1):
            raise DimensionError(f"{self.name}: expected one point, got u {u.shape}, p {p.shape}")
        if u2.shape[0] != p2.shape[0]:
            raise DimensionError(f"{self.name}: {u2.shape[0]} states vs {p2.shape[0]} parameters")
        return u2, p2, single

    def residual(self, u, p):
        u2, p2, single = self._stack(u, p)
        r = self.residual_fn(u2, p2)
        return r[0] if single else r

    def jac_u(self, u, p):
        u2, p2, single = self._stack(u, p)
        j = self.jac_fn(u2, p2)
        return j[0] if single else j

    def djac_u_dp(self, u, p, k):
        if not 0 <= k < self.d:
            raise DimensionError(f"{self.name}: parameter index {k} out of range [0, {self.d})")
        u2, p2, single = self._stack(u, p)
        if self.djac_dp_fn is not None:
            out = self.djac_dp_fn(u2, p2, k)
        else:
            h = np.array([default_step(x) for x in p2[:, k]])
            pp = p2.copy()
            pm = p2.copy()
            pp[:, k] += h
            pm[:, k] -= h
            out = (self.jac_fn(u2, pp) - self.jac_fn(u2, pm)) / (2.0 * h[:, None, None])
        return out[0] if single else out


def residual(spec, u, p):
    return spec.residual(u, p)


def jac_u(spec, u, p):
    return spec.jac_u(u, p)


def djac_u_dp(spec, u, p, k):
    return spec.djac_u_dp(u, p, k)


def _rank(s, threshold):
    return int(np.sum(s > threshold))


def range_space_check(spec, u, p, v, du_dp=None, rtol=1e-8):
    """Whether (dF_u/dp) v leaves the range of F_u.

    Builds the augmented matrix ``[F_u | c_1 ... c_d]`` where ``c_k`` is the
    derivative of ``F_u v`` along parameter ``k`` and compares its numerical
    rank with that of ``F_u``. By default ``c_k`` holds only the explicit
    parameter dependence. Passing ``du_dp`` (shape (n, d), e.g. a network's
    input Jacobian) switches to the derivative along the solution path,
    ``c_k = F_uu[du/dp_k] v + (dF_u/dp_k) v``.

    Singular values count toward the rank when they exceed
    ``rtol * sigma_max`` of the augmented matrix.
    """
    u = np.asarray(u, dtype=float).reshape(spec.n)
    p = np.asarray(p, dtype=float).reshape(spec.d)
    v = np.asarray(v, dtype=float).reshape(spec.n)
    fu = spec.jac_u(u, p)
    cols = []
    for k in range(spec.d):
        c = spec.djac_u_dp(u, p, k) @ v
        if du_dp is not None:
            w = np.asarray(du_dp, dtype=float).reshape(spec.n, spec.d)[:, k]
            wn = np.linalg.norm(w)
            if wn > 0:
                # directional derivative of F_u along w, central difference
                h = 1e-6 * max(1.0, np.linalg.norm(u)) / wn
                dfu = (spec.jac_u(u + h * w, p) - spec.jac_u(u - h * w, p)) / (2 * h)
                c = c + dfu @ v
        cols.append(c)
    aug = np.column_stack([fu] + cols)
    s_aug = np.linalg.svd(aug, compute_uv=False)
    smax = s_aug[0] if s_aug.size else 0.0
    if smax == 0.0:
        return False
    thr = rtol * smax
    s_fu = np.linalg.svd(fu, compute_uv=False)
    return _rank(s_aug, thr) > _rank(s_fu, thr)


# ---------------------------------------------------------------------------
# Ex1: x^2 - p


def ex1_turning():
    def res(u, p):
        return u**2 - p

    def jac(u, p):
        return (2.0 * u)[:, :, None]

    def djac(u, p, k):
        return np.zeros((u.shape[0], 1, 1))

    return ProblemSpec(
        name="ex1_turning",
        n=1,
        d=1,
        param_box=((0.0, 2.0),),
        param_names=("p",),
        residual_fn=res,
        jac_fn=jac,
        djac_dp_fn=djac,
    )


# ---------------------------------------------------------------------------
# Ex2: x^2 + b x + c


def ex2_quadratic():
    def res(u, p):
        x = u[:, 0]
        return (x**2 + p[:, 0] * x + p[:, 1])[:, None]

    def jac(u, p):
        return (2.0 * u[:, 0] + p[:, 0])[:, None, None]

    def djac(u, p, k):
        val = 1.0 if k == 0 else 0.0
        return np.full((u.shape[0], 1, 1), val)

    return ProblemSpec(
        name="ex2_quadratic",
        n=1,
        d=2,
        param_box=((-2.0, 2.0), (0.0, 1.0)),
        param_names=("b", "c"),
        residual_fn=res,
        jac_fn=jac,
        djac_dp_fn=djac,
    )


# ---------------------------------------------------------------------------
# Ex3: x^3 + b x^2 + c x + d


def ex3_cubic():
    def res(u, p):
        x = u[:, 0]
        b, c, d = p[:, 0], p[:, 1], p[:, 2]
        return (x**3 + b * x**2 + c * x + d)[:, None]

    def jac(u, p):
        x = u[:, 0]
        return (3.0 * x**2 + 2.0 * p[:, 0] * x + p[:, 1])[:, None, None]

    def djac(u, p, k):
        x = u[:, 0]
        if k == 0:
            out = 2.0 * x
        elif k == 1:
            out = np.ones_like(x)
        else:
            out = np.zeros_like(x)
        return out[:, None, None]

    return ProblemSpec(
        name="ex3_cubic",
        n=1,
        d=3,
        param_box=((0.0, 2.0), (0.0, 4.0 / 3.0), (-1.2, 0.3)),
        param_names=("b", "c", "d"),
        residual_fn=res,
        jac_fn=jac,
        djac_dp_fn=djac,
    )


# ---------------------------------------------------------------------------
# Ex4: u_xx = u^2 (u^2 - p), u_x(0) = 0, u(1) = 0


def neumann_dirichlet_laplacian(m, h):
    """Second-difference matrix on nodes 0..m-1 with a mirrored ghost node at
    the left end (u_{-1} = u_1) and a homogeneous Dirichlet node at index m."""
    lap = np.zeros((m, m))
    for j in range(m):
        lap[j, j] = -2.0
        if j > 0:
            lap[j, j - 1] = 1.0
        if j + 1 < m:
            lap[j, j + 1] = 1.0
    lap[0, 1] = 2.0
    return lap / h**2


def neumann_laplacian(m, h):
    """Second-difference matrix on m nodes with mirrored ghost nodes at both ends."""
    lap = np.zeros((m, m))
    for j in range(m):
        lap[j, j] = -2.0
        if j > 0:
            lap[j, j - 1] = 1.0
        if j + 1 < m:
            lap[j, j + 1] = 1.0
    lap[0, 1] = 2.0
    lap[m - 1, m - 2] = 2.0
    return lap / h**2


EX4_H = 0.2
EX4_N = 5
EX4_BOX = ((0.0, 60.0),)


def ex4_bvp(param_box=EX4_BOX):
    h = EX4_H
    lap = neumann_dirichlet_laplacian(EX4_N, h)

    def res(u, p):
        return u @ lap.T - u**2 * (u**2 - p[:, :1])

    def jac(u, p):
        diag = 4.0 * u**3 - 2.0 * p[:, :1] * u
        out = np.broadcast_to(lap, (u.shape[0], EX4_N, EX4_N)).copy()
        idx = np.arange(EX4_N)
        out[:, idx, idx] -= diag
        return out

    return ProblemSpec(
        name="ex4_bvp",
        n=EX4_N,
        d=1,
        param_box=tuple(param_box),
        param_names=("p",),
        residual_fn=res,
        jac_fn=jac,
        constants={"h": h, "x": np.arange(EX4_N) * h},
    )


# ---------------------------------------------------------------------------
# Ex5: Schnakenberg steady state, no-flux on [0, 1]

EX5_H = 0.1
EX5_M = 11
EX5_A = 1.0 / 3.0


def constant_state(a, b):
    """Homogeneous steady state (u, v) of the Schnakenberg kinetics."""
    return a + b, b / (a + b) ** 2


def _schnak_parts(u, p, frozen, names):
    vals = dict(frozen)
    for j, nm in enumerate(names):
        vals[nm] = p[:, j]
    m = EX5_M
    uu = u[:, :m]
    vv = u[:, m:]
    return uu, vv, vals


def ex5_schnakenberg(b=2.0 / 3.0, eta=50.0, a=EX5_A, family="d", d_box=(10.0, 90.0)):
    """Discretized Schnakenberg steady state.

    ``family="d"`` exposes only the diffusion ratio d (a, b, eta frozen);
    ``family="dbeta"`` exposes (d, b, eta) with ``a`` frozen.
    """
    h = EX5_H
    m = EX5_M
    lap = neumann_laplacian(m, h)
    if family == "d":
        names = ("d",)
        frozen = {"a": a, "b": b, "eta": eta}
        box = (tuple(d_box),)
    elif family == "dbeta":
        names = ("d", "b", "eta")
        frozen = {"a": a}
        box = (tuple(d_box), (2.0 / 3.0, 0.8), (45.0, 80.0))
    else:
        raise ValueError(f"unknown Schnakenberg family {family!r}")

    def res(u, p):
        uu, vv, k = _schnak_parts(u, p, frozen, names)
        a_, b_, eta_, d_ = _col(k["a"]), _col(k["b"]), _col(k["eta"]), _col(k["d"])
        u2v = uu**2 * vv
        fu = uu @ lap.T + eta_ * (a_ - uu + u2v)
        fv = d_ * (vv @ lap.T) + eta_ * (b_ - u2v)
        return np.concatenate([fu, fv], axis=1)

    def jac(u, p):
        uu, vv, k = _schnak_parts(u, p, frozen, names)
        eta_, d_ = _col(k["eta"]), _col(k["d"])
        kk = u.shape[0]
        out = np.zeros((kk, 2 * m, 2 * m))
        idx = np.arange(m)
        out[:, :m, :m] = lap
        out[:, m:, m:] = d_[:, :, None] * lap
        out[:, idx, idx] += eta_ * (-1.0 + 2.0 * uu * vv)
        out[:, idx, m + idx] = eta_ * uu**2
        out[:, m + idx, idx] = eta_ * (-2.0 * uu * vv)
        out[:, m + idx, m + idx] += eta_ * (-(uu**2))
        return out

    name = "ex5_schnakenberg"
    return ProblemSpec(
        name=name,
        n=2 * m,
        d=len(names),
        param_box=box,
        param_names=names,
        residual_fn=res,
        jac_fn=jac,
        constants={"h": h, "x": np.arange(m) * h, "family": family, **frozen},
    )


def _col(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else np.full((1, 1), float(x))


def get_problem(name, **kwargs):
    """Look up a problem by name (full or ``exN`` alias)."""
    key = ALIASES.get(name, name)
    factories = {
        "ex1_turning": ex1_turning,
        "ex2_quadratic": ex2_quadratic,
        "ex3_cubic": ex3_cubic,
        "ex4_bvp": ex4_bvp,
        "ex5_schnakenberg": ex5_schnakenberg,
    }
    if key not in factories:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(PROBLEM_NAMES)}")
    return factories[key](**kwargs)
