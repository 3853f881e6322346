"""Locating singular Jacobians along a trained surrogate.

With the network frozen, the objective over (p, v) is the Rayleigh quotient
of A = F_u^T F_u at u = u_N(p) plus the weighted squared residual. Its
minimizers sit where F_u(u_N(p), p) is singular and u_N(p) solves the system.
"""

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, SearchError
from .network import forward, input_jacobian
from .numerics import batched_smallest_singular, default_step
from .problems import range_space_check


@dataclass
class SearchConfig:
    lam: float = 1.0
    restarts: int = 16
    max_iters: int = 5000
    learning_rate: float = 1e-2
    p_box: Optional[tuple] = None
    box_margin: float = 0.1
    tol_f2: float = 1e-6
    seed: int = 0
    fd_step: Optional[float] = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.tol_f2 <= 0:
            raise ValueError("tol_f2 must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.box_margin < 0:
            raise ValueError("box_margin must be nonnegative")


@dataclass
class BifurcationResult:
    p_star: np.ndarray
    v_star: np.ndarray
    f2_value: float
    sigma_min_at_p: float
    residual_norm: float
    restart_index: int
    converged: bool
    frozen: dict = field(default_factory=dict)
    range_space_ok: Optional[bool] = None
    history: Optional[np.ndarray] = None

    def row(self):
        return {
            **{f"p{i}": float(x) for i, x in enumerate(self.p_star)},
            **{f"v{i}": float(x) for i, x in enumerate(self.v_star)},
            "f2": self.f2_value,
            "sigma_min": self.sigma_min_at_p,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
        }


def _f2_rows(net, spec, p, v, lam):
    """f2 for stacked rows; also returns A v, the Rayleigh term and |v|^2."""
    u = forward(net, p)
    r = spec.residual_fn(u, p)
    j = spec.jac_fn(u, p)
    jv = np.einsum("kij,kj->ki", j, v)
    av = np.einsum("kij,ki->kj", j, jv)
    vv = np.sum(v * v, axis=1)
    ray = np.sum(jv * jv, axis=1) / vv
    return ray + 0.5 * lam * np.sum(r * r, axis=1), av, ray, vv


def _check_pv(net, spec, p, v):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if p.shape != (spec.d,) or v.shape != (spec.n,):
        raise DimensionError(f"expected p of length {spec.d} and v of length {spec.n}")
    if net.n_in != spec.d or net.n_out != spec.n:
        raise DimensionError(f"network is {net.n_in}->{net.n_out}, problem needs {spec.d}->{spec.n}")
    if not np.any(v):
        raise ValueError("v must be nonzero")
    return p, v


def loss_f2(net, spec, p, v, lam):
    """Rayleigh quotient of F_u^T F_u at v plus ``lam/2 ||F||^2``, at u = u_N(p)."""
    p, v = _check_pv(net, spec, p, v)
    return float(_f2_rows(net, spec, p[None], v[None], lam)[0][0])


def _fd_steps(p, fd_step):
    if fd_step is not None:
        return np.full(p.shape, float(fd_step))
    return np.vectorize(default_step)(p) if p.size else p.copy()


def _grad_rows(net, spec, p, v, lam, free, fd_step=None):
    """f2, d f2/dp (central differences over ``free`` columns) and the
    analytic d f2/dv for stacked rows."""
    rows, d = p.shape
    cols = np.nonzero(free)[0]
    h = _fd_steps(p, fd_step)
    stack = [p]
    for k in cols:
        e = np.zeros(d)
        e[k] = 1.0
        stack.append(p + h[:, k : k + 1] * e)
        stack.append(p - h[:, k : k + 1] * e)
    pall = np.concatenate(stack, axis=0)
    vall = np.tile(v, (len(stack), 1))
    f, av, ray, vv = _f2_rows(net, spec, pall, vall, lam)
    f0 = f[:rows]
    gp = np.zeros_like(p)
    for i, k in enumerate(cols):
        fp = f[rows * (1 + 2 * i) : rows * (2 + 2 * i)]
        fm = f[rows * (2 + 2 * i) : rows * (3 + 2 * i)]
        gp[:, k] = (fp - fm) / (2.0 * h[:, k])
    gv = 2.0 * (av[:rows] - ray[:rows, None] * v) / vv[:rows, None]
    return f0, gp, gv


def grad_f2(net, spec, p, v, lam, h=None):
    """Gradient of :func:`loss_f2`.

    The v-part is analytic, ``2 (A v - R v) / |v|^2`` with R the Rayleigh
    term. The p-part is a central difference of the full objective with v
    held fixed, which carries the chain rule through u_N(p).
    """
    p, v = _check_pv(net, spec, p, v)
    _, gp, gv = _grad_rows(net, spec, p[None], v[None], lam, np.ones(spec.d, bool), h)
    return gp[0], gv[0]


def search_box(spec, config):
    """The training box (``config.p_box`` or the problem's box) widened by
    ``box_margin`` times its width on each side."""
    box = spec.param_box if config.p_box is None else config.p_box
    box = np.array(box, dtype=float).reshape(spec.d, 2)
    if np.any(box[:, 1] < box[:, 0]):
        raise ValueError(f"empty search box {box.tolist()}")
    pad = config.box_margin * (box[:, 1] - box[:, 0])
    box[:, 0] -= pad
    box[:, 1] += pad
    return box


def _null_directions(net, spec, p, fallback):
    u = forward(net, p)
    with np.errstate(invalid="ignore", over="ignore"):
        j = spec.jac_fn(u, p)
    ok = np.all(np.isfinite(j.reshape(j.shape[0], -1)), axis=1)
    v = fallback.copy()
    if np.any(ok):
        v[ok] = batched_smallest_singular(j[ok])[1]
    return v


def _descend(net, spec, p0, v0, free, box, config):
    """Projected Adam on p for all rows at once, in box-normalized coordinates.

    v is not stepped. At every iterate it is reset to the right singular
    vector of sigma_min(F_u), the exact minimizer of the Rayleigh term, so
    the fixed-v difference quotient in p is the gradient of min_v f2. Adam
    would rescale a rounding-level v gradient to a full-size step and knock
    v off the null direction.

    Returns best-so-far (f2, p, v) per row and the per-iteration best f2
    history of shape (max_iters + 1, rows).
    """
    lo, hi = box[:, 0], box[:, 1]
    half = 0.5 * (hi - lo)
    half[half <= 0] = 1.0
    p = p0.copy()
    v = v0 / np.linalg.norm(v0, axis=1, keepdims=True)
    rows = p.shape[0]
    m = np.zeros_like(p)
    s = np.zeros_like(p)
    mask = free.astype(float)
    best_f = np.full(rows, np.inf)
    best_p = p.copy()
    best_v = v.copy()
    hist = np.empty((config.max_iters + 1, rows))
    b1, b2 = config.beta1, config.beta2
    for it in range(config.max_iters + 1):
        v = _null_directions(net, spec, p, v)
        f, gp, _ = _grad_rows(net, spec, p, v, config.lam, free, config.fd_step)
        f = np.where(np.isfinite(f), f, np.inf)
        better = f < best_f
        best_f = np.where(better, f, best_f)
        best_p[better] = p[better]
        best_v[better] = v[better]
        hist[it] = best_f
        if it == config.max_iters:
            break
        # gradient in normalized coordinates q = p / half
        g = gp * half * mask
        g = np.where(np.isfinite(g), g, 0.0)
        t = it + 1
        m = b1 * m + (1 - b1) * g
        s = b2 * s + (1 - b2) * g * g
        step = config.learning_rate * (m / (1 - b1**t)) / (np.sqrt(s / (1 - b2**t)) + config.eps)
        p = np.where(free, np.clip(p - step * half, lo, hi), p)
    return best_f, best_p, best_v, hist


def _initial_rows(net, spec, box, free, fixed, rng, restarts):
    lo, hi = box[:, 0], box[:, 1]
    p0 = rng.uniform(lo, hi, size=(restarts, spec.d))
    p0[:, ~free] = fixed[~free]
    u0 = forward(net, p0)
    _, v0 = batched_smallest_singular(spec.jac_fn(u0, p0))
    return p0, v0


def _parse_frozen(spec, frozen):
    free = np.ones(spec.d, bool)
    fixed = np.zeros(spec.d)
    for key, val in (frozen or {}).items():
        k = spec.param_index(key) if isinstance(key, str) else int(key)
        free[k] = False
        fixed[k] = float(val)
    return free, fixed


def _result(net, spec, f, p, v, restart, config, frozen, hist):
    u = forward(net, p)
    j = spec.jac_u(u, p)
    sig = float(np.linalg.svd(j, compute_uv=False)[-1])
    res = float(np.linalg.norm(spec.residual(u, p)))
    try:
        smax = float(np.linalg.svd(j, compute_uv=False)[0])
        rtol = max(1e-8, 10.0 * sig / smax) if smax > 0 else 1e-8
        ok = range_space_check(spec, u, p, v, du_dp=input_jacobian(net, p), rtol=rtol)
    except (DimensionError, np.linalg.LinAlgError):
        ok = None
    return BifurcationResult(
        p_star=p.copy(),
        v_star=v / np.linalg.norm(v),
        f2_value=float(f),
        sigma_min_at_p=sig,
        residual_norm=res,
        restart_index=int(restart),
        converged=bool(f <= config.tol_f2),
        frozen=dict(frozen or {}),
        range_space_ok=ok,
        history=hist,
    )


def _search(net, spec, config, nodes):
    """Run all (node, restart) rows in one vectorized descent."""
    if net.n_in != spec.d or net.n_out != spec.n:
        raise DimensionError(f"network is {net.n_in}->{net.n_out}, problem needs {spec.d}->{spec.n}")
    box = search_box(spec, config)
    parsed = [_parse_frozen(spec, fr) for fr in nodes]
    frees = {tuple(fr) for fr, _ in parsed}
    results = [None] * len(nodes)
    # rows sharing a free-coordinate pattern descend together
    for pattern in frees:
        free = np.array(pattern)
        idx = [i for i, (fr, _) in enumerate(parsed) if tuple(fr) == pattern]
        p0s, v0s = [], []
        for i in idx:
            rng = np.random.default_rng([config.seed, i])
            p0, v0 = _initial_rows(net, spec, box, free, parsed[i][1], rng, config.restarts)
            p0s.append(p0)
            v0s.append(v0)
        bf, bp, bv, hist = _descend(net, spec, np.concatenate(p0s), np.concatenate(v0s), free, box, config)
        r = config.restarts
        for n, i in enumerate(idx):
            sl = slice(n * r, (n + 1) * r)
            fs = bf[sl]
            if not np.any(np.isfinite(fs)):
                results[i] = SearchError(f"all {r} restarts produced non-finite f2 at node {nodes[i]}")
                continue
            best = int(np.argmin(fs))
            results[i] = _result(
                net, spec, fs[best], bp[sl][best], bv[sl][best], best, config, nodes[i], hist[:, sl][:, best]
            )
    return results


def find_bifurcation(net, spec, config, frozen=None):
    """Multi-start minimization of f2; returns the best restart.

    Each restart starts from p uniform in the search box and v the right
    singular vector of the smallest singular value of F_u there. Coordinates
    named in ``frozen`` (name or index -> value) are pinned.
    """
    out = _search(net, spec, config, [frozen or {}])[0]
    if isinstance(out, Exception):
        raise out
    return out


def expand_grid(grid):
    """A list of frozen assignments from a list of dicts or a mapping of
    parameter name -> values (Cartesian product, last name varying fastest)."""
    if isinstance(grid, dict):
        names = list(grid)
        return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]
    return [dict(g) for g in grid]


def sweep_bifurcation(net, spec, frozen, config):
    """One search per grid node with the frozen coordinates pinned.

    Nodes whose restarts all fail are returned as :class:`SearchError`
    instances in place, so the sweep itself always completes.
    """
    return _search(net, spec, config, expand_grid(frozen))
