"""Training-set generators: sampled parameters with exact or Newton-corrected solutions."""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, GenerationError, ParseError
from .numerics import newton_solve, smallest_singular
from .problems import constant_state, ex4_bvp, ex5_schnakenberg

RESIDUAL_TOL = 1e-8


@dataclass
class SolutionSample:
    p: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        self.u = np.atleast_1d(np.asarray(self.u, dtype=float))


@dataclass
class Branch:
    """Samples along one solution path, ordered by continuation step."""

    samples: list
    label: str = ""
    stop_reason: str = ""
    sigma_min: np.ndarray = field(default=None)

    @property
    def p(self):
        return np.array([s.p for s in self.samples])

    @property
    def u(self):
        return np.array([s.u for s in self.samples])

    def __len__(self):
        return len(self.samples)


def samples_from_arrays(p, u):
    p = np.asarray(p, dtype=float).reshape(len(p), -1)
    u = np.asarray(u, dtype=float).reshape(len(u), -1)
    return [SolutionSample(pi, ui) for pi, ui in zip(p, u)]


# ---------------------------------------------------------------------------
# closed-form generators


def gen_ex1(count=1600, seed=0):
    """p ~ U[0, 2], u = sqrt(p)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.0, 2.0, count)
    return samples_from_arrays(p, np.sqrt(p))


def gen_ex2(n_b=5000, reps=5, seed=0):
    """b ~ U[-2, 2]; for each b, ``reps`` draws c ~ U[b^2/8, b^2/4];
    u is the larger root (-b + sqrt(b^2 - 4c)) / 2."""
    if n_b < 1 or reps < 1:
        raise ValueError("n_b and reps must be >= 1")
    rng = np.random.default_rng(seed)
    b = np.repeat(rng.uniform(-2.0, 2.0, n_b), reps)
    c = rng.uniform(b**2 / 8.0, b**2 / 4.0)
    disc = np.maximum(b**2 - 4.0 * c, 0.0)
    u = (-b + np.sqrt(disc)) / 2.0
    return samples_from_arrays(np.column_stack([b, c]), u)


def cubic_sheet_d(b, c):
    """d putting (b, c, d) on the repeated-root sheet with a nonnegative
    cube-root argument, for 0 <= c <= b^2/3."""
    s3 = np.maximum(b**2 / 9.0 - c / 3.0, 0.0) ** 1.5
    return b * c / 3.0 - 2.0 * b**3 / 27.0 - 2.0 * s3


def gen_ex3(n_b=3000, reps=4, seed=0):
    """b ~ U[0, 2]; ``reps`` draws c ~ U[0, b^2/3]; d on the repeated-root
    sheet; u the simple root -b/3 + 2 cbrt(bc/6 - b^3/27 - d/2)."""
    if n_b < 1 or reps < 1:
        raise ValueError("n_b and reps must be >= 1")
    rng = np.random.default_rng(seed)
    b = np.repeat(rng.uniform(0.0, 2.0, n_b), reps)
    c = rng.uniform(0.0, b**2 / 3.0)
    d = cubic_sheet_d(b, c)
    q = np.maximum(b * c / 6.0 - b**3 / 27.0 - d / 2.0, 0.0)
    u = -b / 3.0 + 2.0 * np.cbrt(q)
    return samples_from_arrays(np.column_stack([b, c, d]), u)


# ---------------------------------------------------------------------------
# continuation


def _solve_at(spec, u0, p):
    return newton_solve(lambda u: spec.residual(u, p), lambda u: spec.jac_u(u, p), u0)


def trace_branch(
    spec,
    start,
    param_index=0,
    step=0.01,
    count=10000,
    direction=-1,
    fold_tol=1e-4,
    jump_tol=0.25,
    min_step=1e-12,
):
    """Natural-parameter continuation with secant predictor and Newton corrector.

    Marches ``p[param_index]`` by ``direction * step``. A step is rejected and
    halved when Newton fails or the corrected state lands further than
    ``jump_tol`` (max-norm) from the prediction. The trace stops with reason
    ``"fold"`` once ``sigma_min(F_u) < fold_tol`` or the step shrinks below
    ``min_step``, and with reason ``"count"`` after ``count`` accepted steps.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    p = np.array(start.p, dtype=float)
    try:
        u = _solve_at(spec, start.u, p)
    except ConvergenceError as exc:
        raise GenerationError(f"Newton failed at the starting point: {exc}") from exc
    samples = [SolutionSample(p.copy(), u.copy())]
    sig = [smallest_singular(spec.jac_u(u, p))[0]]
    prev = None
    h = step
    reason = "count"
    while len(samples) <= count:
        if sig[-1] < fold_tol:
            reason = "fold"
            break
        if h < min_step:
            reason = "fold"
            break
        pn = p.copy()
        pn[param_index] += direction * h
        if prev is None:
            guess = u
        else:
            dp = p[param_index] - prev[1][param_index]
            guess = u + (u - prev[0]) * (direction * h / dp)
        try:
            un = _solve_at(spec, guess, pn)
        except ConvergenceError:
            h /= 2.0
            continue
        if np.max(np.abs(un - guess)) > jump_tol:
            h /= 2.0
            continue
        prev = (u, p)
        u, p = un, pn
        samples.append(SolutionSample(p.copy(), u.copy()))
        sig.append(smallest_singular(spec.jac_u(u, p))[0])
        h = min(step, 2.0 * h)
    return Branch(samples, stop_reason=reason, sigma_min=np.array(sig))


def newton_correct_batch(spec, u0, p, tol=1e-10, max_iter=30):
    """Vectorized Newton at fixed parameters for a stack of guesses."""
    u = np.array(u0, dtype=float)
    for _ in range(max_iter):
        r = spec.residual_fn(u, p)
        if np.max(np.abs(r)) <= tol:
            return u
        u = u - np.linalg.solve(spec.jac_fn(u, p), r[:, :, None])[:, :, 0]
    r = spec.residual_fn(u, p)
    if np.max(np.abs(r)) <= tol:
        return u
    raise GenerationError(f"batch Newton correction stalled at residual {np.max(np.abs(r)):.3e}")


def resample_branch(spec, branch, count, rng, jump_tol=0.25):
    """Redistribute a branch to ``count`` samples uniformly in (p, u) arclength.

    Positions are drawn uniformly at random in arclength (the two end nodes
    are kept), linearly interpolated between continuation nodes and then
    Newton-corrected at their parameter value.
    """
    p = branch.p
    u = branch.u
    pts = np.column_stack([p, u])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if count < 2:
        raise ValueError("count must be >= 2")
    targets = np.sort(np.concatenate([[0.0, s[-1]], rng.uniform(0.0, s[-1], count - 2)]))
    idx = np.clip(np.searchsorted(s, targets, side="right") - 1, 0, len(s) - 2)
    w = np.where(seg[idx] > 0, (targets - s[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0), 0.0)
    guess = pts[idx] + w[:, None] * (pts[idx + 1] - pts[idx])
    pg = guess[:, : p.shape[1]]
    ug = guess[:, p.shape[1] :]
    uc = newton_correct_batch(spec, ug, pg)
    if np.max(np.abs(uc - ug)) > jump_tol:
        raise GenerationError("resampled point left its branch during Newton correction")
    out = Branch(samples_from_arrays(pg, uc), label=branch.label, stop_reason=branch.stop_reason)
    return out


# ---------------------------------------------------------------------------
# Ex4


EX4_P_START = 20.0


def ex4_start_solutions(p_start=EX4_P_START, amplitudes=None, min_distance=0.1):
    """Distinct nontrivial solutions at ``p_start`` reached by Newton from
    scaled cosine bumps A cos(pi x / 2)."""
    spec = ex4_bvp()
    x = spec.constants["x"]
    if amplitudes is None:
        amplitudes = np.linspace(0.5, 30.0, 300)
    found = []
    for amp in amplitudes:
        try:
            u = _solve_at(spec, amp * np.cos(np.pi * x / 2.0), np.array([p_start]))
        except ConvergenceError:
            continue
        if np.max(np.abs(u)) < 1e-6:
            continue
        if all(np.max(np.abs(u - v)) > min_distance for _, v in found):
            found.append((float(amp), u))
    return found


def trace_ex4_branches(n_branches=4, p_start=EX4_P_START, step=0.05):
    """Continuation traces of the ``n_branches`` nontrivial branches with the
    lowest distinct folds, ordered by fold location.

    Each start solution at ``p_start`` is continued toward smaller p; only
    traces that end at a fold with p > 0 are kept.
    """
    spec = ex4_bvp()
    traced = []
    for amp, u in ex4_start_solutions(p_start):
        br = trace_branch(spec, SolutionSample([p_start], u), step=step, count=100000, direction=-1)
        if br.stop_reason == "fold" and br.sigma_min[-1] <= 1e-4 and br.p[-1, 0] > 0:
            br.label = f"A={amp:.4f}"
            traced.append(br)
    traced.sort(key=lambda b: b.p[-1, 0])
    # the two halves of one fold both show up from p_start; keep one of them
    distinct = []
    for br in traced:
        if all(abs(br.p[-1, 0] - k.p[-1, 0]) > 1e-3 for k in distinct):
            distinct.append(br)
    traced = distinct
    if len(traced) < n_branches:
        labels = [f"{b.label} fold p={b.p[-1, 0]:.4f}" for b in traced]
        raise GenerationError(f"found only {len(traced)} folding branches: {labels}")
    return traced[:n_branches]


def gen_ex4_branches(seed=0, count=7600, n_branches=4, p_start=EX4_P_START, step=0.05):
    """Training samples for the lowest-fold nontrivial branches, each traced
    by :func:`trace_ex4_branches` and resampled to ``count`` points."""
    spec = ex4_bvp()
    rng = np.random.default_rng(seed)
    out = []
    for i, br in enumerate(trace_ex4_branches(n_branches, p_start, step)):
        rs = resample_branch(spec, br, count, rng)
        rs.label = f"branch{i + 1} ({br.label})"
        rs.sigma_min = br.sigma_min
        out.append(rs)
    return out


# ---------------------------------------------------------------------------
# Ex5


EX5_WINDOW = (0.8, 1.3)


def locate_constant_pitchfork(spec, d_lo=1.0, d_hi=200.0, n_scan=400):
    """First d at which F_u, evaluated at the homogeneous state, turns singular.

    Scans det(F_u) on a grid for the first sign change and refines by Brent's
    method. Returns None when no sign change occurs.
    """
    a = spec.constants["a"]
    b = spec.constants["b"]
    us, vs = constant_state(a, b)
    m = spec.n // 2
    u0 = np.concatenate([np.full(m, us), np.full(m, vs)])

    def det(d):
        return np.linalg.det(spec.jac_u(u0, [d]))

    grid = np.linspace(d_lo, d_hi, n_scan)
    signs = np.sign([det(d) for d in grid])
    change = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    if change.size == 0:
        return None
    i = change[0]
    return brentq(det, grid[i], grid[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps)


def gen_ex5(b=2.0 / 3.0, eta=50.0, count=300, seed=0, a=1.0 / 3.0, window=EX5_WINDOW, mode=1):
    """Samples on the path through the first pitchfork in d.

    Parameters are drawn uniformly in ``[window[0] * d_c, window[1] * d_c]``
    where ``d_c`` is the pitchfork of the homogeneous state. Below ``d_c`` the
    sample is the homogeneous state; above it, the nonconstant branch reached
    from the homogeneous state plus a ``cos(mode pi x)`` perturbation at the
    top of the window and continued downward through the sorted samples.

    Returns ``(samples, d_box)``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    spec = ex5_schnakenberg(b=b, eta=eta, a=a)
    d_c = locate_constant_pitchfork(spec)
    if d_c is None:
        raise GenerationError(f"no pitchfork of the homogeneous state for b={b}, eta={eta}")
    lo, hi = window[0] * d_c, window[1] * d_c
    rng = np.random.default_rng(seed)
    d = np.sort(rng.uniform(lo, hi, count))
    m = spec.n // 2
    x = spec.constants["x"]
    us, vs = constant_state(a, b)
    u0 = np.concatenate([np.full(m, us), np.full(m, vs)])
    states = np.tile(u0, (count, 1))

    upper = np.nonzero(d > d_c)[0][::-1]
    if upper.size:
        bump = np.concatenate([np.cos(mode * np.pi * x), np.zeros(m)])
        start = None
        for amp in (0.5, 0.2, 1.0, 0.1):
            try:
                cand = _solve_at(spec, u0 + amp * bump, [hi])
            except ConvergenceError:
                continue
            if np.max(np.abs(cand - u0)) > 1e-3 and cand[0] > us:
                start = cand
                break
        if start is None:
            raise GenerationError(f"could not reach the nonconstant branch at d={hi:.4f} (b={b}, eta={eta})")
        u, dprev, uprev = start, hi, None
        for i in upper:
            guess = u if uprev is None else u + (u - uprev) * (d[i] - dprev) / (dprev - dprev_prev)
            try:
                un = _solve_at(spec, guess, [d[i]])
            except ConvergenceError as exc:
                raise GenerationError(f"continuation failed at d={d[i]:.6f}: {exc}") from exc
            if np.max(np.abs(un - u)) > 0.25:
                raise GenerationError(f"branch jump at d={d[i]:.6f}")
            uprev, dprev_prev = u, dprev
            u, dprev = un, d[i]
            states[i] = u
    samples = samples_from_arrays(d, states)
    return samples, (lo, hi)


def gen_ex5_grid(bs, etas, count=300, seed=0, a=1.0 / 3.0):
    """Concatenated per-node datasets with p = (d, b, eta)."""
    out = []
    for i, b in enumerate(bs):
        for j, eta in enumerate(etas):
            samples, _ = gen_ex5(b, eta, count, seed + 1000 * i + j, a)
            out.extend(SolutionSample([s.p[0], b, eta], s.u) for s in samples)
    return out


# ---------------------------------------------------------------------------
# dataset files


def write_dataset(path, samples, header):
    """One JSON header line, then one ``{"p": [...], "u": [...]}`` record per line."""
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in samples:
            rec = {"p": s.p.tolist(), "u": s.u.tolist()}
            label = getattr(s, "label", None)
            if label is not None:
                rec["branch"] = label
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path):
    """Returns ``(header, samples)``; records may carry a ``branch`` label."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: bad header line", field="header") from exc
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            s = SolutionSample(rec["p"], rec["u"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}:{lineno}: malformed record", field="p/u") from exc
        if "branch" in rec:
            s.label = rec["branch"]
        samples.append(s)
    return header, samples


def check_residuals(spec, samples, tol=RESIDUAL_TOL):
    """Largest residual max-norm over the samples (raises if above ``tol``)."""
    p = np.array([s.p for s in samples])
    u = np.array([s.u for s in samples])
    worst = float(np.max(np.abs(spec.residual_fn(u, p))))
    if worst > tol:
        raise GenerationError(f"sample residual {worst:.3e} exceeds {tol:.1e}")
    return worst
