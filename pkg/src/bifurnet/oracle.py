"""Reference bifurcation values that do not involve any network.

Closed-form loci for the polynomial problems, the linearized Turing
condition for the Schnakenberg system, sigma_min scans along continuation
traces for the BVP, and the L1 curve metric used to score swept results.
"""

import datetime
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .numerics import batched_smallest_singular
from .problems import EX5_H, constant_state

ORACLE_VERSION = "1"
FIXTURE_NAME = "oracle_fixture.json"


@dataclass
class OracleCurve:
    """Bifurcation coordinates ``values[i]`` at free-parameter node ``grid[i]``.

    ``brackets`` holds an interval containing each scan-sourced value.
    """

    grid: np.ndarray
    values: np.ndarray
    source: str = "analytic"
    brackets: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.source not in ("analytic", "scan"):
            raise ValueError(f"source must be 'analytic' or 'scan', got {self.source!r}")
        if self.grid.shape[0] != self.values.shape[0]:
            raise ValueError(f"{self.grid.shape[0]} grid nodes vs {self.values.shape[0]} values")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("curve values must be finite")


def quadratic_curve(b):
    """c at which x^2 + b x + c has a double root."""
    b = np.asarray(b, dtype=float)
    return b**2 / 4.0


def cubic_curve(b):
    """(c, d) at which x^3 + b x^2 + c x + d has the triple root -b/3."""
    b = np.asarray(b, dtype=float)
    return b**2 / 3.0, b**3 / 27.0


def cubic_discriminant(b, c, d):
    """Zero exactly when the cubic has a repeated real root; positive with
    one simple real root, negative with three distinct ones."""
    b, c, d = (np.asarray(x, dtype=float) for x in (b, c, d))
    return (b * c / 6.0 - b**3 / 27.0 - d / 2.0) ** 2 + (c / 3.0 - b**2 / 9.0) ** 3


# ---------------------------------------------------------------------------
# sigma_min scans


@dataclass
class FoldEstimate:
    p: float
    bracket: tuple
    sigma_min: float
    method: str


@dataclass
class SigmaScan:
    p: np.ndarray
    sigma_min: np.ndarray
    folds: list


def _interior_fold(p, sig, i):
    # quadratic through (t, sigma^2) at t = i-1, i, i+1, then p at the vertex;
    # sigma^2 rather than sigma so that a transversal zero crossing is exact
    t = np.array([-1.0, 0.0, 1.0])
    cs = np.polyfit(t, sig[i - 1 : i + 2] ** 2, 2)
    tv = -cs[1] / (2.0 * cs[0]) if cs[0] > 0 else 0.0
    tv = float(np.clip(tv, -1.0, 1.0))
    cp = np.polyfit(t, p[i - 1 : i + 2], 2)
    pv = float(np.polyval(cp, tv))
    # at a turning point p doubles back, so both neighbours can sit on one side of pv
    lo = min(float(p[i - 1 : i + 2].min()), pv)
    hi = max(float(p[i - 1 : i + 2].max()), pv)
    s2 = max(float(np.polyval(cs, tv)), 0.0)
    return FoldEstimate(pv, (lo, hi), float(np.sqrt(s2)), "vertex")


def _endpoint_fold(p, sig):
    # near a fold sigma^2 is linear in p; extrapolate from the last two samples
    s2 = sig[-2:] ** 2
    slope = (s2[1] - s2[0]) / (p[-1] - p[-2])
    pf = float(p[-1] - s2[1] / slope)
    lo, hi = sorted((pf, float(p[-1])))
    return FoldEstimate(pf, (lo, hi), 0.0, "extrapolated")


def sigma_min_scan(spec, branch, param_index=0, sigma_tol=1e-2):
    """sigma_min(F_u) at every sample of an ordered branch plus fold estimates.

    A fold is reported at each interior local minimum of sigma_min below
    ``sigma_tol * max(sigma_min)`` and at the last sample when sigma_min
    falls strictly toward it and ends below that level.
    """
    p_all = np.asarray(branch.p, dtype=float)
    u = np.asarray(branch.u, dtype=float)
    if p_all.shape[0] == 0:
        raise ValueError("empty branch")
    sig = batched_smallest_singular(spec.jac_fn(u, p_all))[0]
    p = p_all[:, param_index]
    level = sigma_tol * float(np.max(sig))
    folds = []
    for i in range(1, len(sig) - 1):
        if sig[i] <= sig[i - 1] and sig[i] < sig[i + 1] and sig[i] <= level:
            folds.append(_interior_fold(p, sig, i))
    if len(sig) >= 3 and sig[-1] < sig[-2] < sig[-3] and sig[-1] <= level and p[-1] != p[-2]:
        folds.append(_endpoint_fold(p, sig))
    return SigmaScan(p, sig, folds)


# ---------------------------------------------------------------------------
# Schnakenberg dispersion relation


def laplacian_modes(h=EX5_H, n_modes=10):
    k = np.arange(1, n_modes + 1)
    return (2.0 - 2.0 * np.cos(k * np.pi * h)) / h**2


def reaction_jacobian(a, b):
    """Kinetics Jacobian [[f_u, f_v], [g_u, g_v]] at the homogeneous state."""
    us, vs = constant_state(a, b)
    return np.array([[-1.0 + 2.0 * us * vs, us**2], [-2.0 * us * vs, -(us**2)]])


def mode_determinant(a, b, eta, d, mu):
    j = eta * reaction_jacobian(a, b)
    return (j[0, 0] - mu) * (j[1, 1] - d * mu) - j[0, 1] * j[1, 0]


def schnakenberg_dstar(a, b, eta, h=EX5_H, n_modes=10):
    """Smallest d > 0 at which some discrete mode of the linearized system
    about the homogeneous state turns singular; None if there is none."""
    if a + b <= 0:
        raise ValueError("a + b must be positive")
    (fu, fv), (gu, gv) = eta * reaction_jacobian(a, b)
    mu = laplacian_modes(h, n_modes)
    den = mu * (fu - mu)
    num = gv * (fu - mu) - fv * gu
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(den != 0, num / np.where(den != 0, den, 1.0), np.nan)
    d = d[np.isfinite(d) & (d > 0)]
    if d.size == 0:
        return None
    return float(d.min())


# ---------------------------------------------------------------------------
# metrics


def _curve_arrays(x):
    if isinstance(x, OracleCurve):
        return x.grid, x.values
    grid, values = x
    return np.asarray(grid, dtype=float), np.asarray(values, dtype=float)


def curve_error(approx, exact, lo=0.0, hi=1.5):
    """Trapezoid approximation of the integral of |approx - exact| over [lo, hi].

    Both arguments are :class:`OracleCurve` or ``(grid, values)`` pairs on
    the same grid.
    """
    ga, va = _curve_arrays(approx)
    ge, ve = _curve_arrays(exact)
    if ga.shape != ge.shape or not np.allclose(ga, ge, rtol=0, atol=1e-12):
        raise ValueError("approximate and exact curves must share a grid")
    if va.shape != ve.shape:
        raise ValueError(f"value shapes differ: {va.shape} vs {ve.shape}")
    keep = (ga >= lo - 1e-12) & (ga <= hi + 1e-12)
    if np.count_nonzero(keep) < 2:
        raise ValueError(f"fewer than two grid nodes inside [{lo}, {hi}]")
    order = np.argsort(ga[keep])
    x = ga[keep][order]
    err = np.abs(va[keep] - ve[keep])[order]
    return float(trapezoid(err, x, axis=0)) if err.ndim == 1 else trapezoid(err, x, axis=0)


# ---------------------------------------------------------------------------
# frozen reference values

EX5_FIXTURE_BS = (2.0 / 3.0, 0.7, 2.2 / 3.0)
EX5_FIXTURE_ETAS = (45.0, 50.0, 55.0)


def build_fixture(n_branches=4, p_start=20.0, step=0.05):
    """Compute every stored reference value; returns a JSON-ready dict."""
    from .datagen import trace_ex4_branches
    from .problems import ex4_bvp

    spec = ex4_bvp()
    folds = []
    for br in trace_ex4_branches(n_branches, p_start, step):
        scan = sigma_min_scan(spec, br)
        if not scan.folds:
            raise RuntimeError(f"no fold detected on {br.label}")
        f = scan.folds[-1]
        folds.append(
            {
                "label": br.label,
                "p": f.p,
                "bracket": list(f.bracket),
                "method": f.method,
                "last_sigma_min": float(scan.sigma_min[-1]),
                "nodes": len(br),
            }
        )
    a = 1.0 / 3.0
    grid = [
        {"a": a, "b": b, "eta": eta, "d_star": schnakenberg_dstar(a, b, eta)}
        for b in EX5_FIXTURE_BS
        for eta in EX5_FIXTURE_ETAS
    ]
    return {
        "meta": {
            "oracle_version": ORACLE_VERSION,
            "date": datetime.date.today().isoformat(),
            "args": {"n_branches": n_branches, "p_start": p_start, "step": step, "h_ex5": EX5_H},
        },
        "ex4_folds": folds,
        "ex5_dstar": grid,
    }


def write_fixture(path, doc=None):
    doc = build_fixture() if doc is None else doc
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return doc


def load_fixture(path=None):
    """The stored reference values (the packaged copy by default)."""
    if path is None:
        text = resources.files("bifurnet").joinpath("data", FIXTURE_NAME).read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


def ex4_fold_values(doc=None):
    doc = load_fixture() if doc is None else doc
    return [f["p"] for f in doc["ex4_folds"]]
