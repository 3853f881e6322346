"""End-to-end pipelines for the five benchmark problems.

Each ``run_*`` function generates data, trains, searches and scores against
the oracle, returning an :class:`ExperimentResult`. ``SCALES`` holds the two
presets used by ``bifurnet reproduce``.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import datagen, oracle
from .bifurcation import SearchConfig, find_bifurcation, sweep_bifurcation
from .errors import SearchError
from .problems import ex1_turning, ex2_quadratic, ex3_cubic, ex4_bvp, ex5_schnakenberg
from .training import TrainConfig, train_best_of_k

EX4_LAMBDAS = (20.0, 100.0, 56.0, 0.3)
EX5_LAMBDA = 1e-3

SCALES = {
    "paper": {
        "ex1": dict(count=1600, widths=(20, 40, 80, 160, 320), epochs=20000),
        "ex2": dict(n_b=5000, reps=5, width=160, epochs=20000, batch="full"),
        "ex3": dict(n_b=3000, reps=4, width=160, epochs=20000, batch="full"),
        "ex4": dict(count=7600, width=100, epochs=50000, warmup_epochs=16000, batch="full", k_models=5),
        "ex5": dict(
            bs=tuple(2.0 / 3.0 + i / 30.0 for i in range(5)),
            etas=tuple(45.0 + j / 2.0 for j in range(71)),
            count=300,
            width=64,
            epochs=50000,
            warmup_epochs=12500,
            batch="full",
            k_models=10,
        ),
    },
    "desk": {
        "ex1": dict(count=400, widths=(20, 40, 80, 160, 320), epochs=10000),
        "ex2": dict(n_b=1250, reps=5, width=160, epochs=2000, batch=250),
        "ex3": dict(n_b=750, reps=4, width=160, epochs=2000, batch=250),
        "ex4": dict(count=1900, width=100, epochs=6000, warmup_epochs=2000, batch=64, k_models=1),
        "ex5": dict(
            bs=oracle.EX5_FIXTURE_BS,
            etas=oracle.EX5_FIXTURE_ETAS,
            count=75,
            width=64,
            epochs=8000,
            warmup_epochs=2000,
            batch=16,
            k_models=1,
        ),
    },
}


@dataclass
class ExperimentResult:
    name: str
    rows: list
    summary: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def column(self, key):
        return np.array([r[key] for r in self.rows])


def write_rows(path, rows):
    """CSV with a single header line taken from the first row's keys."""
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_result(result, out_dir, seed):
    """``<name>.csv`` (one row per table entry, seed column included) and
    ``<name>_summary.json`` with the summary and every setting used."""
    rows = [{**r, "seed": seed} for r in result.rows]
    write_rows(f"{out_dir}/{result.name}.csv", rows)
    doc = {"experiment": result.name, "seed": seed, "settings": result.settings, "summary": result.summary}
    with open(f"{out_dir}/{result.name}_summary.json", "w") as fh:
        json.dump(doc, fh, indent=1, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _train(data, spec, seed, threads, **kw):
    cfg = TrainConfig(seed=seed, threads=threads, **kw)
    net, reports = train_best_of_k(data, spec, cfg)
    return net, min(r.final_loss for r in reports), cfg


def run_ex1(widths=(20, 80, 320), count=1600, epochs=20000, lam=1.0, activation="relu", seed=0, threads=1):
    """Width study for the turning point of x^2 - p at p = 0."""
    spec = ex1_turning()
    data = datagen.gen_ex1(count, seed)
    search = SearchConfig(lam=lam, seed=seed)
    rows = []
    for width in widths:
        net, f1, _ = _train(data, spec, seed, threads, lam=lam, epochs=epochs, width=width, activation=activation)
        res = find_bifurcation(net, spec, search)
        rows.append(
            {
                "width": width,
                "p_star": float(res.p_star[0]),
                "abs_error": abs(float(res.p_star[0])),
                "f1": f1,
                "f2": res.f2_value,
                "sigma_min": res.sigma_min_at_p,
                "converged": res.converged,
            }
        )
    settings = dict(widths=list(widths), count=count, epochs=epochs, lam=lam, activation=activation)
    return ExperimentResult("ex1_width_table", rows, {}, settings)


def _sweep_rows(results, names):
    out = []
    for r in results:
        if isinstance(r, SearchError):
            raise r
        out.append({nm: float(r.p_star[i]) for i, nm in enumerate(names)} | {"f2": r.f2_value, "converged": r.converged})
    return out


def run_ex2(
    b_grid=None, n_b=1250, reps=5, width=160, epochs=2000, batch=250, lam=1.0, activation="relu", seed=0, threads=1
):
    """c*(b) along the double-root curve of x^2 + b x + c."""
    spec = ex2_quadratic()
    b_grid = np.round(np.arange(-20, 21) / 10.0, 12) if b_grid is None else np.asarray(b_grid, dtype=float)
    data = datagen.gen_ex2(n_b, reps, seed)
    net, f1, _ = _train(
        data, spec, seed, threads, lam=lam, epochs=epochs, width=width, activation=activation, batch=batch
    )
    found = _sweep_rows(sweep_bifurcation(net, spec, {"b": b_grid}, SearchConfig(lam=lam, seed=seed)), ("b", "c"))
    exact = oracle.quadratic_curve(b_grid)
    rows = [
        {"b": float(b), "c_star": r["c"], "c_exact": float(ce), "abs_error": abs(r["c"] - ce), "f2": r["f2"]}
        for b, r, ce in zip(b_grid, found, exact)
    ]
    summary = {"max_abs_error": max(r["abs_error"] for r in rows), "f1": f1}
    settings = dict(n_b=n_b, reps=reps, width=width, epochs=epochs, batch=batch, lam=lam, activation=activation)
    return ExperimentResult("ex2_curve", rows, summary, settings)


def run_ex3(
    b_grid=None, n_b=750, reps=4, width=160, epochs=2000, batch=250, lam=1.0, activation="relu", seed=0, threads=1
):
    """(c*(b), d*(b)) on the triple-root curve, scored by the L1 curve error on [0, 3/2]."""
    spec = ex3_cubic()
    b_grid = np.linspace(0.0, 1.5, 31) if b_grid is None else np.asarray(b_grid, dtype=float)
    data = datagen.gen_ex3(n_b, reps, seed)
    net, f1, _ = _train(
        data, spec, seed, threads, lam=lam, epochs=epochs, width=width, activation=activation, batch=batch
    )
    found = _sweep_rows(
        sweep_bifurcation(net, spec, {"b": b_grid}, SearchConfig(lam=lam, seed=seed)), ("b", "c", "d")
    )
    ce, de = oracle.cubic_curve(b_grid)
    cs = np.array([r["c"] for r in found])
    ds = np.array([r["d"] for r in found])
    rows = [
        {"b": float(b), "c_star": float(c), "d_star": float(d), "c_exact": float(c0), "d_exact": float(d0)}
        for b, c, d, c0, d0 in zip(b_grid, cs, ds, ce, de)
    ]
    summary = {
        "c_curve_error": oracle.curve_error((b_grid, cs), (b_grid, ce)),
        "d_curve_error": oracle.curve_error((b_grid, ds), (b_grid, de)),
        "f1": f1,
    }
    settings = dict(n_b=n_b, reps=reps, width=width, epochs=epochs, batch=batch, lam=lam, activation=activation)
    return ExperimentResult("ex3_curve_errors", rows, summary, settings)


def run_ex4(
    lambdas=EX4_LAMBDAS,
    branches=None,
    count=1900,
    width=100,
    epochs=6000,
    warmup_epochs=2000,
    batch=64,
    k_models=1,
    activation="sigmoid",
    seed=0,
    threads=1,
):
    """Fold of each nontrivial BVP branch, scored against the stored scan values.

    Every branch gets its own network trained on its samples; the search box
    is that branch's parameter range.
    """
    refs = oracle.ex4_fold_values()
    branch_data = datagen.gen_ex4_branches(seed=seed, count=count, n_branches=len(lambdas))
    picked = range(len(lambdas)) if branches is None else branches
    rows = []
    for i in picked:
        br, lam = branch_data[i], lambdas[i]
        spec = ex4_bvp(param_box=((float(br.p.min()), float(br.p.max())),))
        net, f1, _ = _train(
            list(br.samples),
            spec,
            seed,
            threads,
            lam=lam,
            epochs=epochs,
            warmup_epochs=warmup_epochs,
            width=width,
            activation=activation,
            batch=batch,
            k_models=k_models,
        )
        res = find_bifurcation(net, spec, SearchConfig(lam=lam, seed=seed))
        p = float(res.p_star[0])
        rows.append(
            {
                "branch": i + 1,
                "lambda": lam,
                "p_star": p,
                "p_oracle": refs[i],
                "abs_error": abs(p - refs[i]),
                "f1": f1,
                "f2": res.f2_value,
                "sigma_min": res.sigma_min_at_p,
            }
        )
    settings = dict(
        lambdas=list(lambdas),
        count=count,
        width=width,
        epochs=epochs,
        warmup_epochs=warmup_epochs,
        batch=batch,
        k_models=k_models,
        activation=activation,
    )
    return ExperimentResult("ex4_fold_table", rows, {}, settings)


def run_ex5(
    bs=oracle.EX5_FIXTURE_BS,
    etas=oracle.EX5_FIXTURE_ETAS,
    count=75,
    width=64,
    epochs=8000,
    warmup_epochs=2000,
    batch=16,
    k_models=1,
    lam=EX5_LAMBDA,
    a=1.0 / 3.0,
    activation="sigmoid",
    seed=0,
    threads=1,
):
    """d* over a (b, eta) grid, one network per node, against the dispersion relation."""
    rows = []
    for i, b in enumerate(bs):
        for j, eta in enumerate(etas):
            node_seed = seed + 1000 * i + j
            data, (lo, hi) = datagen.gen_ex5(b, eta, count, node_seed, a)
            spec = ex5_schnakenberg(b=b, eta=eta, a=a, d_box=(lo, hi))
            net, f1, _ = _train(
                data,
                spec,
                node_seed,
                threads,
                lam=lam,
                epochs=epochs,
                warmup_epochs=warmup_epochs,
                width=width,
                activation=activation,
                batch=batch,
                k_models=k_models,
            )
            res = find_bifurcation(net, spec, SearchConfig(lam=lam, seed=node_seed))
            d = float(res.p_star[0])
            ref = oracle.schnakenberg_dstar(a, b, eta)
            rows.append(
                {
                    "b": float(b),
                    "eta": float(eta),
                    "d_star": d,
                    "d_oracle": ref,
                    "rel_error": abs(d - ref) / ref,
                    "f1": f1,
                    "f2": res.f2_value,
                }
            )
    settings = dict(
        bs=list(bs),
        etas=list(etas),
        count=count,
        width=width,
        epochs=epochs,
        warmup_epochs=warmup_epochs,
        batch=batch,
        k_models=k_models,
        lam=lam,
        a=a,
        activation=activation,
    )
    return ExperimentResult("ex5_grid", rows, {"max_rel_error": max(r["rel_error"] for r in rows)}, settings)


RUNNERS = {"ex1": run_ex1, "ex2": run_ex2, "ex3": run_ex3, "ex4": run_ex4, "ex5": run_ex5}


def reproduce(experiment, scale="desk", seed=0, threads=1):
    if experiment not in RUNNERS:
        raise ValueError(f"unknown experiment {experiment!r}; choose from {sorted(RUNNERS)}")
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {sorted(SCALES)}")
    return RUNNERS[experiment](seed=seed, threads=threads, **SCALES[scale][experiment])
