"""Command-line entry point: ``bifurnet gen-data | train | find | reproduce``.

Exit codes: 0 success, 2 usage, 3 bad or mismatched data, 4 no convergence.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, datagen, experiments
from .bifurcation import SearchConfig, expand_grid, sweep_bifurcation
from .errors import DimensionError, DivergenceError, GenerationError, ParseError, SearchError
from .experiments import EX5_LAMBDA
from .network import load_network, network_to_dict
from .problems import ALIASES, PROBLEM_NAMES, get_problem
from .training import TrainConfig, train_best_of_k

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NO_CONVERGENCE = 0, 2, 3, 4
THREADS_ENV = "BIFURNET_THREADS"

DEFAULT_COUNTS = {"ex1_turning": 1600, "ex2_quadratic": 25000, "ex3_cubic": 12000, "ex4_bvp": 7600, "ex5_schnakenberg": 300}
DEFAULT_REPS = {"ex2_quadratic": 5, "ex3_cubic": 4}
DEFAULT_LAMBDA = {"ex5_schnakenberg": EX5_LAMBDA}
DEFAULT_ACTIVATION = {"ex1_turning": "relu", "ex2_quadratic": "relu", "ex3_cubic": "relu"}


class UsageError(Exception):
    pass


def _problem_name(name):
    key = ALIASES.get(name, name)
    if key not in PROBLEM_NAMES:
        raise UsageError(f"unknown problem {name!r}; choose from {', '.join(sorted(ALIASES))}")
    return key


def _batch(text):
    if text == "full":
        return "full"
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("batch must be 'full' or a positive integer") from None
    if n < 1:
        raise argparse.ArgumentTypeError("batch must be 'full' or a positive integer")
    return n


def _positive_int(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def _default_threads():
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser():
    parser = argparse.ArgumentParser(prog="bifurnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bifurnet {__version__}")
    parser.add_argument("--config", help="TOML file whose keys mirror the command-line flags")
    parser.add_argument(
        "--threads", type=_positive_int, default=_default_threads(), help=f"worker threads (default ${THREADS_ENV} or 1)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a training set")
    g.add_argument("problem")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=_positive_int, help="samples (per branch for ex4)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--b", type=float, default=2.0 / 3.0, help="ex5 only")
    g.add_argument("--eta", type=float, default=50.0, help="ex5 only")
    g.add_argument("--a", type=float, default=1.0 / 3.0, help="ex5 only")

    t = sub.add_parser("train", help="fit a surrogate to a dataset")
    t.add_argument("problem")
    t.add_argument("--data", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--width", type=_positive_int, default=64)
    t.add_argument("--depth", type=_positive_int, default=1)
    t.add_argument("--activation", choices=("relu", "sigmoid"))
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--epochs", type=_positive_int, default=20000)
    t.add_argument("--warmup-epochs", type=int, default=0)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=_batch, default="full")
    t.add_argument("--k-models", type=_positive_int, default=1)
    t.add_argument("--branch", type=_positive_int, default=1, help="ex4 branch to train on")
    t.add_argument("--seed", type=int, default=0)

    f = sub.add_parser("find", help="search a trained surrogate for bifurcation points")
    f.add_argument("problem")
    f.add_argument("--model", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--freeze", action="append", default=[], metavar="NAME=VALUES")
    f.add_argument("--lambda", dest="lam", type=float)
    f.add_argument("--restarts", type=_positive_int, default=16)
    f.add_argument("--max-iters", type=int, default=5000)
    f.add_argument("--lr", type=float, default=1e-2)
    f.add_argument("--tol", type=float, default=1e-6)
    f.add_argument("--margin", type=float, default=0.1)
    f.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("reproduce", help="run a whole benchmark and write its table")
    r.add_argument("experiment", choices=sorted(experiments.RUNNERS))
    r.add_argument("--scale", choices=("desk", "paper"), default="desk")
    r.add_argument("--out-dir", required=True)
    r.add_argument("--seed", type=int, default=0)
    return parser


def _apply_config(parser, argv):
    """Load ``--config`` (if any) into parser defaults; explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"bad TOML in {known.config}: {exc}") from exc
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    top = {}
    for key, val in doc.items():
        if isinstance(val, dict):
            if key not in subparsers:
                raise UsageError(f"config section [{key}] is not a command")
            _set_defaults(subparsers[key], val, f"[{key}]")
        else:
            top[key] = val
    _set_defaults(parser, top, "top level")


def _set_defaults(parser, values, where):
    dests = {a.dest for a in parser._actions}
    out = {}
    for key, val in values.items():
        dest = {"lambda": "lam"}.get(key, key.replace("-", "_"))
        if dest not in dests or dest in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} in {where}")
        out[dest] = val
    # required flags supplied by the config file stop being required
    for a in parser._actions:
        if a.dest in out:
            a.required = False
    parser.set_defaults(**out)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _flags(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args):
    name = _problem_name(args.problem)
    count = args.count or DEFAULT_COUNTS[name]
    header = {"problem": name, "seed": args.seed, "count": count, "flags": _flags(args), "version": __version__}
    if name == "ex1_turning":
        samples = datagen.gen_ex1(count, args.seed)
    elif name in ("ex2_quadratic", "ex3_cubic"):
        reps = DEFAULT_REPS[name]
        gen = datagen.gen_ex2 if name == "ex2_quadratic" else datagen.gen_ex3
        samples = gen(math.ceil(count / reps), reps, args.seed)[:count]
        header["reps"] = reps
    elif name == "ex4_bvp":
        samples = []
        for br in datagen.gen_ex4_branches(seed=args.seed, count=count):
            for s in br.samples:
                s.label = br.label
                samples.append(s)
        header["branches"] = 4
    else:
        samples, d_box = datagen.gen_ex5(args.b, args.eta, count, args.seed, args.a)
        header["problem_kwargs"] = {"b": args.b, "eta": args.eta, "a": args.a, "d_box": list(d_box)}
    datagen.write_dataset(args.out, samples, header)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def _branch_labels(samples):
    labels = []
    for s in samples:
        lab = getattr(s, "label", None)
        if lab is not None and lab not in labels:
            labels.append(lab)
    return labels


def _training_problem(name, header, samples, branch):
    """Problem instance and the samples it is trained on, plus the keyword
    arguments needed to rebuild the instance later."""
    if name == "ex4_bvp":
        labels = _branch_labels(samples)
        if labels:
            if branch > len(labels):
                raise DimensionError(f"dataset has {len(labels)} branches, asked for branch {branch}")
            samples = [s for s in samples if getattr(s, "label", None) == labels[branch - 1]]
        p = np.array([s.p[0] for s in samples])
        kwargs = {"param_box": [[float(p.min()), float(p.max())]]}
        return get_problem(name, param_box=tuple(map(tuple, kwargs["param_box"]))), samples, kwargs
    if name == "ex5_schnakenberg":
        kwargs = dict(header.get("problem_kwargs", {}))
        if "d_box" in kwargs:
            kwargs["d_box"] = tuple(kwargs["d_box"])
        return get_problem(name, **kwargs), samples, kwargs
    return get_problem(name), samples, {}


def cmd_train(args):
    name = _problem_name(args.problem)
    header, samples = datagen.read_dataset(args.data)
    if header.get("problem", name) != name:
        raise DimensionError(f"dataset was generated for {header['problem']}, not {name}")
    spec, samples, kwargs = _training_problem(name, header, samples, args.branch)
    lam = args.lam if args.lam is not None else DEFAULT_LAMBDA.get(name, 1.0)
    activation = args.activation or DEFAULT_ACTIVATION.get(name, "sigmoid")
    try:
        config = TrainConfig(
            lam=lam,
            epochs=args.epochs,
            warmup_epochs=args.warmup_epochs,
            learning_rate=args.lr,
            seed=args.seed,
            batch=args.batch,
            k_models=args.k_models,
            width=args.width,
            depth=args.depth,
            activation=activation,
            threads=args.threads,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    net, reports = train_best_of_k(samples, spec, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    best = min(reports, key=lambda r: r.final_loss)
    meta = {"problem": name, "problem_kwargs": kwargs, "seed": args.seed, "flags": _flags(args), "lam": lam}
    _write_json(out / "model.json", {**network_to_dict(net), "meta": meta})
    _write_json(out / "report.json", {"meta": meta, "best_seed": best.seed, "reports": [r.to_dict() for r in reports]})
    hist = best.loss_history
    experiments.write_rows(
        out / "loss.csv",
        [
            {"epoch": i, "f1": float(x), "log10_f1": float(np.log10(x)) if x > 0 else float("-inf"), "seed": best.seed}
            for i, x in enumerate(hist)
        ],
    )
    _write_json(
        out / "manifest.json",
        {
            "problem": name,
            "dataset": str(args.data),
            "model": str(out / "model.json"),
            "train_config": asdict(config),
            "output_dir": str(out),
            "seed": args.seed,
        },
    )
    print(f"final f1 {best.final_loss:.3e} (seed {best.seed}); wrote {out}/model.json")
    return EXIT_OK


def parse_freeze(items):
    """``NAME=v`` / ``NAME=v1,v2`` / ``NAME=start:stop:step`` -> grid mapping."""
    grid = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"--freeze expects NAME=VALUES, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            if ":" in raw:
                start, stop, step = (float(x) for x in raw.split(":"))
                if step <= 0:
                    raise ValueError
                n = int(math.floor((stop - start) / step + 1e-9)) + 1
                vals = [round(start + i * step, 12) for i in range(n)]
            else:
                vals = [float(x) for x in raw.split(",")]
        except ValueError:
            raise UsageError(f"cannot parse values in --freeze {item!r}") from None
        grid[key.strip()] = vals
    return grid


def cmd_find(args):
    name = _problem_name(args.problem)
    with open(args.model) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.model}: invalid JSON at line {exc.lineno}") from exc
    meta = doc.get("meta", {})
    if meta.get("problem", name) != name:
        raise DimensionError(f"model was trained for {meta['problem']}, not {name}")
    kwargs = dict(meta.get("problem_kwargs", {}))
    if "param_box" in kwargs:
        kwargs["param_box"] = tuple(map(tuple, kwargs["param_box"]))
    if "d_box" in kwargs:
        kwargs["d_box"] = tuple(kwargs["d_box"])
    spec = get_problem(name, **kwargs)
    net = load_network(args.model)
    if net.n_in != spec.d or net.n_out != spec.n:
        raise DimensionError(f"model is {net.n_in}->{net.n_out} but {name} needs {spec.d}->{spec.n}")
    grid = parse_freeze(args.freeze)
    for key in grid:
        try:
            spec.param_index(key)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"{name} has no parameter {key!r}; parameters: {', '.join(spec.param_names)}") from exc
    lam = args.lam if args.lam is not None else meta.get("lam", DEFAULT_LAMBDA.get(name, 1.0))
    try:
        config = SearchConfig(
            lam=lam,
            restarts=args.restarts,
            max_iters=args.max_iters,
            learning_rate=args.lr,
            tol_f2=args.tol,
            box_margin=args.margin,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    nodes = expand_grid(grid) if grid else [{}]
    results = sweep_bifurcation(net, spec, nodes, config)
    rows = []
    all_ok = True
    for node, res in zip(nodes, results):
        if isinstance(res, SearchError):
            all_ok = False
            print(f"search failed at {node}: {res}", file=sys.stderr)
            continue
        row = {nm: float(res.p_star[i]) for i, nm in enumerate(spec.param_names)}
        row.update({f"v{i}": float(x) for i, x in enumerate(res.v_star)})
        row.update(
            {
                "f2": res.f2_value,
                "sigma_min": res.sigma_min_at_p,
                "residual_norm": res.residual_norm,
                "restart": res.restart_index,
                "converged": res.converged,
                "seed": args.seed,
            }
        )
        all_ok &= res.converged
        rows.append(row)
    if rows:
        experiments.write_rows(args.out, rows)
    _write_json(
        Path(str(args.out) + ".manifest.json"),
        {"problem": name, "model": str(args.model), "search_config": asdict(config), "seed": args.seed, "flags": _flags(args)},
    )
    for row in rows:
        coords = ", ".join(f"{nm}={row[nm]:.6g}" for nm in spec.param_names)
        print(f"{coords}  f2={row['f2']:.3e}  converged={row['converged']}")
    return EXIT_OK if all_ok and rows else EXIT_NO_CONVERGENCE


def cmd_reproduce(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = experiments.reproduce(args.experiment, args.scale, seed=args.seed, threads=args.threads)
    except (GenerationError, SearchError, DivergenceError) as exc:
        raise type(exc)(f"{args.experiment} ({args.scale}): {exc}") from exc
    result.settings = {**result.settings, "scale": args.scale, "flags": _flags(args)}
    experiments.write_result(result, out, args.seed)
    for row in result.rows:
        print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    for k, v in result.summary.items():
        print(f"{k}: {v:.6g}")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "find": cmd_find, "reproduce": cmd_reproduce}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except UsageError as exc:
        print(f"bifurnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"bifurnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, DimensionError, GenerationError, FileNotFoundError) as exc:
        print(f"bifurnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, SearchError) as exc:
        print(f"bifurnet: no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
