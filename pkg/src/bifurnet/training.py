"""Fitting the surrogate u_N(p) to solution samples plus the equation residual."""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DimensionError, DivergenceError
from .network import _as_batch, _backprop, _forward_cache, init_network


@dataclass
class TrainConfig:
    """Stage-one settings.

    ``lam`` weights the residual term, ``epochs`` counts optimizer passes
    over the data, ``batch`` is ``"full"`` or a minibatch size. The first
    ``warmup_epochs`` of them fit the data alone (residual weight 0). ``width``,
    ``depth`` and ``activation`` describe the networks built by
    :func:`train_best_of_k`.
    """

    lam: float = 1.0
    epochs: int = 20000
    learning_rate: float = 1e-3
    seed: int = 0
    batch: Union[str, int] = "full"
    warmup_epochs: int = 0
    k_models: int = 1
    width: int = 64
    depth: int = 1
    activation: str = "sigmoid"
    normalize_inputs: bool = True
    threads: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("warmup_epochs must be in [0, epochs)")
        if self.k_models < 1:
            raise ValueError("k_models must be >= 1")
        if self.width < 1 or self.depth < 1:
            raise ValueError("width and depth must be >= 1")
        if self.batch != "full" and (not isinstance(self.batch, int) or self.batch < 1):
            raise ValueError("batch must be 'full' or a positive integer")


@dataclass
class TrainReport:
    loss_history: np.ndarray
    final_loss: float
    wall_time: float
    seed: int
    best_epoch: int = 0
    config: Optional[dict] = field(default=None)

    def to_dict(self):
        return {
            "seed": self.seed,
            "final_loss": self.final_loss,
            "best_epoch": self.best_epoch,
            "wall_time": self.wall_time,
            "epochs": int(len(self.loss_history)),
            "loss_history": [float(x) for x in self.loss_history],
            "config": self.config,
        }


def as_arrays(data, spec=None):
    """``(P, U)`` stacks from a list of samples or a ``(P, U)`` pair."""
    if isinstance(data, tuple) and len(data) == 2:
        p, u = (np.asarray(x, dtype=float) for x in data)
    else:
        data = list(data)
        if not data:
            raise ValueError("empty dataset")
        p = np.array([np.atleast_1d(s.p) for s in data], dtype=float)
        u = np.array([np.atleast_1d(s.u) for s in data], dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if u.ndim == 1:
        u = u[:, None]
    if p.shape[0] == 0:
        raise ValueError("empty dataset")
    if p.shape[0] != u.shape[0]:
        raise DimensionError(f"{p.shape[0]} parameters vs {u.shape[0]} states")
    if spec is not None and (p.shape[1] != spec.d or u.shape[1] != spec.n):
        raise DimensionError(
            f"data has d={p.shape[1]}, n={u.shape[1]} but {spec.name} needs d={spec.d}, n={spec.n}"
        )
    return p, u


def _loss_and_upstream(net, p, u, spec, lam, need_grad=True):
    # overflow shows up as a non-finite loss, which callers turn into DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        return _loss_terms(net, p, u, spec, lam, need_grad)


def _loss_terms(net, p, u, spec, lam, need_grad):
    pre, acts = _forward_cache(net, p)
    un = acts[-1]
    k = p.shape[0]
    diff = un - u
    fit = np.sum(diff**2, axis=1)
    if lam > 0:
        r = spec.residual_fn(un, p)
        loss = float(np.mean(fit + 0.5 * lam * np.sum(r**2, axis=1)))
    else:
        r = None
        loss = float(np.mean(fit))
    if not need_grad:
        return loss, None, None, None
    g = 2.0 * diff
    if r is not None:
        jac = spec.jac_fn(un, p)
        g = g + lam * np.einsum("kij,ki->kj", jac, r)
    return loss, g / k, pre, acts


def loss_f1(net, data, spec, lam):
    """Mean over samples of ``||u_N(p_i) - u_i||^2 + lam/2 ||F(u_N(p_i), p_i)||^2``."""
    p, u = as_arrays(data, spec)
    _as_batch(net, p)
    return _loss_and_upstream(net, p, u, spec, lam, need_grad=False)[0]


def grad_f1(net, data, spec, lam):
    """Exact gradient of :func:`loss_f1` with respect to the network parameters."""
    p, u = as_arrays(data, spec)
    _as_batch(net, p)
    _, g, pre, acts = _loss_and_upstream(net, p, u, spec, lam)
    return _backprop(net, pre, acts, g)


class Adam:
    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, x, g):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return x - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train(net, data, spec, config):
    """Minimize f1 with full-batch (or minibatch) Adam.

    Returns the parameters with the lowest loss seen, not the last iterate,
    together with a :class:`TrainReport`. ``net`` is left untouched.
    """
    p, u = as_arrays(data, spec)
    _as_batch(net, p)
    work = net.copy()
    theta = work.get_flat()
    opt = Adam(theta.size, config.learning_rate, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)
    history = np.empty(config.epochs)
    best_loss, best_theta, best_epoch = np.inf, theta.copy(), 0
    k = p.shape[0]
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        lam = 0.0 if epoch < config.warmup_epochs else config.lam
        if epoch == config.warmup_epochs:
            # the objective changes here; earlier iterates are not comparable
            best_loss = np.inf
        if config.batch == "full" or config.batch >= k:
            loss, g, pre, acts = _loss_and_upstream(work, p, u, spec, lam)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            if loss < best_loss:
                best_loss, best_theta, best_epoch = loss, theta.copy(), epoch
            theta = opt.step(theta, _backprop(work, pre, acts, g).flat())
            work.set_flat(theta)
        else:
            order = rng.permutation(k)
            losses = []
            for start in range(0, k, config.batch):
                idx = order[start : start + config.batch]
                bl, g, pre, acts = _loss_and_upstream(work, p[idx], u[idx], spec, lam)
                if not np.isfinite(bl):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch=epoch)
                losses.append(bl * idx.size)
                theta = opt.step(theta, _backprop(work, pre, acts, g).flat())
                work.set_flat(theta)
            loss = sum(losses) / k
            full = loss_f1(work, (p, u), spec, lam)
            if full < best_loss:
                best_loss, best_theta, best_epoch = full, theta.copy(), epoch + 1
        history[epoch] = loss
    final = loss_f1(work, (p, u), spec, config.lam)
    if not np.isfinite(final):
        raise DivergenceError(f"non-finite loss after epoch {config.epochs - 1}", epoch=config.epochs)
    if final < best_loss:
        best_loss, best_theta, best_epoch = final, theta.copy(), config.epochs
    work.set_flat(best_theta)
    report = TrainReport(
        loss_history=history,
        final_loss=float(best_loss),
        wall_time=time.perf_counter() - t0,
        seed=config.seed,
        best_epoch=best_epoch,
        config=asdict(config),
    )
    return work, report


def input_normalization(p, box=None):
    """Midpoint/half-width of the data range (or of ``box``) per input."""
    if box is not None:
        box = np.asarray(box, dtype=float).reshape(-1, 2)
        lo, hi = box[:, 0], box[:, 1]
    else:
        lo, hi = p.min(axis=0), p.max(axis=0)
    scale = 0.5 * (hi - lo)
    scale[scale <= 0] = 1.0
    return 0.5 * (hi + lo), scale


def build_network(spec, config, seed, p=None, u=None):
    """Fresh network for ``spec``; with data, inputs are normalized to the
    data range and the output bias starts at the mean state."""
    dims = [spec.d] + [config.width] * config.depth + [spec.n]
    offset = scale = None
    if config.normalize_inputs:
        offset, scale = input_normalization(p) if p is not None else input_normalization(None, spec.param_box)
    net = init_network(dims, config.activation, seed, offset, scale)
    if u is not None:
        # starting near zero output would put problems with a trivial
        # solution u = 0 inside its basin once the residual term is on
        net.biases[-1][:] = np.mean(u, axis=0)
    return net


def train_best_of_k(data, spec, config):
    """Train ``config.k_models`` networks with seeds ``seed, seed+1, ...`` and
    keep the one with the smallest final loss.

    Returns ``(best_network, reports)`` with reports in seed order.
    """
    p, u = as_arrays(data, spec)

    def one(i):
        cfg = TrainConfig(**{**asdict(config), "seed": config.seed + i, "k_models": 1})
        net = build_network(spec, cfg, cfg.seed, p, u)
        try:
            return train(net, (p, u), spec, cfg)
        except DivergenceError as exc:
            return exc

    seeds = range(config.k_models)
    if config.threads > 1 and config.k_models > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(i) for i in seeds]
    good = [r for r in results if not isinstance(r, Exception)]
    if not good:
        raise DivergenceError(f"all {config.k_models} trainings diverged", epoch=results[0].epoch)
    best = min(range(len(good)), key=lambda i: good[i][1].final_loss)
    return good[best][0], [r[1] for r in good]
