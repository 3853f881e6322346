"""Fully connected networks u_N(p; theta) with hand-written derivatives.

The network is ``h_0 = (p - input_offset) / input_scale``,
``h_i = act(W_i h_{i-1} + b_i)`` for the hidden layers and an affine output
``W_L h_{L-1} + b_L``. The fixed input normalization defaults to the
identity; it exists so that parameters far from unit scale (diffusion ratios
of order 50, say) do not saturate sigmoid units at initialization.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DimensionError, ParseError

ACTIVATIONS = ("relu", "sigmoid")


def activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return expit(z)
    raise ValueError(f"unknown activation {kind!r}")


def activate_prime(kind, z, a=None):
    """Derivative of the activation; ``a`` may carry the already computed
    activation value. relu'(0) is taken as 0."""
    if kind == "relu":
        return (z > 0.0).astype(float)
    if kind == "sigmoid":
        s = expit(z) if a is None else a
        return s * (1.0 - s)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class ParamGradient:
    """Per-layer arrays shaped like a network's weights and biases."""

    weights: list
    biases: list

    def flat(self):
        return np.concatenate([np.ravel(w) for w in self.weights] + [np.ravel(b) for b in self.biases])

    def __add__(self, other):
        return ParamGradient(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def scaled(self, c):
        return ParamGradient([c * w for w in self.weights], [c * b for b in self.biases])


@dataclass
class MlpNetwork:
    layer_dims: list
    weights: list
    biases: list
    activation: str = "sigmoid"
    input_offset: np.ndarray = field(default=None)
    input_scale: np.ndarray = field(default=None)

    def __post_init__(self):
        self.layer_dims = [int(x) for x in self.layer_dims]
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        d0 = self.layer_dims[0]
        if self.input_offset is None:
            self.input_offset = np.zeros(d0)
        if self.input_scale is None:
            self.input_scale = np.ones(d0)
        self.input_offset = np.asarray(self.input_offset, dtype=float).reshape(-1)
        self.input_scale = np.asarray(self.input_scale, dtype=float).reshape(-1)
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        self._check()

    def _check(self):
        dims = self.layer_dims
        if len(dims) < 2 or any(x < 1 for x in dims):
            raise DimensionError(f"layer_dims must have >= 2 positive entries, got {dims}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionError(
                f"{len(dims) - 1} layers expected, got {len(self.weights)} weights, {len(self.biases)} biases"
            )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]):
                raise DimensionError(f"weights[{i}] has shape {w.shape}, expected {(dims[i + 1], dims[i])}")
            if b.shape != (dims[i + 1],):
                raise DimensionError(f"biases[{i}] has shape {b.shape}, expected {(dims[i + 1],)}")
        if self.input_offset.shape != (dims[0],) or self.input_scale.shape != (dims[0],):
            raise DimensionError("input normalization must have one entry per input")
        if np.any(self.input_scale == 0):
            raise DimensionError("input_scale entries must be nonzero")

    @property
    def n_in(self):
        return self.layer_dims[0]

    @property
    def n_out(self):
        return self.layer_dims[-1]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return MlpNetwork(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.input_offset.copy(),
            self.input_scale.copy(),
        )

    def get_flat(self):
        return ParamGradient(self.weights, self.biases).flat()

    def set_flat(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise DimensionError(f"expected {self.n_params} parameters, got {theta.size}")
        pos = 0
        for w in self.weights:
            w[...] = theta[pos : pos + w.size].reshape(w.shape)
            pos += w.size
        for b in self.biases:
            b[...] = theta[pos : pos + b.size]
            pos += b.size

    def with_flat(self, theta):
        net = self.copy()
        net.set_flat(theta)
        return net

    def zero_gradient(self):
        return ParamGradient([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def __call__(self, p):
        return forward(self, p)


def init_network(layer_dims, activation="sigmoid", seed=0, input_offset=None, input_scale=None):
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    dims = [int(x) for x in layer_dims]
    if len(dims) < 2 or any(x < 1 for x in dims):
        raise DimensionError(f"layer_dims must have >= 2 positive entries, got {layer_dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(dims, weights, biases, activation, input_offset, input_scale)


def _as_batch(net, p):
    p = np.asarray(p, dtype=float)
    single = p.ndim <= 1
    pb = np.atleast_1d(p).reshape(1, -1) if single else p
    if pb.ndim != 2 or pb.shape[1] != net.n_in:
        raise DimensionError(f"network expects {net.n_in} inputs, got shape {p.shape}")
    return pb, single


def _forward_cache(net, pb):
    """Pre-activations and activations for a batch; ``acts[0]`` is the
    normalized input and ``acts[-1]`` the output."""
    h = (pb - net.input_offset) / net.input_scale
    pre, acts = [], [h]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if i == last else activate(net.activation, z)
        acts.append(h)
    return pre, acts


def forward(net, p):
    """Evaluate the network at one input (shape (d,)) or a batch (K, d)."""
    pb, single = _as_batch(net, p)
    _, acts = _forward_cache(net, pb)
    out = acts[-1]
    return out[0] if single else out


def backward_params(net, p, upstream):
    """Gradient of ``sum_k upstream_k . forward(net, p_k)`` w.r.t. all parameters.

    ``p`` may be a single input with ``upstream`` of shape (m,) or a batch
    (K, d) with ``upstream`` of shape (K, m); batch contributions are summed.
    """
    pb, _ = _as_batch(net, p)
    g = np.asarray(upstream, dtype=float)
    g = g.reshape(1, -1) if g.ndim <= 1 else g
    if g.shape != (pb.shape[0], net.n_out):
        raise DimensionError(f"upstream must have shape {(pb.shape[0], net.n_out)}, got {np.shape(upstream)}")
    pre, acts = _forward_cache(net, pb)
    return _backprop(net, pre, acts, g)


def _backprop(net, pre, acts, g):
    nl = len(net.weights)
    gw = [None] * nl
    gb = [None] * nl
    delta = g
    for i in range(nl - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * activate_prime(net.activation, pre[i - 1], acts[i])
    return ParamGradient(gw, gb)


def input_jacobian(net, p):
    """d(output)/d(p): shape (m, d) for one input, (K, m, d) for a batch."""
    pb, single = _as_batch(net, p)
    pre, acts = _forward_cache(net, pb)
    kk = pb.shape[0]
    # forward-mode: J holds d h_i / d p for the current layer, shape (K, d_i, d)
    jac = np.broadcast_to(np.diag(1.0 / net.input_scale), (kk, net.n_in, net.n_in))
    last = len(net.weights) - 1
    for i, w in enumerate(net.weights):
        jac = np.einsum("ij,kjl->kil", w, jac)
        if i != last:
            jac = activate_prime(net.activation, pre[i], acts[i + 1])[:, :, None] * jac
    return jac[0] if single else jac


# ---------------------------------------------------------------------------
# serialization


def network_to_dict(net):
    return {
        "layer_dims": list(net.layer_dims),
        "activation": net.activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "input_offset": net.input_offset.tolist(),
        "input_scale": net.input_scale.tolist(),
    }


def network_from_dict(doc):
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    for key in ("layer_dims", "activation", "weights", "biases"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}", field=key)
    try:
        dims = [int(x) for x in doc["layer_dims"]]
    except (TypeError, ValueError) as exc:
        raise ParseError("layer_dims must be a list of integers", field="layer_dims") from exc
    if doc["activation"] not in ACTIVATIONS:
        raise ParseError(f"activation must be one of {ACTIVATIONS}", field="activation")
    arrays = {}
    for key in ("weights", "biases"):
        try:
            arrays[key] = [np.asarray(x, dtype=float) for x in doc[key]]
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{key} must be nested numeric arrays", field=key) from exc
        if any(a.dtype == object for a in arrays[key]):
            raise ParseError(f"{key} arrays are ragged", field=key)
    extra = {}
    for key in ("input_offset", "input_scale"):
        if key in doc:
            try:
                extra[key] = np.asarray(doc[key], dtype=float)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{key} must be numeric", field=key) from exc
    net = MlpNetwork(dims, arrays["weights"], arrays["biases"], doc["activation"], **extra)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ParseError(f"layer {i} has non-finite parameters", field=f"weights[{i}]")
    return net


def save_network(net, path):
    # json writes floats with repr, which round-trips doubles exactly
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh)
        fh.write("\n")


def load_network(path):
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from exc
    return network_from_dict(doc)
