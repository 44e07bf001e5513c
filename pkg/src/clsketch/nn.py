"""Fully connected ReLU network with hand-rolled reverse-mode gradients.

The network is a plain MLP: ReLU on every hidden layer, affine final layer
(no activation, so the squared output norm can represent unbounded
energies).  Parameters live in one flat float64 vector, laid out layer by
layer as row-major weights followed by biases; that layout is part of the
model-file contract (io module).

The ReLU derivative at exactly zero is taken to be zero, which keeps all
gradients deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, ShapeError


def param_count(layer_dims) -> int:
    """Number of parameters of an MLP with the given layer sizes."""
    dims = list(layer_dims)
    return sum(dims[k] * dims[k + 1] + dims[k + 1] for k in range(len(dims) - 1))


class ReluNet:
    """Immutable ReLU MLP over a flat parameter vector.

    Weight matrices are exposed as read-only views into ``params`` so a
    single net can be shared freely between concurrent evaluations.
    """

    def __init__(self, layer_dims, params):
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2:
            raise ConfigurationError("need at least an input and an output layer")
        if any(d < 1 for d in dims):
            raise ConfigurationError(f"zero-sized layer in {dims}")
        params = np.array(params, dtype=np.float64, copy=True, order="C")
        d0 = param_count(dims)
        if params.ndim != 1 or params.size != d0:
            raise ShapeError(f"expected {d0} parameters for dims {dims}, got {params.size}")
        self.layer_dims = dims
        self.params = params
        self.params.setflags(write=False)
        self.d0 = d0

        self.weights = []
        self.biases = []
        off = 0
        for k in range(len(dims) - 1):
            nin, nout = dims[k], dims[k + 1]
            self.weights.append(params[off : off + nin * nout].reshape(nout, nin))
            off += nin * nout
            self.biases.append(params[off : off + nout])
            off += nout

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    def with_params(self, params) -> "ReluNet":
        """New net with the same architecture and different parameters."""
        return ReluNet(self.layer_dims, params)


def init_network(layer_dims, seed) -> ReluNet:
    """Glorot-uniform weights, zero biases; bit-reproducible under ``seed``."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigurationError(f"invalid layer dims {dims}")
    rng = np.random.default_rng(seed)
    parts = []
    for k in range(len(dims) - 1):
        nin, nout = dims[k], dims[k + 1]
        bound = np.sqrt(6.0 / (nin + nout))
        parts.append(rng.uniform(-bound, bound, size=nin * nout))
        parts.append(np.zeros(nout))
    return ReluNet(dims, np.concatenate(parts))


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"input shape {x.shape} incompatible with input dim {net.input_dim}")
    return x, single


def forward_batch(net, x):
    """Evaluate the net on an (N, d_in) batch; returns (N, d_out)."""
    x, _ = _as_batch(net, x)
    a = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w.T + b
        if k != last:
            np.maximum(a, 0.0, out=a)
    return a


def forward(net, x):
    """Evaluate the net on a single input vector."""
    x, single = _as_batch(net, x)
    out = forward_batch(net, x)
    return out[0] if single else out


def _forward_trace(net, x):
    """Forward pass keeping every post-activation layer (for backprop)."""
    acts = [x]
    a = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w.T + b
        if k != last:
            np.maximum(a, 0.0, out=a)
        acts.append(a)
    return acts


def _backprop(net, x, cotangents):
    """Shared VJP core: returns (flat parameter gradient, input gradients).

    The parameter gradient is the gradient of sum_i <f(x_i), c_i>;  input
    gradients come back with one row per batch point.  Reductions are plain
    matrix products, so the summation order is fixed.
    """
    acts = _forward_trace(net, x)
    grad = np.zeros(net.d0)
    gw = []
    gb = []
    off = net.d0
    delta = np.asarray(cotangents, dtype=np.float64)
    if delta.shape != acts[-1].shape:
        raise ShapeError(f"cotangent shape {delta.shape} != output shape {acts[-1].shape}")
    for k in range(len(net.weights) - 1, -1, -1):
        # hidden activations are ReLU outputs: active exactly where > 0
        if k != len(net.weights) - 1:
            delta = delta * (acts[k + 1] > 0.0)
        gw.append(delta.T @ acts[k])
        gb.append(delta.sum(axis=0))
        delta = delta @ net.weights[k]
    for k in range(len(net.weights) - 1, -1, -1):
        w_grad = gw[len(net.weights) - 1 - k]
        b_grad = gb[len(net.weights) - 1 - k]
        off -= b_grad.size
        grad[off : off + b_grad.size] = b_grad
        off -= w_grad.size
        grad[off : off + w_grad.size] = w_grad.ravel()
    return grad, delta


def param_gradient_batch(net, points, cotangents):
    """Gradient w.r.t. params of sum_i <f(p_i), c_i>."""
    points = np.asarray(points, dtype=np.float64)
    cotangents = np.asarray(cotangents, dtype=np.float64)
    if points.ndim == 1:
        points = points[None, :]
    if cotangents.ndim == 1:
        cotangents = cotangents[None, :]
    if len(points) != len(cotangents):
        raise ShapeError(f"{len(points)} points but {len(cotangents)} cotangents")
    points, _ = _as_batch(net, points)
    grad, _ = _backprop(net, points, cotangents)
    return grad


def input_gradient(net, x, cotangent):
    """J_x f(x)^T c for a single input."""
    x, single = _as_batch(net, x)
    cot = np.asarray(cotangent, dtype=np.float64)
    if single:
        cot = cot[None, :]
    _, gx = _backprop(net, x, cot)
    return gx[0] if single else gx


def input_gradient_batch(net, x, cotangents):
    """Row-wise J_x f(x_i)^T c_i for an (N, d_in) batch."""
    x, _ = _as_batch(net, x)
    _, gx = _backprop(net, x, np.asarray(cotangents, dtype=np.float64))
    return gx


def lipschitz_upper_bound(net):
    """Product of layer spectral norms; a global Lipschitz bound of f."""
    bound = 1.0
    for w in net.weights:
        bound *= np.linalg.norm(w, 2)
    return bound
