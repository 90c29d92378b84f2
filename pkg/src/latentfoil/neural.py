"""Dense networks in plain numpy: forward, backprop, Adam, and the Cp regressor.

Rows are samples: a layer maps ``x`` of shape ``(n, in)`` to ``x @ W.T + b``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LEAKY_SLOPE = 0.01
MODEL_FORMAT = "latentfoil-model/1"

OUTPUT_NAMES = ("r_le", "x_up", "z_up", "x_lo", "z_lo", "z_te", "l_over_d", "cd", "cm", "area")


class TrainingError(RuntimeError):
    """Empty data, mismatched architecture, or a non-finite loss."""


# --------------------------------------------------------------------------
# activations and layers
# --------------------------------------------------------------------------

def leaky_relu(x, slope: float = LEAKY_SLOPE):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, slope * x)  # valid for 0 < slope < 1


def leaky_relu_grad(x, slope: float = LEAKY_SLOPE):
    # derivative taken as 1 at x == 0
    return np.where(np.asarray(x) >= 0, 1.0, slope)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


_ACTIVATIONS = {
    "leaky_relu": (leaky_relu, lambda pre, post: leaky_relu_grad(pre)),
    "linear": (lambda x: x, lambda pre, post: 1.0),
    "sigmoid": (_sigmoid, lambda pre, post: post * (1.0 - post)),
}


@dataclass
class DenseLayer:
    w: np.ndarray
    b: np.ndarray
    activation: str = "leaky_relu"

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ValueError(f"inconsistent layer shapes w={self.w.shape} b={self.b.shape}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self) -> int:
        return self.w.shape[1]

    @property
    def n_out(self) -> int:
        return self.w.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.w.copy(), self.b.copy(), self.activation)


def affine_forward(layer: DenseLayer, x):
    """``W x + b`` followed by the layer activation; ``x`` may be a row batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layer.n_in:
        raise ValueError(f"input dim {x.shape[-1]} != layer input {layer.n_in}")
    return _ACTIVATIONS[layer.activation][0](x @ layer.w.T + layer.b)


def he_layer(n_in: int, n_out: int, rng: np.random.Generator, activation="leaky_relu") -> DenseLayer:
    w = rng.standard_normal((n_out, n_in)) * math.sqrt(2.0 / n_in)
    return DenseLayer(w, np.zeros(n_out), activation)


class Network:
    """A stack of dense layers with cached forward passes for backprop.

    All weights and biases live in one flat buffer (``flat``); the layer
    arrays are views into it, and ``backward`` fills the matching views of
    ``grad_flat``. Optimisers can then update everything in a single pass.
    """

    def __init__(self, layers):
        self.layers = list(layers)
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer dims do not chain: {a.n_out} -> {b.n_in}")
        size = sum(ly.w.size + ly.b.size for ly in self.layers)
        self.flat = np.empty(size)
        self.grad_flat = np.zeros(size)
        self._grad_views = []
        pos = 0
        for ly in self.layers:
            for name in ("w", "b"):
                arr = getattr(ly, name)
                view = self.flat[pos:pos + arr.size].reshape(arr.shape)
                view[...] = arr
                setattr(ly, name, view)
                self._grad_views.append(self.grad_flat[pos:pos + arr.size].reshape(arr.shape))
                pos += arr.size

    @classmethod
    def he(cls, dims, rng, hidden="leaky_relu", output="leaky_relu") -> "Network":
        acts = [hidden] * (len(dims) - 2) + [output]
        return cls([he_layer(i, o, rng, a) for i, o, a in zip(dims[:-1], dims[1:], acts)])

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].n_in] + [ly.n_out for ly in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for ly in self.layers:
            out += [ly.w, ly.b]
        return out

    def copy(self) -> "Network":
        return Network([ly.copy() for ly in self.layers])

    def forward(self, x, keep: bool = False):
        x = np.asarray(x, dtype=float)
        cache = []
        for ly in self.layers:
            pre = x @ ly.w.T + ly.b
            post = _ACTIVATIONS[ly.activation][0](pre)
            if keep:
                cache.append((x, pre, post))
            x = post
        return (x, cache) if keep else x

    def backward(self, grad_out, cache, input_grad: bool = True, preactivation: bool = False):
        """Gradients of a scalar loss given dL/d(output).

        Returns (per-array gradient views into ``grad_flat``, dL/dx). The
        views are overwritten by the next call. ``input_grad=False`` skips
        dL/dx and returns None in its place. With ``preactivation`` the
        incoming gradient is taken w.r.t. the last layer's pre-activation,
        for losses fused with their output activation.
        """
        views = self._grad_views
        g = grad_out
        last = len(self.layers) - 1
        for k in range(last, -1, -1):
            ly = self.layers[k]
            x, pre, post = cache[k]
            if not (preactivation and k == last):
                g = g * _ACTIVATIONS[ly.activation][1](pre, post)
            np.matmul(g.T, x, out=views[2 * k])
            np.sum(g, axis=0, out=views[2 * k + 1])
            g = g @ ly.w if (k or input_grad) else None
        return views, g

    def to_dict(self) -> list[dict]:
        return [{"n_in": ly.n_in, "n_out": ly.n_out, "activation": ly.activation,
                 "w": ly.w.ravel().tolist(), "b": ly.b.tolist()} for ly in self.layers]

    @classmethod
    def from_dict(cls, data) -> "Network":
        return cls([DenseLayer(np.array(d["w"], dtype=float).reshape(d["n_out"], d["n_in"]),
                               np.array(d["b"], dtype=float), d["activation"]) for d in data])


def mse(pred, target) -> float:
    return float(np.mean((pred - target) ** 2))


def backprop(net: Network, inputs, targets):
    """Mean-squared-error loss over the batch and its exact parameter gradients."""
    out, cache = net.forward(inputs, keep=True)
    diff = out - np.asarray(targets, dtype=float)
    loss = float(np.mean(diff ** 2))
    if not math.isfinite(loss):
        raise TrainingError("non-finite loss")
    grads, _ = net.backward(2.0 * diff / diff.size, cache, input_grad=False)
    return loss, grads


# --------------------------------------------------------------------------
# optimisation
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scratch: list | None = field(default=None, repr=False)

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params, grads, lr: float) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    if state.scratch is None:
        state.scratch = [np.empty_like(m) for m in state.m]
    for p, g, m, v, tmp in zip(params, grads, state.m, state.v, state.scratch):
        m *= b1
        np.multiply(g, 1.0 - b1, out=tmp)
        m += tmp
        v *= b2
        np.square(g, out=tmp)
        tmp *= 1.0 - b2
        v += tmp
        np.multiply(v, 1.0 / c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.eps
        np.divide(m, tmp, out=tmp)
        tmp *= lr / c1
        p -= tmp


@dataclass
class TrainConfig:
    initial_lr: float = 1e-3
    gamma: float = 0.8
    step_epochs: int = 3000
    epochs: int = 30000
    batch_size: int = 100
    seed: int = 0
    init_mode: str = "he_init"  # or "transfer"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.step_epochs <= 0:
            raise ValueError("epochs, batch_size and step_epochs must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.init_mode not in ("he_init", "transfer"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")

    def lr_at(self, epoch: int) -> float:
        return self.initial_lr * self.gamma ** (epoch // self.step_epochs)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


# Paper hyperparameters: first active-learning iteration, then transfer iterations.
MLP_FIRST = TrainConfig(gamma=0.8, step_epochs=3000, epochs=30000)
MLP_TRANSFER = TrainConfig(gamma=0.8, step_epochs=3000, epochs=10000, init_mode="transfer")


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


# --------------------------------------------------------------------------
# normalisation
# --------------------------------------------------------------------------

@dataclass
class Normalizer:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, data) -> "Normalizer":
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or len(data) == 0:
            raise TrainingError("cannot fit a normalizer on empty data")
        return cls(data.min(axis=0), data.max(axis=0))

    @property
    def _span(self):
        span = self.hi - self.lo
        return np.where(span > 0, span, 1.0)

    def normalize(self, x):
        x = np.asarray(x, dtype=float)
        out = (x - self.lo) / self._span
        return np.where(self.hi > self.lo, out, 0.5)

    def denormalize(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(self.hi > self.lo, self.lo + y * self._span, self.lo)

    def to_dict(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Normalizer":
        return cls(np.array(d["min"], dtype=float), np.array(d["max"], dtype=float))


def normalize(normalizer: Normalizer, row):
    return normalizer.normalize(row)


def denormalize(normalizer: Normalizer, row):
    return normalizer.denormalize(row)


# --------------------------------------------------------------------------
# Cp -> (shape, QoI) regressor
# --------------------------------------------------------------------------

MLP_DIMS = (199, 100, 100, 10)


@dataclass
class MlpModel:
    net: Network
    input_norm: Normalizer
    output_norm: Normalizer
    meta: dict = field(default_factory=dict)

    def predict_normalized(self, x_norm):
        return self.net.forward(x_norm)

    def predict(self, cp):
        """Raw Cp rows -> raw (shape params, QoI) rows."""
        return self.output_norm.denormalize(self.net.forward(self.input_norm.normalize(cp)))

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "kind": "mlp", "dims": self.net.dims,
                "output_names": list(OUTPUT_NAMES), "layers": self.net.to_dict(),
                "input_normalizer": self.input_norm.to_dict(),
                "output_normalizer": self.output_norm.to_dict(), "meta": self.meta}

    @classmethod
    def from_dict(cls, d) -> "MlpModel":
        if d.get("format") != MODEL_FORMAT or d.get("kind") != "mlp":
            raise ValueError("not a latentfoil MLP model document")
        return cls(Network.from_dict(d["layers"]), Normalizer.from_dict(d["input_normalizer"]),
                   Normalizer.from_dict(d["output_normalizer"]), d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "MlpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_network(net: Network, x, y, config: TrainConfig, rng: np.random.Generator,
                log_every: int = 0, logger=None) -> list[float]:
    """Mini-batch Adam on MSE with the step schedule; returns per-epoch train loss."""
    params, grads = [net.flat], [net.grad_flat]
    state = AdamState.zeros_like(params)
    history = []
    n = len(x)
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        total = 0.0
        for bi, idx in enumerate(minibatches(n, config.batch_size, rng)):
            out, cache = net.forward(x[idx], keep=True)
            diff = out - y[idx]
            loss = float(np.mean(diff ** 2))
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi}")
            net.backward(2.0 * diff / diff.size, cache, input_grad=False)
            adam_step(state, params, grads, lr)
            total += loss * len(idx)
        history.append(total / n)
        if logger is not None and log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d loss %.3e lr %.2e", epoch + 1, history[-1], lr)
    return history


def train_mlp(train_x, train_y, config: TrainConfig = MLP_FIRST, prior: MlpModel | None = None,
              test_x=None, test_y=None, output_activation: str = "leaky_relu",
              logger=None) -> MlpModel:
    """Train the Cp regressor; ``prior`` with ``init_mode='transfer'`` copies all but the last layer."""
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y, dtype=float)
    if len(train_x) == 0:
        raise TrainingError("empty training split")
    rng = np.random.default_rng(config.seed)
    in_norm = Normalizer.fit(train_x)
    out_norm = Normalizer.fit(train_y)
    dims = [train_x.shape[1], *MLP_DIMS[1:-1], train_y.shape[1]]

    if config.init_mode == "transfer":
        if prior is None:
            raise TrainingError("transfer mode needs a prior model")
        if prior.net.dims != dims:
            raise TrainingError(f"prior architecture {prior.net.dims} != {dims}")
        layers = [ly.copy() for ly in prior.net.layers[:-1]]
        last = prior.net.layers[-1]
        layers.append(he_layer(last.n_in, last.n_out, rng, last.activation))
        net = Network(layers)
    else:
        net = Network.he(dims, rng, output=output_activation)

    xn = in_norm.normalize(train_x)
    yn = out_norm.normalize(train_y)
    history = fit_network(net, xn, yn, config, rng, log_every=max(config.epochs // 10, 1),
                          logger=logger)
    meta = {"seed": config.seed, "epochs": config.epochs, "init_mode": config.init_mode,
            "train_mse": float(mse(net.forward(xn), yn)),
            "final_epoch_loss": history[-1] if history else None}
    if test_x is not None and len(test_x):
        meta["test_mse"] = mse(net.forward(in_norm.normalize(test_x)), out_norm.normalize(test_y))
    return MlpModel(net, in_norm, out_norm, meta)
