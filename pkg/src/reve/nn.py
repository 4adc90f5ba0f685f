"""Layers, encoder/decoder containers, classification loss and SGD with momentum."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .linalg import DEFAULT_RANK_TOLERANCE, CompactSvd, ProjectionMatrix, compact_svd, kernel_complement_projection
from .tensor import Tensor

ACTIVATIONS = {
    "relu": T.relu,
    "tanh": T.tanh,
    "sigmoid": T.sigmoid,
    "none": lambda x: x,
    "linear": lambda x: x,
}


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    def params(self) -> dict[str, Tensor]:
        return {}

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, activation: str = "relu", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = Tensor(glorot_uniform(rng, (n_in, n_out), n_in, n_out), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation

    def params(self):
        return {"W": self.W, "b": self.b}

    def out_shape(self, in_shape):
        if in_shape != (self.W.shape[0],):
            raise T.ShapeError("dense", in_shape, self.W.shape)
        return (self.W.shape[1],)

    def __call__(self, x, training=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.W.shape[0]:
            raise T.ShapeError("dense", x.shape, self.W.shape)
        return ACTIVATIONS[self.activation](x @ self.W + self.b)


def _conv2d_forward(x: np.ndarray, w: np.ndarray, pad: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, _, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh, ow = h - kh + 1, wd - kw + 1
    out = np.zeros((n, co, oh, ow))
    for i in range(kh):
        for j in range(kw):
            out += np.einsum("nchw,oc->nohw", x[:, :, i:i + oh, j:j + ow], w[:, :, i, j])
    return out


class Conv2d(Layer):
    """Direct 'same'-padded stride-1 convolution on N x C x H x W inputs."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 5, activation: str = "relu", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in, fan_out = c_in * kernel * kernel, c_out * kernel * kernel
        self.W = Tensor(glorot_uniform(rng, (c_out, c_in, kernel, kernel), fan_in, fan_out), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.pad = kernel // 2
        self.activation = activation

    def params(self):
        return {"W": self.W, "b": self.b}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.W.shape[1]:
            raise T.ShapeError("conv2d", in_shape, self.W.shape)
        k = self.W.shape[2]
        return (self.W.shape[0], h + 2 * self.pad - k + 1, w + 2 * self.pad - k + 1)

    def __call__(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.W.shape[1]:
            raise T.ShapeError("conv2d", x.shape, self.W.shape)
        w, pad = self.W, self.pad
        xd = x.data
        out = _conv2d_forward(xd, w.data, pad)
        xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd

        def bw(g):
            kh, kw = w.shape[2:]
            oh, ow = g.shape[2:]
            gw = np.zeros_like(w.data)
            gx = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gw[:, :, i, j] = np.einsum("nohw,nchw->oc", g, xp[:, :, i:i + oh, j:j + ow])
                    gx[:, :, i:i + oh, j:j + ow] += np.einsum("nohw,oc->nchw", g, w.data[:, :, i, j])
            if pad:
                gx = gx[:, :, pad:-pad, pad:-pad]
            return gx, gw

        y = T.make_op("conv2d", out, (x, w), bw)
        return ACTIVATIONS[self.activation](y + T.reshape(self.b, (1, -1, 1, 1)))


class MaxPool2d(Layer):
    def __init__(self, size: int = 2):
        self.size = size

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, h // self.size, w // self.size)

    def __call__(self, x, training=False, rng=None):
        k = self.size
        n, c, h, w = x.shape
        h2, w2 = h // k, w // k
        xd = x.data[:, :, :h2 * k, :w2 * k].reshape(n, c, h2, k, w2, k)
        out = xd.max(axis=(3, 5))
        # first maximum in each window gets the gradient
        flat = xd.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, k * k)
        arg = flat.argmax(axis=-1)

        def bw(g):
            gflat = np.zeros_like(flat)
            np.put_along_axis(gflat, arg[..., None], g[..., None], axis=-1)
            gwin = gflat.reshape(n, c, h2, w2, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * k, w2 * k)
            full = np.zeros(x.shape)
            full[:, :, :h2 * k, :w2 * k] = gwin
            return (full,)

        return T.make_op("maxpool2d", out, (x,), bw)


class Flatten(Layer):
    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def __call__(self, x, training=False, rng=None):
        return T.reshape(x, (x.shape[0], -1))


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/keep_prob at train time."""

    def __init__(self, keep_prob: float = 0.5):
        if not 0 < keep_prob <= 1:
            raise ValueError("keep_prob must lie in (0, 1]")
        self.keep_prob = keep_prob

    def __call__(self, x, training=False, rng=None):
        if not training or self.keep_prob == 1.0:
            return x
        mask = (rng.random(x.shape) < self.keep_prob) / self.keep_prob
        return x * Tensor(mask)


def build_layer(spec: dict, in_shape: tuple, rng) -> Layer:
    kind = spec["type"]
    if kind == "dense":
        return Dense(in_shape[0], int(spec["units"]), spec.get("activation", "relu"), rng)
    if kind == "conv":
        return Conv2d(in_shape[0], int(spec["channels"]), int(spec.get("kernel", 5)),
                      spec.get("activation", "relu"), rng)
    if kind == "maxpool":
        return MaxPool2d(int(spec.get("size", 2)))
    if kind == "flatten":
        return Flatten()
    if kind == "dropout":
        return Dropout(float(spec.get("keep_prob", 0.5)))
    raise ValueError(f"unknown layer type {kind!r}")


class EncoderNetwork:
    """The representation network h(x); its output is the encoding mean."""

    def __init__(self, layers: list[Layer], in_shape: tuple):
        self.layers = layers
        self.in_shape = tuple(in_shape)
        shape = self.in_shape
        for layer in layers:
            shape = layer.out_shape(shape)
        if len(shape) != 1:
            raise ValueError(f"encoder must end in a flat representation, got {shape}")
        self.dim_y = shape[0]

    @classmethod
    def from_spec(cls, in_shape, layer_specs: list[dict], rng) -> "EncoderNetwork":
        layers, shape = [], tuple(in_shape)
        for spec in layer_specs:
            layer = build_layer(spec, shape, rng)
            shape = layer.out_shape(shape)
            layers.append(layer)
        return cls(layers, in_shape)

    def params(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params().items():
                out[f"encoder.{i}.{k}"] = v
        return out

    def __call__(self, x, training: bool = False, rng=None) -> Tensor:
        x = T.as_tensor(x)
        if tuple(x.shape[1:]) != self.in_shape:
            raise T.ShapeError("encode", x.shape, (None,) + self.in_shape)
        for layer in self.layers:
            x = layer(x, training=training, rng=rng)
        return x


def encode(net: EncoderNetwork, x_batch, training: bool = False, rng=None) -> Tensor:
    return net(x_batch, training=training, rng=rng)


class DecoderHead:
    """Linear softmax decoder with a cached compact SVD of its weight matrix."""

    def __init__(self, dim_y: int, n_classes: int, rng=None, W=None, b=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        if W is None:
            W = glorot_uniform(rng, (n_classes, dim_y), dim_y, n_classes)
        self.W = Tensor(W, requires_grad=True)
        self.b = Tensor(np.zeros(n_classes) if b is None else b, requires_grad=True)
        self.svd: CompactSvd | None = None
        self.projection: ProjectionMatrix | None = None
        self.svd_age = 0

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim_y(self) -> int:
        return self.W.shape[1]

    def params(self) -> dict[str, Tensor]:
        return {"decoder.W": self.W, "decoder.b": self.b}

    def refresh(self, rank_tolerance: float = DEFAULT_RANK_TOLERANCE):
        self.svd = compact_svd(self.W.data, rank_tolerance)
        self.projection = kernel_complement_projection(self.svd)
        self.svd_age = 0

    def ensure_fresh(self, period: int = 1, rank_tolerance: float = DEFAULT_RANK_TOLERANCE):
        """Recompute the SVD if it is missing or ``period`` steps old."""
        if self.projection is None or self.svd_age >= period:
            self.refresh(rank_tolerance)

    def tick(self):
        self.svd_age += 1

    def logits(self, h) -> Tensor:
        h = T.as_tensor(h)
        if h.shape[-1] != self.dim_y:
            raise T.ShapeError("decoder", h.shape, self.W.shape)
        return h @ T.transpose(self.W) + self.b


def log_softmax(logits: Tensor) -> Tensor:
    return logits - T.logsumexp(logits, axis=-1, keepdims=True)


def predict(head: DecoderHead, h_batch) -> Tensor:
    """Class probabilities softmax(W h + b) for the deterministic encoding h."""
    return T.exp(log_softmax(head.logits(h_batch)))


def check_labels(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels.astype(np.int64)


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = check_labels(labels, n_classes)
    out = np.zeros(labels.shape + (n_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of logsumexp(logits) - logits[label]."""
    logits = T.as_tensor(logits)
    mask = one_hot(labels, logits.shape[-1])
    picked = T.sum(logits * Tensor(mask), axis=-1)
    return T.mean(T.logsumexp(logits, axis=-1) - picked)


class MissingGradientError(RuntimeError):
    pass


@dataclass
class SgdMomentum:
    lr: float = 0.05
    decay: float = 0.95  # per-epoch multiplicative decay
    momentum: float = 0.9
    weight_decay: float = 1e-3
    velocity: dict = field(default_factory=dict)

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.decay ** epoch

    def step(self, params: dict[str, Tensor], epoch: int = 0):
        """v <- momentum*v + (grad + wd*param); param <- param - lr(epoch)*v; grads cleared."""
        missing = [name for name, p in params.items() if p.grad is None]
        if missing:
            raise MissingGradientError(f"no gradient for {', '.join(missing)}")
        lr = self.lr_at(epoch)
        for name, p in params.items():
            v = self.velocity.get(name)
            g = p.grad + self.weight_decay * p.data
            v = g if v is None else self.momentum * v + g
            self.velocity[name] = v
            p.data = p.data - lr * v
            p.grad = None


def sgd_step(opt: SgdMomentum, params: dict[str, Tensor], epoch: int = 0):
    opt.step(params, epoch)
