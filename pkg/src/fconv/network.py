"""Small trainable F-Conv auto-encoder and a plain-convolution counterpart.

Layer order: input F-Conv, then ``len(widths) - 1`` blocks of
(bias, ReLU, intermediate F-Conv), then a bias and the output F-Conv.
Biases are shared across the t orientations of a channel. All convolutions
use valid padding, so each layer trims p - 1 pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gconv import (build_layer_filters, conv_multi, conv_multi_backward, dense_kernel,
                    dense_kernel_backward, filters_backward)
from .parametrize import NormalizedBasis, fconv_basis, init_coefficients


class TrainingDiverged(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class StaleCacheError(RuntimeError):
    pass


@dataclass
class Cache:
    version: int
    inputs: list  # input to each convolution
    pre: list  # pre-activation after each bias (before ReLU)
    out_shape: tuple = ()


class _ConvStack:
    """Shared forward/backward over dense kernels and per-channel biases."""

    p: int
    rectify: list
    version: int

    def kernels(self) -> list[np.ndarray]:
        raise NotImplementedError

    def dense_biases(self) -> list[np.ndarray]:
        raise NotImplementedError

    @property
    def shrink(self) -> int:
        return len(self.rectify_flags()) * (self.p - 1) + (self.p - 1)

    def rectify_flags(self) -> list[bool]:
        # one flag per bias; the final bias feeds the output layer directly
        n = len(self.dense_biases())
        return [True] * (n - 1) + [False]

    def forward(self, image) -> tuple[np.ndarray, Cache]:
        x = np.asarray(image, dtype=float)
        if x.ndim == 2:
            x = x[None]
        if min(x.shape[-2:]) <= self.shrink:
            raise ValueError(f"image of size {x.shape[-2:]} is too small; the network "
                             f"trims {self.shrink} pixels")
        Ks, bs = self.kernels(), self.dense_biases()
        flags = self.rectify_flags()
        inputs, pre = [], []
        h = x
        for K, b, relu in zip(Ks[:-1], bs, flags):
            inputs.append(h)
            z = conv_multi(h, K) + b[:, None, None]
            pre.append(z)
            h = np.maximum(z, 0) if relu else z
        inputs.append(h)
        out = conv_multi(h, Ks[-1])
        return out[0], Cache(self.version, inputs, pre, out.shape)

    def dense_backward(self, cache: Cache, grad_out) -> tuple[list, list]:
        if cache.version != self.version:
            raise StaleCacheError("cache was produced with different parameters")
        Ks = self.kernels()
        flags = self.rectify_flags()
        g = np.asarray(grad_out, dtype=float).reshape(cache.out_shape)
        dKs = [None] * len(Ks)
        dbs = [None] * (len(Ks) - 1)
        dx, dKs[-1] = conv_multi_backward(cache.inputs[-1], Ks[-1], g)
        for i in range(len(Ks) - 2, -1, -1):
            g = dx * (cache.pre[i] > 0) if flags[i] else dx
            dbs[i] = g.sum(axis=(1, 2))
            dx, dKs[i] = conv_multi_backward(cache.inputs[i], Ks[i], g)
        return dKs, dbs


@dataclass(eq=False)
class FConvNet(_ConvStack):
    """F-Conv auto-encoder on one planar input channel.

    ``weights[0]`` (c1, 1, r), ``weights[i]`` (c_{i+1}, c_i, t, r) for the
    intermediate layers, ``weights[-1]`` (1, c_last, r); ``biases[i]`` has
    one entry per channel.
    """

    p: int
    t: int
    widths: tuple[int, ...]
    h: float = 1.0
    seed: int = 0
    kind: str = "proposed"
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    version: int = 0

    def __post_init__(self):
        self.widths = tuple(int(c) for c in self.widths)
        if not self.widths:
            raise ValueError("need at least one hidden width")
        if not self.weights:
            self.weights, self.biases = self._init_params()

    @property
    def basis(self) -> NormalizedBasis:
        return fconv_basis(self.p, self.t, self.h, self.kind)

    @property
    def layer_kinds(self) -> list[str]:
        return ["input"] + ["intermediate"] * (len(self.widths) - 1) + ["output"]

    def _init_params(self):
        r, t, pp = self.basis.rank, self.t, self.p * self.p
        seeds = np.random.SeedSequence(self.seed).spawn(len(self.widths) + 1)
        chans = (1,) + self.widths + (1,)
        weights = []
        for i, kind in enumerate(self.layer_kinds):
            c_in, c_out = chans[i], chans[i + 1]
            fan_in = c_in * pp if kind == "input" else c_in * t * pp
            shape = (c_out, c_in, t) if kind == "intermediate" else (c_out, c_in)
            weights.append(init_coefficients(seeds[i], fan_in, r, n_entries=t * pp, shape=shape))
        biases = [np.zeros(c) for c in self.widths]
        return weights, biases

    def params(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def set_params(self, params):
        k = len(self.weights)
        self.weights = [np.array(a, dtype=float) for a in params[:k]]
        self.biases = [np.array(a, dtype=float) for a in params[k:]]
        self.version += 1

    def copy(self) -> FConvNet:
        return FConvNet(self.p, self.t, self.widths, self.h, self.seed, self.kind,
                        [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.version)

    def filters(self) -> list[np.ndarray]:
        return [build_layer_filters(self.basis, w, kind)
                for w, kind in zip(self.weights, self.layer_kinds)]

    def kernels(self):
        return [dense_kernel(f, kind) for f, kind in zip(self.filters(), self.layer_kinds)]

    def dense_biases(self):
        return [np.repeat(b, self.t) for b in self.biases]

    def backward(self, cache: Cache, grad_out) -> list[np.ndarray]:
        """Gradients for every parameter, ordered like ``params()``."""
        dKs, dbs = self.dense_backward(cache, grad_out)
        chans = (1,) + self.widths + (1,)
        dW = []
        for i, (dK, kind) in enumerate(zip(dKs, self.layer_kinds)):
            d_filters = dense_kernel_backward(dK, kind, chans[i + 1], chans[i], self.t)
            dW.append(filters_backward(self.basis, d_filters, kind))
        db = [d.reshape(-1, self.t).sum(axis=1) for d in dbs]
        return dW + db


@dataclass(eq=False)
class PlainConvNet(_ConvStack):
    """Same depth and channel count as an FConvNet, with unconstrained kernels
    (widths * t channels per hidden layer) drawn with He scaling."""

    p: int
    channels: tuple[int, ...]
    seed: int = 0
    version: int = 0
    _kernels: list = field(default_factory=list, repr=False)
    biases: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        chans = (1,) + tuple(self.channels) + (1,)
        self._kernels = [rng.normal(0, np.sqrt(2 / (c_in * self.p**2)), (c_out, c_in, self.p, self.p))
                         for c_in, c_out in zip(chans[:-1], chans[1:])]
        self.biases = [np.zeros(c) for c in self.channels]

    @classmethod
    def matching(cls, net: FConvNet, seed: int = 0) -> PlainConvNet:
        return cls(net.p, tuple(c * net.t for c in net.widths), seed)

    def kernels(self):
        return self._kernels

    def dense_biases(self):
        return self.biases


def mse_loss(output, target) -> tuple[float, np.ndarray]:
    diff = output - target
    return float(np.mean(diff**2)), 2 * diff / diff.size


def center_crop(image, size: int) -> np.ndarray:
    n0, n1 = image.shape[-2:]
    i, j = (n0 - size) // 2, (n1 - size) // 2
    return image[..., i:i + size, j:j + size]


def reconstruction_loss_and_grad(net: FConvNet, images) -> tuple[float, list]:
    """Mean auto-encoder loss over images and its gradient, reduced in image order."""
    total, grads = 0.0, None
    for img in images:
        out, cache = net.forward(img)
        loss, g = mse_loss(out, center_crop(img, out.shape[-1]))
        gi = net.backward(cache, g)
        total += loss
        grads = gi if grads is None else [a + b for a, b in zip(grads, gi)]
    n = len(images)
    return total / n, [g / n for g in grads]


OPTIMIZERS = ("adam", "momentum")


def train_autoencoder(net: FConvNet, images, epochs: int = 200, step: float = 1e-2,
                      momentum: float = 0.9, seed: int | None = None,
                      optimizer: str = "adam") -> tuple[FConvNet, list]:
    """Full-batch training on the reconstruction MSE.

    ``optimizer="adam"`` uses Adam (betas 0.9, 0.999) with learning rate
    ``step``. ``optimizer="momentum"`` is gradient descent with momentum where
    an epoch that would raise the loss is rejected: parameters are restored,
    momentum is cleared and the step is halved, so the trace never increases.

    Returns a trained copy and the loss trace (initial loss first, then the
    loss after each epoch). ``seed`` re-initializes the copy when given.
    A non-finite loss raises ``TrainingDiverged`` carrying the trace.
    """
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {optimizer!r}")
    images = [np.asarray(im, dtype=float) for im in images]
    if not images:
        raise ValueError("no training images")
    if any(im.ndim != 2 or im.shape[0] != im.shape[1] for im in images):
        raise ValueError("training images must be square 2D arrays")
    if len({im.shape for im in images}) > 1:
        raise ValueError("training images must share one size")
    net = net.copy()
    if seed is not None:
        net = FConvNet(net.p, net.t, net.widths, net.h, seed, net.kind)
    loss, grads = reconstruction_loss_and_grad(net, images)
    trace = [loss]
    if not np.isfinite(loss):
        raise TrainingDiverged(f"initial loss is {loss}", trace)
    params = net.params()
    first = [np.zeros_like(a) for a in params]
    second = [np.zeros_like(a) for a in params]
    for epoch in range(1, epochs + 1):
        if optimizer == "adam":
            first = [0.9 * m + 0.1 * g for m, g in zip(first, grads)]
            second = [0.999 * v + 0.001 * g * g for v, g in zip(second, grads)]
            c1, c2 = 1 - 0.9**epoch, 1 - 0.999**epoch
            params = [a - step * (m / c1) / (np.sqrt(v / c2) + 1e-8)
                      for a, m, v in zip(params, first, second)]
            net.set_params(params)
            loss, grads = reconstruction_loss_and_grad(net, images)
            trace.append(loss)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} after {epoch} epochs", trace)
            continue
        first = [momentum * v - step * g for v, g in zip(first, grads)]
        trial = [a + v for a, v in zip(params, first)]
        net.set_params(trial)
        new_loss, new_grads = reconstruction_loss_and_grad(net, images)
        if np.isfinite(new_loss) and new_loss <= loss:
            params, loss, grads = trial, new_loss, new_grads
        else:
            # reject the epoch: restore, drop the momentum, halve the step
            net.set_params(params)
            first = [np.zeros_like(a) for a in params]
            step /= 2
            if step < 1e-12:
                raise TrainingDiverged(f"no descent possible after {epoch} epochs "
                                       f"(last loss {new_loss})", trace + [new_loss])
        trace.append(loss)
    return net, trace


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(net: FConvNet, path, header: str | None = None):
    with open(path, "w") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        fh.write("p,h,t,widths,kind,seed\n")
        fh.write(f"{net.p},{net.h!r},{net.t},{';'.join(map(str, net.widths))},{net.kind},{net.seed}\n")
        fh.write("param,shape,values\n")
        names = [f"w{i}" for i in range(len(net.weights))] + [f"b{i}" for i in range(len(net.biases))]
        for name, arr in zip(names, net.params()):
            shape = "x".join(map(str, arr.shape))
            fh.write(f"{name},{shape}," + ",".join(f"{v:.17e}" for v in arr.ravel()) + "\n")


def load_checkpoint(path) -> FConvNet:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    p, h, t, widths, kind, seed = lines[1].split(",")
    params = []
    for ln in lines[3:]:
        if not ln:
            continue
        _, shape, *vals = ln.split(",")
        dims = tuple(int(d) for d in shape.split("x")) if shape else ()
        params.append(np.array([float(v) for v in vals]).reshape(dims))
    widths = tuple(int(w) for w in widths.split(";"))
    n_w = len(widths) + 1
    return FConvNet(int(p), int(t), widths, float(h), int(seed), kind,
                    params[:n_w], params[n_w:])
