"""Small dense ReLU networks with hand-written backprop (numpy only)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    pass


@dataclass
class GradientTape:
    """d(sum(output * upstream)) w.r.t. weights, biases and the input."""

    weights: list
    biases: list
    inputs: np.ndarray

    def params(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def global_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.params()))

    def clipped(self, max_norm: float) -> "GradientTape":
        """Rescale so the global parameter-gradient norm is at most ``max_norm``."""
        norm = self.global_norm()
        if max_norm > 0 and norm > max_norm:
            return self.scaled(max_norm / norm)
        return self

    def scaled(self, factor: float) -> "GradientTape":
        return GradientTape([w * factor for w in self.weights], [b * factor for b in self.biases],
                            self.inputs * factor)


@dataclass
class DenseNetwork:
    """Fully connected net: ReLU on hidden layers, identity on the output layer.

    ``weights[i]`` has shape (layer_sizes[i], layer_sizes[i+1]) so a batch
    of row vectors maps as ``x @ W + b``.
    """

    layer_sizes: tuple
    weights: list
    biases: list
    momentum: float = 0.0
    _velocity: list = field(default=None, repr=False)

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ShapeError(f"invalid layer sizes {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("parameter count does not match layer sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (self.layer_sizes[i + 1],):
                raise ShapeError(f"layer {i}: got W{w.shape}, b{b.shape}")

    @classmethod
    def create(cls, layer_sizes, rng: np.random.Generator, momentum: float = 0.0,
               output_scale: float = 1.0) -> "DenseNetwork":
        """Glorot-uniform weights, zero biases. ``output_scale`` shrinks the last layer."""
        weights, biases = [], []
        sizes = list(layer_sizes)
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            if i == len(sizes) - 2:
                w = w * output_scale
            weights.append(w)
            biases.append(np.zeros(fan_out))
        return cls(tuple(sizes), weights, biases, momentum=momentum)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(self.layer_sizes, [w.copy() for w in self.weights],
                            [b.copy() for b in self.biases], momentum=self.momentum)

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise ShapeError(f"expected input width {self.n_inputs}, got shape {x.shape}")
        return x, single

    def forward(self, x, return_cache: bool = False):
        x, single = self._as_batch(x)
        cache = [x]
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.maximum(z, 0.0)
            cache.append(a)
        out = a[0] if single else a
        return (out, cache) if return_cache else out

    __call__ = forward

    def backward(self, x, upstream, cache=None) -> GradientTape:
        x, single = self._as_batch(x)
        g = np.asarray(upstream, dtype=float)
        if single:
            g = g[None, :]
        if g.shape != (x.shape[0], self.n_outputs):
            raise ShapeError(f"upstream shape {g.shape} does not match output {(x.shape[0], self.n_outputs)}")
        if cache is None:
            _, cache = self.forward(x, return_cache=True)
        n_layers = len(self.weights)
        dW = [None] * n_layers
        db = [None] * n_layers
        for i in range(n_layers - 1, -1, -1):
            a_in = cache[i]
            dW[i] = a_in.T @ g
            db[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                # ReLU mask from the stored post-activation
                g = g * (cache[i] > 0.0)
        return GradientTape(dW, db, g[0] if single else g)

    def apply_gradients(self, tape: GradientTape, learning_rate: float) -> "DenseNetwork":
        """theta <- theta - lr * grad, with heavy-ball momentum when configured."""
        if len(tape.weights) != len(self.weights):
            raise ShapeError("tape does not match network")
        if self.momentum and self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in self.parameters()]
        for k, (p, g) in enumerate(zip(self.parameters(), tape.params())):
            if p.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if self.momentum:
                v = self._velocity[k]
                v *= self.momentum
                v += g
                step = v
            else:
                step = g
            p -= learning_rate * step
            if not np.all(np.isfinite(p)):
                raise FloatingPointError("non-finite parameter after update")
        return self

    # -- serialisation -------------------------------------------------
    # Flat order: for each layer i = 0..n-1, W_i row-major then b_i.

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "momentum": self.momentum,
            "parameters": [float(v) for v in self.flat_parameters()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNetwork":
        sizes = [int(n) for n in d["layer_sizes"]]
        flat = np.asarray(d["parameters"], dtype=float)
        expected = sum(a * b + b for a, b in zip(sizes, sizes[1:]))
        if flat.shape != (expected,):
            raise ShapeError(f"expected {expected} parameters, found {flat.size}")
        weights, biases, pos = [], [], 0
        for a, b in zip(sizes, sizes[1:]):
            weights.append(flat[pos:pos + a * b].reshape(a, b).copy())
            pos += a * b
            biases.append(flat[pos:pos + b].copy())
            pos += b
        return cls(tuple(sizes), weights, biases, momentum=float(d.get("momentum", 0.0)))


def soft_update(target: DenseNetwork, online: DenseNetwork, tau: float) -> DenseNetwork:
    """Polyak averaging: target <- tau * online + (1 - tau) * target."""
    if target.layer_sizes != online.layer_sizes:
        raise ShapeError("target and online networks differ in shape")
    for t, o in zip(target.parameters(), online.parameters()):
        t *= 1.0 - tau
        t += tau * o
    return target


def numerical_gradient(net: DenseNetwork, x, upstream, eps: float = 1e-5) -> GradientTape:
    """Central-difference gradients of sum(net(x) * upstream); slow, for checks only."""
    upstream = np.asarray(upstream, dtype=float)

    def objective():
        return float(np.sum(net.forward(x) * upstream))

    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + eps
            up = objective()
            p[idx] = old - eps
            down = objective()
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    x = np.array(x, dtype=float)
    gx = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        up = float(np.sum(net.forward(x) * upstream))
        x[idx] = old - eps
        down = float(np.sum(net.forward(x) * upstream))
        x[idx] = old
        gx[idx] = (up - down) / (2 * eps)
    return GradientTape(grads[0::2], grads[1::2], gx)
