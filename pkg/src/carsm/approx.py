"""Small multilayer perceptrons with a hand-written backward pass.

The same network class backs the policy (state -> K*C logits), the action-value
critic (state ++ action -> scalar) and the A2C value function. Hidden layers use
tanh, the output layer is linear.

Parameters are exposed as one flat vector in layer-major order
``W0, b0, W1, b1, ...`` (each ``W`` row-major with shape ``out x in``) so that
optimizers, TRPO and finite-difference checks can treat every network alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mlp:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(int(n) < 1 for n in self.layer_sizes):
            raise ValueError(f"invalid layer sizes {self.layer_sizes!r}")
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != expected or b.shape != (expected[0],):
                raise ValueError(f"layer {i}: got W{w.shape}, b{b.shape}, expected W{expected}")

    @classmethod
    def init(cls, layer_sizes, seed=0) -> "Mlp":
        """Fan-in scaled uniform weights in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, zero biases."""
        sizes = list(layer_sizes)
        if len(sizes) < 2 or any(int(n) < 1 for n in sizes):
            raise ValueError(f"invalid layer sizes {sizes!r}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(sizes, weights, biases)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_sizes), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])

    def get_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {flat.shape}")
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos:pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos:pos + b.size].copy()
            pos += b.size

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in or x.ndim > 2:
            raise ValueError(f"input shape {x.shape} incompatible with n_in={self.n_in}")
        return x

    def forward(self, x) -> np.ndarray:
        """Evaluate on one input ``(n_in,)`` or a batch ``(n, n_in)``."""
        h = self._check_input(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i < last:
                h = np.tanh(h)
        return h

    __call__ = forward

    def _activations(self, x):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return acts

    def backward(self, x, grad_out) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of ``sum(grad_out * forward(x))``.

        Returns ``(param_grad, input_grad)``: a flat vector in the
        :meth:`get_params` layout (summed over the batch) and the gradient with
        respect to ``x`` (same shape as ``x``).
        """
        x = self._check_input(x)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        gb = np.asarray(grad_out, dtype=float)
        gb = gb[None, :] if single else gb
        if gb.shape != (xb.shape[0], self.n_out):
            raise ValueError(f"output gradient shape {np.shape(grad_out)} does not match network")

        acts = self._activations(xb)
        n_layers = len(self.weights)
        grads_w = [None] * n_layers
        grads_b = [None] * n_layers
        delta = gb
        for i in range(n_layers - 1, -1, -1):
            grads_w[i] = delta.T @ acts[i]
            grads_b[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i]
            if i > 0:
                delta = delta * (1.0 - acts[i] ** 2)
        parts = []
        for gw, gbias in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gbias)
        input_grad = delta[0] if single else delta
        return np.concatenate(parts), input_grad

    def jvp(self, x, tangent) -> np.ndarray:
        """Forward-mode derivative of the output along a parameter direction."""
        x = self._check_input(x)
        tangent = np.asarray(tangent, dtype=float)
        if tangent.shape != (self.n_params,):
            raise ValueError("tangent length does not match parameter count")
        h, dh = x, np.zeros_like(x)
        pos = 0
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            dw = tangent[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            db = tangent[pos:pos + b.size]
            pos += b.size
            z = h @ w.T + b
            dz = h @ dw.T + dh @ w.T + db
            if i < last:
                h = np.tanh(z)
                dh = (1.0 - h ** 2) * dz
            else:
                h, dh = z, dz
        return dh


@dataclass
class Adam:
    """Adam state; :meth:`step` descends along the supplied loss gradient."""

    lr: float
    n_params: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.m is None:
            self.m = np.zeros(self.n_params)
        if self.v is None:
            self.v = np.zeros(self.n_params)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        grad = np.asarray(grad, dtype=float)
        if params.shape != (self.n_params,) or grad.shape != (self.n_params,):
            raise ValueError("parameter/gradient length mismatch")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def apply(self, net: Mlp, grad: np.ndarray) -> None:
        net.set_params(self.step(net.get_params(), grad))
