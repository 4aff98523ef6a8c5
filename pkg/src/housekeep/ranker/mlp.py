"""Minimal float64 MLP with hand-written backprop, cosine heads and Adam."""

from __future__ import annotations

import numpy as np


class MLP:
    """Linear -> ReLU -> ... -> Linear. ``sizes`` lists layer widths, input first."""

    def __init__(self, sizes: list[int], rng: np.random.Generator | None = None):
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        if rng is not None:
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                self.weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)))
                self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MLP":
        m = MLP(self.sizes)
        m.weights = [w.copy() for w in self.weights]
        m.biases = [b.copy() for b in self.biases]
        return m

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients in ``params`` order given dLoss/dOutput."""
        grads_w, grads_b = [], []
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                g = g * (acts[i + 1] > 0)
            grads_w.append(acts[i].T @ g)
            grads_b.append(g.sum(axis=0))
            g = g @ self.weights[i].T
        out = []
        for gw, gb in zip(reversed(grads_w), reversed(grads_b)):
            out += [gw, gb]
        return out

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"shape": list(w.shape), "weight": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MLP":
        layers = data["layers"]
        sizes = [layers[0]["shape"][0]] + [layer["shape"][1] for layer in layers]
        m = cls(sizes)
        for layer in layers:
            m.weights.append(np.array(layer["weight"], dtype=float).reshape(layer["shape"]))
            m.biases.append(np.array(layer["bias"], dtype=float))
        return m


def l2_normalize(y: np.ndarray, eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    norm = np.sqrt((y * y).sum(axis=1, keepdims=True)) + eps
    return y / norm, norm


def l2_normalize_backward(u: np.ndarray, norm: np.ndarray, grad_u: np.ndarray) -> np.ndarray:
    return (grad_u - u * (u * grad_u).sum(axis=1, keepdims=True)) / norm


def info_nce(mlp: MLP, anchors: np.ndarray, keys: np.ndarray, targets: np.ndarray, tau: float):
    """Cross-entropy over cosine/tau logits; row i's positive is ``keys[targets[i]]``.

    Both sides go through the same MLP. Returns (loss, grads).
    """
    n = len(anchors)
    y, acts = mlp.forward(np.vstack([anchors, keys]))
    u, norm = l2_normalize(y)
    ua, uk = u[:n], u[n:]
    logits = ua @ uk.T / tau
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = float(-np.log(p[rows, targets] + 1e-300).mean())
    dlogits = p
    dlogits[rows, targets] -= 1.0
    dlogits /= n * tau
    du = np.vstack([dlogits @ uk, dlogits.T @ ua])
    dy = l2_normalize_backward(u, norm, du)
    return loss, mlp.backward(acts, dy)


def cosine_bce(mlp: MLP, left: np.ndarray, right: np.ndarray, labels: np.ndarray, tau: float):
    """Binary cross-entropy on sigmoid(cos(left_i, right_i) / tau)."""
    n = len(left)
    y, acts = mlp.forward(np.vstack([left, right]))
    u, norm = l2_normalize(y)
    ul, ur = u[:n], u[n:]
    z = (ul * ur).sum(axis=1) / tau
    # log(1 + e^z) - y z, stable
    loss = float(np.mean(np.logaddexp(0.0, z) - labels * z))
    dz = (1.0 / (1.0 + np.exp(-z)) - labels) / (n * tau)
    du = np.vstack([dz[:, None] * ur, dz[:, None] * ul])
    dy = l2_normalize_backward(u, norm, du)
    return loss, mlp.backward(acts, dy)


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, params: list[np.ndarray], lr: float = 0.01, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
