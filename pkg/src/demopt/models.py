"""Desk-scale models with closed-form gradients.

Every model exposes an ordered list of parameter tensors, a scalar loss, and
analytic gradients (hand-derived backprop, no autodiff), which keeps the
finite-difference check authoritative.  ``dtype`` is fixed per model at
construction; the gradient check requires float64.
"""

from __future__ import annotations

import numpy as np


def _softmax_logits(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    return float(np.mean(logz - picked))


class Model:
    """Interface shared by the harness: ordered params, loss, analytic grads."""

    dtype: np.dtype
    classification: bool = False

    def param_arrays(self) -> list[np.ndarray]:
        raise NotImplementedError

    def param_names(self) -> list[str]:
        raise NotImplementedError

    def loss(self, batch) -> float:
        raise NotImplementedError

    def loss_and_grad(self, batch) -> tuple[float, list[np.ndarray]]:
        raise NotImplementedError

    def sample_batch(self, rng: np.random.Generator, size: int):
        """A synthetic batch for gradient probing."""
        raise NotImplementedError

    def eval_metrics(self, batch) -> dict:
        out = {"loss": self.loss(batch)}
        if self.classification and batch is not None:
            x, y = batch
            out["accuracy"] = float(np.mean(self.predict(x) == y))
        return out

    def predict(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class QuadraticBowl(Model):
    """loss(x) = 0.5 x^T A x - b^T x with a fixed well-conditioned SPD A.

    Deterministic (no data); batches are ignored.  With ``identity=True``,
    A = I and b = 0, so the gradient is x itself.
    """

    def __init__(self, dim: int, seed: int = 0, dtype=np.float32,
                 identity: bool = False):
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        if identity:
            self.a = np.eye(dim, dtype=self.dtype)
            self.b = np.zeros(dim, dtype=self.dtype)
        else:
            r = rng.normal(size=(dim, dim))
            self.a = (np.eye(dim) + (r @ r.T) / dim).astype(self.dtype)
            self.b = rng.normal(size=dim).astype(self.dtype)
        self.x = rng.normal(size=dim).astype(self.dtype)

    def param_arrays(self):
        return [self.x]

    def param_names(self):
        return ["x"]

    def loss(self, batch=None) -> float:
        x64 = self.x.astype(np.float64)
        a64 = self.a.astype(np.float64)
        return float(0.5 * x64 @ a64 @ x64 - self.b.astype(np.float64) @ x64)

    def loss_and_grad(self, batch=None):
        grad = (self.a @ self.x - self.b).astype(self.dtype)
        return self.loss(), [grad]

    def sample_batch(self, rng, size):
        return None


class LinearRegression(Model):
    """Least squares: loss = (1/2B) sum_i ||W x_i + b - y_i||^2."""

    def __init__(self, input_dim: int, output_dim: int, bias: bool = True,
                 seed: int = 0, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.bias = bias
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(input_dim)
        self.w = (rng.normal(size=(output_dim, input_dim)) * scale).astype(self.dtype)
        self.b = np.zeros(output_dim, dtype=self.dtype) if bias else None

    def param_arrays(self):
        return [self.w] if self.b is None else [self.w, self.b]

    def param_names(self):
        return ["w"] if self.b is None else ["w", "b"]

    def _forward(self, x):
        out = x @ self.w.T
        if self.b is not None:
            out = out + self.b
        return out

    def loss(self, batch) -> float:
        x, y = batch
        err = self._forward(x) - y
        return float(0.5 * np.mean(np.sum(np.square(err.astype(np.float64)), axis=1)))

    def loss_and_grad(self, batch):
        x, y = batch
        err = self._forward(x) - y
        n = len(x)
        dw = (err.T @ x / n).astype(self.dtype)
        grads = [dw]
        if self.b is not None:
            grads.append((err.sum(axis=0) / n).astype(self.dtype))
        return self.loss(batch), grads

    def sample_batch(self, rng, size):
        x = rng.normal(size=(size, self.input_dim)).astype(self.dtype)
        y = rng.normal(size=(size, self.output_dim)).astype(self.dtype)
        return x, y


class LogisticRegression(Model):
    """Multinomial logistic regression with softmax cross-entropy."""

    classification = True

    def __init__(self, input_dim: int, num_classes: int, bias: bool = True,
                 seed: int = 0, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.input_dim = input_dim
        self.num_classes = num_classes
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(input_dim)
        self.w = (rng.normal(size=(num_classes, input_dim)) * scale).astype(self.dtype)
        self.b = np.zeros(num_classes, dtype=self.dtype) if bias else None

    def param_arrays(self):
        return [self.w] if self.b is None else [self.w, self.b]

    def param_names(self):
        return ["w"] if self.b is None else ["w", "b"]

    def _logits(self, x):
        out = x @ self.w.T
        if self.b is not None:
            out = out + self.b
        return out

    def loss(self, batch) -> float:
        x, y = batch
        return _cross_entropy(self._logits(x).astype(np.float64), y)

    def loss_and_grad(self, batch):
        x, y = batch
        logits = self._logits(x)
        probs = _softmax_logits(logits.astype(np.float64))
        probs[np.arange(len(y)), y] -= 1.0
        probs /= len(y)
        dw = (probs.T @ x).astype(self.dtype)
        grads = [dw]
        if self.b is not None:
            grads.append(probs.sum(axis=0).astype(self.dtype))
        return _cross_entropy(logits.astype(np.float64), y), grads

    def predict(self, x):
        return np.argmax(self._logits(x), axis=1)

    def sample_batch(self, rng, size):
        x = rng.normal(size=(size, self.input_dim)).astype(self.dtype)
        y = rng.integers(0, self.num_classes, size=size)
        return x, y


class Mlp(Model):
    """1-2 hidden layers, tanh or relu, softmax head; manual backprop."""

    classification = True

    def __init__(self, input_dim: int, hidden_dim: int, num_classes: int,
                 hidden_layers: int = 1, activation: str = "tanh",
                 bias: bool = True, seed: int = 0, dtype=np.float32):
        if hidden_layers not in (1, 2):
            raise ValueError(f"hidden_layers must be 1 or 2, got {hidden_layers}")
        if activation not in ("tanh", "relu"):
            raise ValueError(f"activation must be tanh or relu, got {activation}")
        self.dtype = np.dtype(dtype)
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.activation = activation
        self.bias = bias
        rng = np.random.default_rng(seed)
        dims = [input_dim] + [hidden_dim] * hidden_layers + [num_classes]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(dims, dims[1:]):
            w = rng.normal(size=(fan_out, fan_in)) / np.sqrt(fan_in)
            self.weights.append(w.astype(self.dtype))
            self.biases.append(np.zeros(fan_out, dtype=self.dtype) if bias else None)

    def param_arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            if b is not None:
                out.append(b)
        return out

    def param_names(self):
        out = []
        for i, b in enumerate(self.biases):
            out.append(f"w{i}")
            if b is not None:
                out.append(f"b{i}")
        return out

    def _act(self, z):
        if self.activation == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0)

    def _act_grad(self, z, a):
        if self.activation == "tanh":
            return 1.0 - np.square(a)
        return (z > 0).astype(z.dtype)

    def _forward(self, x):
        pre, post = [], [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ w.T
            if b is not None:
                z = z + b
            h = self._act(z)
            pre.append(z)
            post.append(h)
        logits = h @ self.weights[-1].T
        if self.biases[-1] is not None:
            logits = logits + self.biases[-1]
        return logits, pre, post

    def loss(self, batch) -> float:
        x, y = batch
        logits, _, _ = self._forward(x)
        return _cross_entropy(logits.astype(np.float64), y)

    def loss_and_grad(self, batch):
        x, y = batch
        logits, pre, post = self._forward(x)
        n = len(y)
        delta = _softmax_logits(logits.astype(np.float64))
        delta[np.arange(n), y] -= 1.0
        delta /= n
        delta = delta.astype(self.dtype)
        w_grads = [None] * len(self.weights)
        b_grads = [None] * len(self.weights)
        for layer in range(len(self.weights) - 1, -1, -1):
            w_grads[layer] = delta.T @ post[layer]
            if self.biases[layer] is not None:
                b_grads[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer]) * self._act_grad(
                    pre[layer - 1], post[layer]
                )
        grads = []
        for wg, bg in zip(w_grads, b_grads):
            grads.append(wg.astype(self.dtype, copy=False))
            if bg is not None:
                grads.append(bg.astype(self.dtype, copy=False))
        return _cross_entropy(logits.astype(np.float64), y), grads

    def predict(self, x):
        logits, _, _ = self._forward(x)
        return np.argmax(logits, axis=1)

    def sample_batch(self, rng, size):
        x = rng.normal(size=(size, self.input_dim)).astype(self.dtype)
        y = rng.integers(0, self.num_classes, size=size)
        return x, y


def finite_difference_check(model: Model, probes: int, seed: int = 0,
                            step: float = 1e-4, batch_size: int = 16) -> float:
    """Worst relative error between analytic gradients and central differences.

    Probes random parameter coordinates on a seeded batch; requires a
    float64 model so the differences are trustworthy.
    """
    if model.dtype != np.float64:
        raise ValueError("gradient checking requires a float64 model")
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    batch = model.sample_batch(rng, batch_size)
    _, grads = model.loss_and_grad(batch)
    params = model.param_arrays()
    worst = 0.0
    for _ in range(probes):
        t = int(rng.integers(0, len(params)))
        i = int(rng.integers(0, params[t].size))
        flat = params[t].reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        lp = model.loss(batch)
        flat[i] = orig - step
        lm = model.loss(batch)
        flat[i] = orig
        fd = (lp - lm) / (2.0 * step)
        an = float(grads[t].reshape(-1)[i])
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        worst = max(worst, rel)
    return worst
