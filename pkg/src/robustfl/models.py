"""Small differentiable classifiers with exact, hand-derived gradients.

Model parameters live in a single flat float64 vector so they can travel
through the aggregation pipeline unchanged; each model class doubles as
the shape descriptor that maps slices of that vector to layers. The loss
everywhere is mean softmax cross-entropy over the batch.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Batch:
    """A block of training or test samples."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2:
            raise ValueError(f"inputs must be (n, features), got {inputs.shape}")
        if labels.ndim != 1 or len(labels) != len(inputs):
            raise ValueError("labels must be one integer per input row")
        if len(labels) > 0 and labels.min() < 0:
            raise ValueError("labels must be >= 0")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)


def _softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    loss = float(-log_probs[np.arange(n), labels].mean())
    dlogits = exp / total
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits


def _glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class LogisticModel:
    """Linear softmax classifier: inputs @ W + b."""

    def __init__(self, input_dim: int, num_classes: int):
        if input_dim < 1 or num_classes < 2:
            raise ValueError("need input_dim >= 1 and num_classes >= 2")
        self.input_dim = input_dim
        self.num_classes = num_classes

    @property
    def num_params(self) -> int:
        return self.input_dim * self.num_classes + self.num_classes

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        w = np.zeros(self.num_params)
        weight, _ = self.unflatten(w)
        weight[:] = _glorot_uniform(rng, self.input_dim, self.num_classes)
        return w

    def unflatten(self, w: np.ndarray):
        """Views (no copies) of the weight matrix and bias inside ``w``."""
        if w.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got {w.shape}")
        split = self.input_dim * self.num_classes
        return (w[:split].reshape(self.input_dim, self.num_classes), w[split:])

    @staticmethod
    def flatten(layers) -> np.ndarray:
        return np.concatenate([np.asarray(l, dtype=np.float64).ravel() for l in layers])

    def logits(self, w: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        weight, bias = self.unflatten(w)
        return inputs @ weight + bias

    def loss_grad(self, w: np.ndarray, batch: Batch):
        """Mean cross-entropy over the batch and its exact gradient in w."""
        if len(batch) == 0:
            raise ValueError("empty batch")
        if batch.labels.max() >= self.num_classes:
            raise ValueError("label out of range for this model")
        if batch.inputs.shape[1] != self.input_dim:
            raise ValueError("input feature dimension mismatch")
        weight, _ = self.unflatten(w)
        logits = self.logits(w, batch.inputs)
        loss, dlogits = _softmax_cross_entropy(logits, batch.labels)
        grad = np.empty_like(w)
        g_weight, g_bias = self.unflatten(grad)
        g_weight[:] = batch.inputs.T @ dlogits
        g_bias[:] = dlogits.sum(axis=0)
        return loss, grad


class MlpModel:
    """Two-layer perceptron: inputs -> hidden ReLU -> class logits."""

    def __init__(self, input_dim: int, hidden_dim: int, num_classes: int):
        if input_dim < 1 or hidden_dim < 1 or num_classes < 2:
            raise ValueError("need positive layer sizes and num_classes >= 2")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.num_classes = num_classes

    @property
    def num_params(self) -> int:
        return (self.input_dim * self.hidden_dim + self.hidden_dim
                + self.hidden_dim * self.num_classes + self.num_classes)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        w = np.zeros(self.num_params)
        w1, _, w2, _ = self.unflatten(w)
        w1[:] = _glorot_uniform(rng, self.input_dim, self.hidden_dim)
        w2[:] = _glorot_uniform(rng, self.hidden_dim, self.num_classes)
        return w

    def unflatten(self, w: np.ndarray):
        """Views of (W1, b1, W2, b2) inside the flat vector ``w``."""
        if w.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got {w.shape}")
        sizes = (self.input_dim * self.hidden_dim, self.hidden_dim,
                 self.hidden_dim * self.num_classes, self.num_classes)
        offsets = np.cumsum((0,) + sizes)
        w1 = w[offsets[0]:offsets[1]].reshape(self.input_dim, self.hidden_dim)
        b1 = w[offsets[1]:offsets[2]]
        w2 = w[offsets[2]:offsets[3]].reshape(self.hidden_dim, self.num_classes)
        b2 = w[offsets[3]:offsets[4]]
        return w1, b1, w2, b2

    @staticmethod
    def flatten(layers) -> np.ndarray:
        return np.concatenate([np.asarray(l, dtype=np.float64).ravel() for l in layers])

    def logits(self, w: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2 = self.unflatten(w)
        hidden = np.maximum(inputs @ w1 + b1, 0.0)
        return hidden @ w2 + b2

    def loss_grad(self, w: np.ndarray, batch: Batch):
        """Mean cross-entropy over the batch and its exact gradient in w."""
        if len(batch) == 0:
            raise ValueError("empty batch")
        if batch.labels.max() >= self.num_classes:
            raise ValueError("label out of range for this model")
        if batch.inputs.shape[1] != self.input_dim:
            raise ValueError("input feature dimension mismatch")
        w1, b1, w2, b2 = self.unflatten(w)
        pre = batch.inputs @ w1 + b1
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ w2 + b2
        loss, dlogits = _softmax_cross_entropy(logits, batch.labels)

        grad = np.empty_like(w)
        g_w1, g_b1, g_w2, g_b2 = self.unflatten(grad)
        g_w2[:] = hidden.T @ dlogits
        g_b2[:] = dlogits.sum(axis=0)
        dhidden = dlogits @ w2.T
        dhidden[pre <= 0.0] = 0.0
        g_w1[:] = batch.inputs.T @ dhidden
        g_b1[:] = dhidden.sum(axis=0)
        return loss, grad


def evaluate(model, w: np.ndarray, test_set: Batch):
    """Top-1 accuracy (argmax ties resolve to the lowest class index) and
    mean cross-entropy on a held-out set."""
    if len(test_set) == 0:
        raise ValueError("empty test set")
    logits = model.logits(w, test_set.inputs)
    predictions = np.argmax(logits, axis=1)
    accuracy = float(np.mean(predictions == test_set.labels))
    loss, _ = _softmax_cross_entropy(logits, test_set.labels)
    return accuracy, loss
