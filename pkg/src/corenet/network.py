"""Feedforward ReLU network: evaluation, activation caching, and a minimal
deterministic Adam trainer.

Layer sizes follow the convention that layer 1 is the input; weight matrices
exist for layers 2..L and the output is the last pre-activation (no ReLU on
the final layer). When the bias is embedded, each weight matrix carries one
extra trailing column and layer inputs are augmented with a constant 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DimensionMismatch, TrainingDiverged
from .linalg import DenseMatrix, Matrix, SparseRowMatrix, matvec, relu


@dataclass(frozen=True)
class Network:
    weights: tuple[Matrix, ...]
    bias_embedded: bool = True

    def __post_init__(self):
        if len(self.weights) < 1:
            raise DimensionMismatch("a network needs at least one weight matrix")
        object.__setattr__(self, "weights", tuple(self.weights))
        extra = 1 if self.bias_embedded else 0
        for a, b in zip(self.weights, self.weights[1:]):
            if b.cols != a.rows + extra:
                raise DimensionMismatch(
                    f"layer chain broken: {a.rows} outputs feed {b.cols} inputs")

    @property
    def n_layers(self) -> int:
        """L in the layer-size convention (input layer included)."""
        return len(self.weights) + 1

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        extra = 1 if self.bias_embedded else 0
        first = self.weights[0].cols - extra
        return (first,) + tuple(w.rows for w in self.weights)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].rows

    def forward(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


def _augment(a: np.ndarray, bias_embedded: bool) -> np.ndarray:
    if not bias_embedded:
        return a
    out = np.empty(a.shape[0] + 1)
    out[:-1] = a
    out[-1] = 1.0
    return out


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Evaluate one input; returns (output, [(z, a) per weight layer]).

    The activation entry for the final layer is the raw output itself.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise DimensionMismatch(f"input shape {x.shape} != ({net.input_dim},)")
    a = x
    per_layer = []
    last = len(net.weights) - 1
    for k, w in enumerate(net.weights):
        z = matvec(w, _augment(a, net.bias_embedded))
        a = z if k == last else relu(z)
        per_layer.append((z, a))
    return a, per_layer


def predict(net: Network, x: np.ndarray) -> int:
    """Class with the largest output; ties go to the lowest index."""
    out = forward(net, x)[0]
    return int(np.argmax(out))


@dataclass
class ActivationCache:
    """Original-network activations for a fixed point set.

    z[l] and a[l] are (n_points, layer_width) arrays keyed by weight-layer
    index l in 2..L; inputs holds the raw points (layer-1 activations).
    """

    inputs: np.ndarray
    z: dict[int, np.ndarray]
    a: dict[int, np.ndarray]

    @property
    def n_points(self) -> int:
        return self.inputs.shape[0]

    def layer_inputs(self, layer: int) -> np.ndarray:
        """Activations feeding weight layer `layer` (not bias-augmented)."""
        return self.inputs if layer == 2 else self.a[layer - 1]


def cache_activations(net: Network, points: np.ndarray) -> ActivationCache:
    """Evaluate every point through the original network and stack per layer."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DimensionMismatch("points must be a non-empty (n, d) array")
    z: dict[int, list[np.ndarray]] = {l: [] for l in range(2, net.n_layers + 1)}
    a: dict[int, list[np.ndarray]] = {l: [] for l in range(2, net.n_layers + 1)}
    for x in points:
        _, per_layer = forward(net, x)
        for k, (zk, ak) in enumerate(per_layer):
            z[k + 2].append(zk)
            a[k + 2].append(ak)
    return ActivationCache(
        inputs=points.copy(),
        z={l: np.vstack(v) for l, v in z.items()},
        a={l: np.vstack(v) for l, v in a.items()},
    )


def size_of(net: Network) -> int:
    """Total stored non-zero weights."""
    return sum(w.nnz() for w in net.weights)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.001
    batch_size: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train(arch: list[int], data: Dataset, cfg: TrainConfig) -> Network:
    """Adam on softmax cross-entropy over the train split; single-threaded
    and deterministic for a fixed seed. Bias columns are embedded."""
    if len(arch) < 2:
        raise DimensionMismatch("architecture needs input and output sizes")
    x_train, y_train = data.subset("train") if "train" in data.splits else (data.features, data.labels)
    if x_train.shape[0] == 0:
        raise ValueError("train split is empty")
    if arch[0] != x_train.shape[1]:
        raise DimensionMismatch(f"arch input {arch[0]} != data features {x_train.shape[1]}")
    if arch[-1] < int(y_train.max()) + 1:
        raise DimensionMismatch("output layer smaller than the number of classes")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    weights = []
    for fan_in, fan_out in zip(arch, arch[1:]):
        w = np.zeros((fan_out, fan_in + 1))
        w[:, :-1] = rng.normal(scale=np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        weights.append(w)

    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    m_state = [np.zeros_like(w) for w in weights]
    v_state = [np.zeros_like(w) for w in weights]
    step = 0
    n = x_train.shape[0]
    onehot = np.zeros((n, arch[-1]))
    onehot[np.arange(n), y_train] = 1.0

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            xb, tb = x_train[batch], onehot[batch]
            # forward pass, keeping bias-augmented layer inputs for the backward pass
            acts = []
            a = xb
            for k, w in enumerate(weights):
                a_aug = np.hstack([a, np.ones((a.shape[0], 1))])
                acts.append(a_aug)
                zb = a_aug @ w.T
                a = zb if k == len(weights) - 1 else np.maximum(zb, 0.0)
            probs = _softmax(a)
            loss = -np.log(np.clip(probs[np.arange(len(batch)), y_train[batch]], 1e-300, None)).mean()
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch + 1)
            grad_z = (probs - tb) / len(batch)
            grads = [None] * len(weights)
            for k in range(len(weights) - 1, -1, -1):
                grads[k] = grad_z.T @ acts[k]
                if k > 0:
                    grad_a = grad_z @ weights[k][:, :-1]
                    grad_z = grad_a * (acts[k][:, :-1] > 0.0)
            step += 1
            for k, g in enumerate(grads):
                m_state[k] = beta1 * m_state[k] + (1 - beta1) * g
                v_state[k] = beta2 * v_state[k] + (1 - beta2) * g * g
                m_hat = m_state[k] / (1 - beta1 ** step)
                v_hat = v_state[k] / (1 - beta2 ** step)
                weights[k] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps_adam)

    return Network(tuple(DenseMatrix(w) for w in weights), bias_embedded=True)


def to_sparse(net: Network) -> Network:
    """Same network with every layer stored sparsely."""
    return Network(
        tuple(w if isinstance(w, SparseRowMatrix) else SparseRowMatrix.from_dense(w)
              for w in net.weights),
        bias_embedded=net.bias_embedded,
    )
