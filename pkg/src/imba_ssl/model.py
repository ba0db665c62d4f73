"""Small MLP classifier producing class-probability vectors."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError

CHECKPOINT_MAGIC = "IMBASSL-CKPT-1"


class MlpClassifier:
    """Plain linear/relu stack with a softmax head.

    Weights are Glorot-uniform, biases zero; identical (dims, seed) pairs
    reproduce bit-identical parameters.
    """

    def __init__(self, dims: Sequence[int], seed: int = 0):
        dims = [int(d) for d in dims]
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ConfigError(f"model dims must have >= 2 entries, all >= 1, got {dims}")
        self.dims = dims
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(Tensor(rng.uniform(-limit, limit, size=(fan_out, fan_in))))
            self.biases.append(Tensor(np.zeros(fan_out)))

    @property
    def n_classes(self) -> int:
        return self.dims[-1]

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def zero_grad(self) -> None:
        ad.zero_grad(self.parameters())

    def logits(self, x: Tensor) -> Tensor:
        """Graph forward pass up to the last linear layer."""
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.linear(w, b, h)
            if i != last:
                h = ad.relu(h)
        return h

    def predict_proba(self, x) -> Tensor:
        """Probability vector for one input (graph node, rank 1)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 1 or x.shape[0] != self.dims[0]:
            raise ShapeError(f"predict_proba: expected input of length {self.dims[0]}, got {x.shape}")
        return ad.softmax(self.logits(x))

    def predict_proba_batch(self, x) -> Tensor:
        """Row-wise probabilities for a rank-2 batch (graph node)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 2 or x.shape[1] != self.dims[0]:
            raise ShapeError(f"predict_proba_batch: expected (n, {self.dims[0]}), got {x.shape}")
        return ad.softmax(self.logits(x))

    def forward_numpy(self, x: np.ndarray) -> np.ndarray:
        """Graph-free batched forward pass, for evaluation loops."""
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.value.T + b.value
            if i != last:
                h = np.maximum(h, 0.0)
        shifted = h - h.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def get_state(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.parameters()]

    def set_state(self, state: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(state) != len(params):
            raise ConfigError(f"state has {len(state)} arrays, model expects {len(params)}")
        for p, arr in zip(params, state):
            if p.value.shape != arr.shape:
                raise ConfigError(f"state array shape {arr.shape} != parameter shape {p.value.shape}")
            p.value = np.array(arr, dtype=np.float64)


def init_model(dims: Sequence[int], seed: int = 0) -> MlpClassifier:
    return MlpClassifier(dims, seed)


def predicted_class(p) -> int:
    """Index of the highest probability; ties break toward the lowest index."""
    values = p.value if isinstance(p, Tensor) else np.asarray(p)
    return int(np.argmax(values))


def save_checkpoint(model: MlpClassifier, path) -> None:
    lines = [CHECKPOINT_MAGIC, "dims " + " ".join(str(d) for d in model.dims)]
    for p in model.parameters():
        flat = " ".join(repr(float(v)) for v in p.value.ravel())
        lines.append(flat)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> MlpClassifier:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    if len(lines) < 2 or not lines[1].startswith("dims "):
        raise ConfigError(f"{path}: missing dims header")
    dims = [int(tok) for tok in lines[1].split()[1:]]
    model = MlpClassifier(dims, seed=0)
    params = model.parameters()
    body = lines[2:]
    if len(body) != len(params):
        raise ConfigError(f"{path}: expected {len(params)} parameter rows, found {len(body)}")
    state = []
    for p, line in zip(params, body):
        arr = np.array([float(tok) for tok in line.split()], dtype=np.float64)
        if arr.size != p.value.size:
            raise ConfigError(f"{path}: parameter row has {arr.size} values, expected {p.value.size}")
        state.append(arr.reshape(p.value.shape))
    model.set_state(state)
    return model
