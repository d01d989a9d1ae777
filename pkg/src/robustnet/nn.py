"""Feed-forward ReLU classifier with inverted hidden dropout.

Weights are stored input-major: layer ``k`` maps a row vector of size
``layer_sizes[k]`` to ``layer_sizes[k+1]`` via ``x @ W + b``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, StandardizerStats, standardize
from .tensor import Matrix, ShapeError, add_row_broadcast, argmax_rows, as_matrix, matmul

LOG_EPS = 1e-12
FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, loss: float, label: str = ""):
        who = f"model {label}: " if label else ""
        super().__init__(f"{who}training diverged at step {step} (loss={loss})")
        self.step = step
        self.label = label


class Activation(enum.Enum):
    RELU = "relu"


class Optimizer(enum.Enum):
    SGD_MOMENTUM = "sgd-momentum"
    ADAM = "adam"


@dataclass(frozen=True)
class NetworkConfig:
    layer_sizes: tuple[int, ...] = (149, 128, 256, 128, 7)
    hidden_dropout: float = 0.5
    activation: Activation = Activation.RELU

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        if not 0.0 <= self.hidden_dropout < 1.0:
            raise ValueError(f"hidden_dropout must lie in [0, 1), got {self.hidden_dropout}")

    @classmethod
    def for_data(cls, d: int, classes: int, hidden: Sequence[int] = (128, 256, 128),
                 hidden_dropout: float = 0.5) -> "NetworkConfig":
        return cls((d, *hidden, classes), hidden_dropout)

    @property
    def inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def classes(self) -> int:
        return self.layer_sizes[-1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: Optimizer = Optimizer.ADAM
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


# A layer transition is a (weights, bias) pair; bias is 1 x fan_out.
Parameters = list[tuple[Matrix, Matrix]]


@dataclass(frozen=True, eq=False)
class TrainedModel:
    config: NetworkConfig
    params: Parameters
    standardizer: StandardizerStats
    label: str = ""
    seed: int = 0
    final_loss: float = float("nan")
    training: TrainConfig = field(default_factory=TrainConfig)
    loss_history: tuple[float, ...] = ()

    def __post_init__(self):
        if self.standardizer.d != self.config.inputs:
            raise ShapeError(
                f"standardizer covers {self.standardizer.d} columns, network expects {self.config.inputs}")
        _check_params(self.params, self.config)


def _check_params(params: Parameters, config: NetworkConfig) -> None:
    sizes = config.layer_sizes
    if len(params) != len(sizes) - 1:
        raise ShapeError(f"{len(params)} layers of parameters for {len(sizes) - 1} transitions")
    for k, (w, b) in enumerate(params):
        if w.shape != (sizes[k], sizes[k + 1]) or b.shape != (1, sizes[k + 1]):
            raise ShapeError(f"layer {k}: got W{w.shape}, b{b.shape} for {sizes[k]}->{sizes[k + 1]}")


def init_params(config: NetworkConfig, seed: int) -> Parameters:
    """He-normal weights (std sqrt(2 / fan_in)) and zero biases."""
    rng = np.random.default_rng([seed, 0])
    params = []
    for fan_in, fan_out in zip(config.layer_sizes[:-1], config.layer_sizes[1:]):
        w = rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in)
        params.append((as_matrix(w), as_matrix(np.zeros((1, fan_out)))))
    return params


@dataclass(frozen=True)
class TrainMode:
    """Dropout masks for optimizer step ``step`` are drawn from ``(seed, step)``."""

    seed: int
    step: int


INFER = None


@dataclass(frozen=True, eq=False)
class ForwardPass:
    # activations[0] is the input, activations[-1] the softmax output
    activations: list[Matrix]
    # per hidden layer: 0 or 1/keep entries, None in inference mode
    masks: list[np.ndarray | None]

    @property
    def probs(self) -> Matrix:
        return self.activations[-1]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: Parameters, config: NetworkConfig, x: Matrix,
            mode: TrainMode | None = INFER) -> ForwardPass:
    if x.ndim != 2 or x.shape[1] != config.inputs:
        raise ShapeError(f"input has shape {x.shape}, network expects {config.inputs} columns")
    rng = None
    keep = 1.0 - config.hidden_dropout
    if mode is not None and config.hidden_dropout > 0:
        rng = np.random.default_rng([mode.seed, 2, mode.step])
    activations = [x]
    masks: list[np.ndarray | None] = []
    h = x
    last = len(params) - 1
    for k, (w, b) in enumerate(params):
        z = add_row_broadcast(matmul(h, w), b)
        if k == last:
            h = as_matrix(softmax(z))
        else:
            h = np.maximum(z, 0.0)
            if rng is not None:
                mask = (rng.random(h.shape) < keep) / keep
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
            h = as_matrix(h)
        activations.append(h)
    return ForwardPass(activations, masks)


def loss_softmax_ce(probs: Matrix, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = probs.shape
    if labels.shape != (n,):
        raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    rows = np.arange(n)
    loss = float(-np.mean(np.log(probs[rows, labels] + LOG_EPS)))
    grad = np.array(probs)
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def backward(params: Parameters, config: NetworkConfig, activations: Sequence[Matrix],
             grad_logits: np.ndarray, masks: Sequence[np.ndarray | None]) -> Parameters:
    """Gradients of the (masked) network loss, shaped like ``params``."""
    if len(activations) != len(params) + 1 or len(masks) != len(params) - 1:
        raise ShapeError("activations/masks do not match the network depth")
    if grad_logits.shape != activations[-1].shape:
        raise ShapeError(f"grad_logits {grad_logits.shape} vs output {activations[-1].shape}")
    grads: list = [None] * len(params)
    delta = grad_logits
    for k in range(len(params) - 1, -1, -1):
        w, _ = params[k]
        a_prev = activations[k]
        grads[k] = (a_prev.T @ delta, delta.sum(axis=0, keepdims=True))
        if k > 0:
            upstream = delta @ w.T
            # a_prev > 0 exactly where the unit was active and kept
            gate = a_prev > 0
            mask = masks[k - 1]
            delta = upstream * gate if mask is None else upstream * gate * mask
    return grads


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for pair in params for p in pair]
        self.v = [np.zeros_like(p) for pair in params for p in pair]
        self.t = 0

    def step(self, flat_params, flat_grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(flat_params, flat_grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Momentum:
    def __init__(self, params, lr, momentum=0.9):
        self.lr, self.mu = lr, momentum
        self.vel = [np.zeros_like(p) for pair in params for p in pair]

    def step(self, flat_params, flat_grads):
        for p, g, vel in zip(flat_params, flat_grads, self.vel):
            vel *= self.mu
            vel -= self.lr * g
            p += vel


def train(dataset: Dataset, config: NetworkConfig, tc: TrainConfig,
          standardizer: StandardizerStats | None = None, label: str = "") -> TrainedModel:
    """Minibatch training on an already standardized (and corrupted) dataset.

    Batches are reshuffled every epoch from ``(tc.seed, epoch)``. Without a
    ``standardizer`` an identity one is attached to the model.
    """
    n = dataset.n
    if dataset.d != config.inputs:
        raise ShapeError(f"dataset has {dataset.d} columns, network expects {config.inputs}")
    if dataset.labels.max() >= config.classes:
        raise ValueError(f"labels exceed the {config.classes} network outputs")
    if tc.batch_size > n:
        raise ValueError(f"batch_size {tc.batch_size} exceeds the {n} training rows")
    if standardizer is None:
        standardizer = StandardizerStats(np.zeros(config.inputs), np.ones(config.inputs))

    params = [(np.array(w), np.array(b)) for w, b in init_params(config, tc.seed)]
    flat = [p for pair in params for p in pair]
    opt_cls = _Adam if tc.optimizer is Optimizer.ADAM else _Momentum
    opt = opt_cls(params, tc.learning_rate)

    x_all, y_all = dataset.features, dataset.labels
    with np.errstate(over="ignore", invalid="ignore"):
        history = _fit(params, flat, opt, config, tc, x_all, y_all, label)
    epoch_loss = history[-1]
    if not all(np.all(np.isfinite(p)) for p in flat):
        raise TrainingDivergedError(tc.epochs * math.ceil(n / tc.batch_size), epoch_loss, label)
    frozen = [(as_matrix(w), as_matrix(b)) for w, b in params]
    return TrainedModel(config, frozen, standardizer, label, tc.seed, epoch_loss, tc, tuple(history))


def _fit(params, flat, opt, config, tc, x_all, y_all, label) -> list[float]:
    n = x_all.shape[0]
    step = 0
    history = []
    for epoch in range(tc.epochs):
        order = np.random.default_rng([tc.seed, 1, epoch]).permutation(n)
        total = 0.0
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            fp = forward(params, config, x_all[idx], TrainMode(tc.seed, step))
            loss, grad = loss_softmax_ce(fp.probs, y_all[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(step, loss, label)
            grads = [g for pair in backward(params, config, fp.activations, grad, fp.masks) for g in pair]
            if not all(np.isfinite(g).all() for g in grads):
                raise TrainingDivergedError(step, float("nan"), label)
            opt.step(flat, grads)
            total += loss * idx.size
            step += 1
        history.append(total / n)
    return history


def predict_standardized(model: TrainedModel, z: Matrix) -> np.ndarray:
    return np.asarray(argmax_rows(forward(model.params, model.config, z).probs), dtype=np.int64)


def predict(model: TrainedModel, x_raw: Matrix) -> np.ndarray:
    """Class labels for raw (unstandardized) feature rows."""
    x_raw = as_matrix(x_raw)
    if x_raw.shape[1] != model.config.inputs:
        raise ShapeError(f"input has {x_raw.shape[1]} columns, model expects {model.config.inputs}")
    return predict_standardized(model, standardize(model.standardizer, x_raw))


def accuracy(model: TrainedModel, dataset: Dataset) -> float:
    """Fraction of rows of a raw dataset whose predicted label is correct."""
    if dataset.n == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(model, dataset.features) == dataset.labels))


# -- persistence ---------------------------------------------------------

def _encode_matrix(m: np.ndarray) -> dict:
    m = np.atleast_2d(m)
    return {"shape": list(m.shape), "values": " ".join(format(v, ".17g") for v in m.ravel().tolist())}


def _decode_matrix(doc: dict) -> Matrix:
    rows, cols = doc["shape"]
    values = [float(t) for t in doc["values"].split()]
    return as_matrix(values, rows, cols)


def model_to_dict(model: TrainedModel) -> dict:
    tc = model.training
    return {
        "format": "robustnet-model",
        "version": FORMAT_VERSION,
        "label": model.label,
        "seed": model.seed,
        "final_loss": format(model.final_loss, ".17g"),
        "loss_history": [format(v, ".17g") for v in model.loss_history],
        "network": {
            "layer_sizes": list(model.config.layer_sizes),
            "hidden_dropout": format(model.config.hidden_dropout, ".17g"),
            "activation": model.config.activation.value,
        },
        "training": {
            "epochs": tc.epochs,
            "batch_size": tc.batch_size,
            "learning_rate": format(tc.learning_rate, ".17g"),
            "optimizer": tc.optimizer.value,
            "seed": tc.seed,
        },
        "standardizer": {
            "means": _encode_matrix(model.standardizer.means),
            "stds": _encode_matrix(model.standardizer.stds),
        },
        "layers": [{"weights": _encode_matrix(w), "bias": _encode_matrix(b)} for w, b in model.params],
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != "robustnet-model":
        raise ValueError("not a robustnet model document")
    net = doc["network"]
    config = NetworkConfig(tuple(net["layer_sizes"]), float(net["hidden_dropout"]),
                           Activation(net["activation"]))
    t = doc["training"]
    tc = TrainConfig(t["epochs"], t["batch_size"], float(t["learning_rate"]),
                     Optimizer(t["optimizer"]), t["seed"])
    st = doc["standardizer"]
    stats = StandardizerStats(_decode_matrix(st["means"]).ravel(), _decode_matrix(st["stds"]).ravel())
    params = [(_decode_matrix(layer["weights"]), _decode_matrix(layer["bias"])) for layer in doc["layers"]]
    return TrainedModel(config, params, stats, doc["label"], doc["seed"],
                        float(doc["final_loss"]), tc,
                        tuple(float(v) for v in doc.get("loss_history", ())))


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
