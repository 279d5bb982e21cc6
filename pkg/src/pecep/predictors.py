"""Next-step predictors and residual collection.

Three predictor families share a ``predict(inputs) -> outputs`` surface:

* ``oracle`` -- linear map built from the true VAR coefficients,
* ``ols``    -- linear map fitted by SVD least squares,
* ``fcn``    -- three-layer fully connected network (ReLU, dropout, sigmoid
  output) trained with AdamW under a cosine learning-rate schedule.
  Backpropagation is written out by hand.
"""

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import DivergenceError, InvalidConfigError, InvalidInputError
from .linalg import as_matrix, solve_least_squares


class LinearPredictor:
    """``y = x @ coef`` with ``coef`` laid out as ``[A_1^T; A_2^T; ...]``."""

    def __init__(self, coef, kind="ols"):
        self.coef = np.asarray(coef, dtype=np.float64)
        self.kind = kind

    @property
    def input_dim(self):
        return self.coef.shape[0]

    @property
    def output_dim(self):
        return self.coef.shape[1]

    def predict(self, inputs):
        return np.asarray(inputs, dtype=np.float64) @ self.coef

    def lag_matrices(self):
        """Recover the per-lag ``d x d`` coefficient blocks ``A_1 .. A_m``."""
        d = self.output_dim
        m = self.input_dim // d
        return [self.coef[i * d:(i + 1) * d].T for i in range(m)]


def fit_ols(design, targets, rcond=None):
    return LinearPredictor(solve_least_squares(design, targets, rcond), kind="ols")


def oracle_predictor(proc):
    return LinearPredictor(np.vstack([a.T for a in proc.coeffs]), kind="oracle")


# -- fully connected network -------------------------------------------------

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass
class FcnConfig:
    hidden1: int = 512
    hidden2: int = 256
    dropout_rate: float = 0.10
    epochs: int = 50
    batch_size: int = 128
    base_learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dtype: str = "float64"

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.epochs < 1:
            raise InvalidConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1 or self.hidden1 < 1 or self.hidden2 < 1:
            raise InvalidConfigError("batch_size and hidden sizes must be >= 1")


def _sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class FcnPredictor:
    kind = "fcn"

    def __init__(self, params, dropout_rate=0.0):
        self.params = params
        self.dropout_rate = dropout_rate

    @property
    def input_dim(self):
        return self.params["w1"].shape[0]

    @property
    def output_dim(self):
        return self.params["w3"].shape[1]

    @property
    def dims(self):
        return (self.input_dim, self.params["w1"].shape[1], self.params["w2"].shape[1], self.output_dim)

    def forward(self, x, dropout_mask=None):
        """Forward pass; returns the output and the cache needed by backward.

        ``dropout_mask`` is an already-scaled multiplier on the first hidden
        layer (inverted dropout); ``None`` means inference mode.
        """
        p = self.params
        z1 = x @ p["w1"] + p["b1"]
        a1 = np.maximum(z1, 0)
        h1 = a1 if dropout_mask is None else a1 * dropout_mask
        z2 = h1 @ p["w2"] + p["b2"]
        a2 = np.maximum(z2, 0)
        y = _sigmoid(a2 @ p["w3"] + p["b3"])
        return y, (x, z1, h1, z2, a2, y, dropout_mask)

    def predict(self, inputs, batch_size=4096):
        x = np.asarray(inputs, dtype=self.params["w1"].dtype)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise InvalidInputError(f"expected inputs with {self.input_dim} columns, got {x.shape}")
        out = [self.forward(x[i:i + batch_size])[0] for i in range(0, x.shape[0], batch_size)]
        return np.vstack(out) if out else np.zeros((0, self.output_dim), x.dtype)

    def loss_and_grads(self, x, target, dropout_mask=None):
        """Mean squared error over all output entries and its gradients."""
        y, (x, z1, h1, z2, a2, y, mask) = self.forward(x, dropout_mask)
        p = self.params
        diff = y - target
        loss = float(np.mean(diff * diff))
        dy = (2.0 / diff.size) * diff
        dz3 = dy * y * (1.0 - y)
        grads = {"w3": a2.T @ dz3, "b3": dz3.sum(axis=0)}
        dz2 = (dz3 @ p["w3"].T) * (z2 > 0)
        grads["w2"] = h1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ p["w2"].T
        if mask is not None:
            dh1 = dh1 * mask
        dz1 = dh1 * (z1 > 0)
        grads["w1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return loss, grads

    def dropout_mask(self, n_rows, rng):
        rate = self.dropout_rate
        width = self.params["w1"].shape[1]
        dtype = self.params["w1"].dtype
        if rate == 0.0:
            return None
        keep = rng.random((n_rows, width)) >= rate
        return keep.astype(dtype) / dtype.type(1.0 - rate)

    def copy(self):
        return FcnPredictor({k: v.copy() for k, v in self.params.items()}, self.dropout_rate)


def fcn_init(cfg, input_dim, output_dim):
    """Fan-in scaled uniform initialization ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    if input_dim < 1 or output_dim < 1:
        raise InvalidInputError("input and output dims must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    dtype = np.dtype(cfg.dtype)
    shapes = [(input_dim, cfg.hidden1), (cfg.hidden1, cfg.hidden2), (cfg.hidden2, output_dim)]
    params = {}
    for i, (fan_in, fan_out) in enumerate(shapes, start=1):
        bound = 1.0 / math.sqrt(fan_in)
        params[f"w{i}"] = rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype)
        params[f"b{i}"] = rng.uniform(-bound, bound, fan_out).astype(dtype)
    return FcnPredictor(params, cfg.dropout_rate)


def cosine_lr(step, total_steps, base):
    """Single-cycle cosine annealing from ``base`` (step 0) toward 0."""
    if total_steps <= 1:
        return base
    return 0.5 * base * (1.0 + math.cos(math.pi * step / total_steps))


class ArrayDataset:
    """In-memory ``(inputs, targets)`` pair exposing the dataset protocol."""

    def __init__(self, inputs, targets):
        self.inputs = np.asarray(inputs)
        self.targets = np.asarray(targets)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise InvalidInputError("inputs and targets must have the same number of rows")

    def __len__(self):
        return self.inputs.shape[0]

    def take(self, idx):
        return self.inputs[idx], self.targets[idx]


def _as_dataset(data):
    if hasattr(data, "take"):
        return data
    inputs, targets = data
    return ArrayDataset(inputs, targets)


def evaluate_mse(model, data, batch_size=2048):
    data = _as_dataset(data)
    n = len(data)
    total = 0.0
    count = 0
    for start in range(0, n, batch_size):
        x, t = data.take(np.arange(start, min(n, start + batch_size)))
        y = model.predict(x)
        total += float(np.sum((y - t) ** 2, dtype=np.float64))
        count += t.size
    return total / count


@dataclass
class TrainingHistory:
    train_mse: List[float] = field(default_factory=list)
    val_mse: List[float] = field(default_factory=list)
    learning_rate: List[float] = field(default_factory=list)


def fcn_train(model, train_set, val_set, cfg):
    """Minibatch AdamW training with decoupled weight decay.

    The learning rate follows a cosine curve over all optimizer steps,
    dropout is active only while computing gradients, and the final-epoch
    model is returned together with per-epoch train/validation MSE.
    """
    train_set = _as_dataset(train_set)
    val_set = _as_dataset(val_set) if val_set is not None else None
    rng = np.random.default_rng((cfg.seed, 1))
    n = len(train_set)
    if n == 0:
        raise InvalidInputError("training set is empty")
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    params = model.params
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}
    b1, b2 = cfg.beta1, cfg.beta2
    history = TrainingHistory()
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        history.learning_rate.append(cosine_lr(step, total_steps, cfg.base_learning_rate))
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            x, t = train_set.take(idx)
            loss, grads = model.loss_and_grads(x, t, model.dropout_mask(len(idx), rng))
            if not math.isfinite(loss):
                raise DivergenceError(epoch, loss)
            epoch_loss += loss * len(idx)
            lr = cosine_lr(step, total_steps, cfg.base_learning_rate)
            step += 1
            c1 = 1.0 - b1 ** step
            c2 = 1.0 - b2 ** step
            for name in PARAM_NAMES:
                g = grads[name]
                w = params[name]
                w *= 1.0 - lr * cfg.weight_decay
                m1[name] *= b1
                m1[name] += (1.0 - b1) * g
                m2[name] *= b2
                m2[name] += (1.0 - b2) * (g * g)
                w -= (lr / c1) * m1[name] / (np.sqrt(m2[name] / c2) + cfg.adam_eps)
        mean_loss = epoch_loss / n
        if not math.isfinite(mean_loss):
            raise DivergenceError(epoch, mean_loss)
        history.train_mse.append(mean_loss)
        if val_set is not None and len(val_set):
            history.val_mse.append(evaluate_mse(model, val_set))
    return model, history


# -- residuals ---------------------------------------------------------------


@dataclass
class ResidualBatch:
    residuals: np.ndarray
    predictor_kind: str
    dataset_tag: str = ""
    frame_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.residuals = as_matrix(self.residuals, "residuals")
        if self.frame_mask is not None:
            self.frame_mask = np.asarray(self.frame_mask, dtype=bool)
            if self.frame_mask.shape != (self.residuals.shape[0],):
                raise InvalidInputError("frame_mask length must equal the number of residual rows")

    def masked(self):
        """Residual rows selected by ``frame_mask`` (all rows when absent)."""
        if self.frame_mask is None:
            return self.residuals
        return self.residuals[self.frame_mask]


def collect_residuals(model, test_design, test_targets, mask=None, dataset_tag=""):
    """``target - prediction`` for every test row, in evaluation order."""
    x = np.asarray(test_design)
    t = np.asarray(test_targets, dtype=np.float64)
    if x.ndim != 2 or t.ndim != 2 or x.shape[0] != t.shape[0]:
        raise InvalidInputError(f"mismatched test arrays {x.shape} and {t.shape}")
    if x.shape[1] != model.input_dim or t.shape[1] != model.output_dim:
        raise InvalidInputError(
            f"model maps {model.input_dim} -> {model.output_dim}, got {x.shape[1]} -> {t.shape[1]}"
        )
    residuals = t - np.asarray(model.predict(x), dtype=np.float64)
    return ResidualBatch(residuals, model.kind, dataset_tag, mask)


# -- checkpoints ---------------------------------------------------------------

CHECKPOINT_MAGIC = b"PCEPFCN\x00"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sI4I")


def save_checkpoint(model, path, cfg=None, history=None, extra=None):
    """Write ``<path>`` (binary weights) and ``<path>.json`` (metadata).

    Layout: magic, uint32 version, four uint32 layer widths, then the blocks
    w1 b1 w2 b2 w3 b3 as flat little-endian float64, row-major.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, *model.dims))
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "dims": list(model.dims),
        "dropout_rate": model.dropout_rate,
        "config": asdict(cfg) if cfg is not None else None,
        "history": asdict(history) if history is not None else None,
    }
    meta.update(extra or {})
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`."""
    raw = Path(path).read_bytes()
    magic, version, *dims = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"{path}: not a model checkpoint")
    if version != CHECKPOINT_VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {version}")
    d_in, h1, h2, d_out = dims
    shapes = {
        "w1": (d_in, h1), "b1": (h1,),
        "w2": (h1, h2), "b2": (h2,),
        "w3": (h2, d_out), "b3": (d_out,),
    }
    offset = _HEADER.size
    params = {}
    for name in PARAM_NAMES:
        count = int(np.prod(shapes[name]))
        params[name] = np.frombuffer(raw, "<f8", count, offset).reshape(shapes[name]).astype(np.float64)
        offset += 8 * count
    if offset != len(raw):
        raise InvalidInputError(f"{path}: trailing bytes after weight blocks")
    meta_path = Path(str(path) + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return FcnPredictor(params, meta.get("dropout_rate", 0.0)), meta
