"""Pluggable place-classifier backend.

The trainable backend is a small two-layer softmax network: a shared body
(linear + ReLU) standing in for a transferred trunk, and a per-partition
softmax head that is replaced whenever the class set changes. A second
backend replays externally computed predictions from file.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    hidden: int = 64
    weight_scale: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.hidden < 1:
            raise ValueError("learning_rate, batch_size and hidden must be positive")
        if self.epochs < 0 or self.weight_scale < 0:
            raise ValueError("epochs and weight_scale must be non-negative")


@dataclass(eq=False)
class ModelParams:
    """Body (w1, b1) + softmax head (w2, b2); immutable by convention.

    final_loss and seed are training metadata carried for reporting and
    serialization; they do not affect predictions.
    """

    w1: np.ndarray  # (H, F)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (K, H)
    b2: np.ndarray  # (K,)
    final_loss: float | None = None
    seed: int | None = None

    @property
    def feature_dim(self) -> int:
        return int(self.w1.shape[1])

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.w2.shape[0])


def models_equal(a: ModelParams, b: ModelParams) -> bool:
    """Bitwise parameter equality."""
    return (
        np.array_equal(a.w1, b.w1)
        and np.array_equal(a.b1, b.b1)
        and np.array_equal(a.w2, b.w2)
        and np.array_equal(a.b2, b.b2)
    )


@dataclass(frozen=True, eq=False)
class Prediction:
    """A probability vector over one classifier's place classes."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = self.probs
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-6:
            raise ValueError("probabilities must be non-negative and sum to 1")


def _init_from_rng(f_dim: int, hidden: int, n_classes: int, rng: np.random.Generator,
                   weight_scale: float, seed: int | None = None) -> ModelParams:
    return ModelParams(
        w1=rng.uniform(-weight_scale, weight_scale, size=(hidden, f_dim)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-weight_scale, weight_scale, size=(n_classes, hidden)),
        b2=np.zeros(n_classes),
        seed=seed,
    )


def init_model(f_dim: int, hidden: int, n_classes: int, seed: int = 0,
               weight_scale: float = 0.1) -> ModelParams:
    """Seeded uniform init in [-weight_scale, weight_scale]; zero biases."""
    if min(f_dim, hidden, n_classes) < 1:
        raise ValueError("all dimensions must be >= 1")
    return _init_from_rng(f_dim, hidden, n_classes, np.random.default_rng(seed),
                          weight_scale, seed=seed)


def _forward(m: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    z1 = x @ m.w1.T + m.b1
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ m.w2.T + m.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return z1, a1, probs


def predict(m: ModelParams, feature: np.ndarray) -> Prediction:
    """Class probabilities for one feature vector."""
    f = np.asarray(feature, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != m.feature_dim:
        raise ValueError(f"feature dimension {f.shape} != model input {m.feature_dim}")
    _, _, probs = _forward(m, f[None, :])
    return Prediction(probs=probs[0])


@dataclass
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def loss_and_gradient(m: ModelParams, features: np.ndarray,
                      labels: np.ndarray) -> tuple[float, Gradients]:
    """Mean cross-entropy over the batch and exact analytic gradients.

    features: (n, F) batch, labels: (n,) class ids in [0, K).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    if np.any(y < 0) or np.any(y >= m.n_classes):
        raise ValueError("label out of range")
    z1, a1, probs = _forward(m, x)
    loss = float(-np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dw2 = dlogits.T @ a1
    db2 = dlogits.sum(axis=0)
    da1 = dlogits @ m.w2
    dz1 = da1 * (z1 > 0.0)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return loss, Gradients(w1=dw1, b1=db1, w2=dw2, b2=db2)


def _sgd(m: ModelParams, x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
         rng: np.random.Generator) -> ModelParams:
    w1, b1 = m.w1.copy(), m.b1.copy()
    w2, b2 = m.w2.copy(), m.b2.copy()
    n = x.shape[0]
    cur = ModelParams(w1, b1, w2, b2)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            _, g = loss_and_gradient(cur, x[idx], y[idx])
            w1 -= cfg.learning_rate * g.w1
            b1 -= cfg.learning_rate * g.b1
            w2 -= cfg.learning_rate * g.w2
            b2 -= cfg.learning_rate * g.b2
    final, _ = loss_and_gradient(cur, x, y)
    return ModelParams(w1, b1, w2, b2, final_loss=final, seed=cfg.seed)


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    present = np.unique(y)
    if np.any(present < 0) or np.any(present >= n_classes):
        raise ValueError("label out of range")
    missing = set(range(n_classes)) - set(int(c) for c in present)
    if missing:
        raise ValueError(f"classes without examples: {sorted(missing)}")
    return y


def train(features: np.ndarray, labels: np.ndarray, n_classes: int,
          cfg: TrainConfig) -> ModelParams:
    """Train a fresh model with seeded init and seeded minibatch shuffling.

    Every class in [0, n_classes) must have at least one example.
    """
    x = np.asarray(features, dtype=np.float64)
    y = _check_labels(labels, n_classes)
    rng = np.random.default_rng(cfg.seed)
    m = _init_from_rng(x.shape[1], cfg.hidden, n_classes, rng, cfg.weight_scale)
    return _sgd(m, x, y, cfg, rng)


def fine_tune(m: ModelParams, features: np.ndarray, labels: np.ndarray,
              n_classes: int, cfg: TrainConfig) -> ModelParams:
    """Warm-started retraining: keep the body, replace the softmax head with
    a fresh one sized to the new class count, then train as usual."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[1] != m.feature_dim:
        raise ValueError(f"feature dimension {x.shape[1]} != model input {m.feature_dim}")
    y = _check_labels(labels, n_classes)
    rng = np.random.default_rng(cfg.seed)
    warm = ModelParams(
        w1=m.w1.copy(),
        b1=m.b1.copy(),
        w2=rng.uniform(-cfg.weight_scale, cfg.weight_scale, size=(n_classes, m.hidden)),
        b2=np.zeros(n_classes),
    )
    return _sgd(warm, x, y, cfg, rng)


MODEL_FORMAT = "seasonvpc-model"
MODEL_FORMAT_VERSION = 1


def model_to_json(m: ModelParams) -> str:
    """Versioned JSON container: dimensions, seed, parameter arrays."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "feature_dim": m.feature_dim,
        "hidden": m.hidden,
        "n_classes": m.n_classes,
        "seed": m.seed,
        "final_loss": m.final_loss,
        "w1": m.w1.tolist(),
        "b1": m.b1.tolist(),
        "w2": m.w2.tolist(),
        "b2": m.b2.tolist(),
    }
    return json.dumps(doc)


def model_from_json(text: str) -> ModelParams:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a model container: format {doc.get('format')!r}")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model container version {doc.get('version')!r}")
    m = ModelParams(
        w1=np.asarray(doc["w1"], dtype=np.float64),
        b1=np.asarray(doc["b1"], dtype=np.float64),
        w2=np.asarray(doc["w2"], dtype=np.float64),
        b2=np.asarray(doc["b2"], dtype=np.float64),
        final_loss=doc.get("final_loss"),
        seed=doc.get("seed"),
    )
    if (m.feature_dim, m.hidden, m.n_classes) != (
        doc["feature_dim"], doc["hidden"], doc["n_classes"]
    ):
        raise ValueError("model container dimensions do not match its arrays")
    return m


@dataclass
class PrecomputedPredictions:
    """Replays externally computed class probabilities keyed by query id."""

    table: dict[str, np.ndarray]
    n_classes: int

    def predict(self, query_id: str) -> Prediction:
        if query_id not in self.table:
            raise KeyError(f"no stored prediction for query {query_id!r}")
        return Prediction(probs=self.table[query_id])


def load_precomputed(path) -> PrecomputedPredictions:
    """Load a `query_id,class_id,prob` CSV of stored classifier outputs.

    Each query's probabilities must sum to 1 within 1e-3 (they are then
    renormalized exactly); unmentioned classes get probability zero.
    """
    raw: dict[str, dict[int, float]] = {}
    max_class = -1
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row == ["query_id", "class_id", "prob"]):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected query_id,class_id,prob")
            qid = row[0].strip()
            try:
                cid = int(row[1])
                prob = float(row[2])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc
            if cid < 0 or prob < 0:
                raise ValueError(f"{path}:{lineno}: negative class id or probability")
            per_query = raw.setdefault(qid, {})
            if cid in per_query:
                raise ValueError(f"{path}:{lineno}: duplicate class {cid} for query {qid!r}")
            per_query[cid] = prob
            max_class = max(max_class, cid)
    if max_class < 0:
        raise ValueError(f"{path}: no prediction rows")
    n_classes = max_class + 1
    table = {}
    for qid, entries in raw.items():
        vec = np.zeros(n_classes)
        for cid, prob in entries.items():
            vec[cid] = prob
        total = float(vec.sum())
        if abs(total - 1.0) > 1e-3:
            raise ValueError(f"{path}: query {qid!r} probabilities sum to {total:.6f}")
        table[qid] = vec / total
    return PrecomputedPredictions(table=table, n_classes=n_classes)
