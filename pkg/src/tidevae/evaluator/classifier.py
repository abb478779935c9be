"""Compact CNN used to score normal vs abnormal images."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np

from ..engine import ops
from ..engine.rng import Rng
from ..engine.tensor import Tensor, backward, no_grad, parameter
from ..trainer import AdamState, TrainConfig, adam_step, collect_grads, iterate_batches

LAYERS = (("stem", 8, 1), ("down1", 16, 2), ("down2", 32, 2))


@dataclass
class ClassifierConfig:
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 3e-3
    seed: int = 0

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClassifierConfig":
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            raise ValueError(f"unknown ClassifierConfig keys: {unknown}")
        return cls(**d)


@dataclass
class DeskClassifier:
    params: dict[str, Tensor] = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)


def build_classifier(rng: Rng, channels: int = 3) -> DeskClassifier:
    params = {}
    cin = channels
    for name, cout, _ in LAYERS:
        bound = np.sqrt(6.0 / (cin * 9))
        params[f"{name}.weight"] = parameter(rng.uniform(cout * cin * 9, -bound, bound).reshape(cout, cin, 3, 3))
        params[f"{name}.bias"] = parameter(np.zeros(cout))
        cin = cout
    bound = np.sqrt(6.0 / cin)
    params["head.weight"] = parameter(rng.uniform(cin, -bound, bound).reshape(cin, 1))
    params["head.bias"] = parameter(np.zeros(1))
    return DeskClassifier(params)


def logits(clf: DeskClassifier, images) -> Tensor:
    h = Tensor(np.asarray(images, dtype=np.float64) - 0.5)
    for name, _, stride in LAYERS:
        h = ops.relu(ops.conv2d(h, clf.params[f"{name}.weight"], clf.params[f"{name}.bias"], stride=stride, pad=1))
    return ops.dense(ops.global_avg_pool(h), clf.params["head.weight"], clf.params["head.bias"])


def classify(clf: DeskClassifier, images, chunk: int = 128) -> np.ndarray:
    """Probability of the abnormal class per image."""
    out = []
    with no_grad():
        for s in range(0, len(images), chunk):
            a = logits(clf, images[s:s + chunk]).data[:, 0]
            out.append(1.0 / (1.0 + np.exp(-a)))
    return np.concatenate(out)


def train_desk_classifier(images, labels, cfg: ClassifierConfig | None = None) -> DeskClassifier:
    """Adam on the mean binary cross-entropy of the logits."""
    cfg = cfg or ClassifierConfig()
    x = np.asarray(images, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise ValueError("training set must contain both classes")
    rng = Rng(cfg.seed)
    clf = build_classifier(rng.fork(), x.shape[1])
    order_rng = rng.fork()
    adam_cfg = TrainConfig(learning_rate=cfg.learning_rate, batch_size=cfg.batch_size, max_epochs=cfg.epochs)
    state = AdamState()
    for _ in range(cfg.epochs):
        total = 0.0
        for idx in iterate_batches(len(x), cfg.batch_size, order_rng):
            for p in clf.params.values():
                p.grad = None
            loss = ops.bce_with_logits(logits(clf, x[idx]), y[idx, None])
            backward(loss)
            adam_step(state, clf.params, collect_grads(clf.params), adam_cfg)
            total += loss.item() * len(idx)
        clf.loss_history.append(total / len(x))
    return clf
