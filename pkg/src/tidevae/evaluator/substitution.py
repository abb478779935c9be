"""Train on synthetic, test on real: the substitution protocol.

Per repetition: sample a fresh synthetic set from the per-class generators,
split synthetic and real sets into stratified folds, and for every fold
index i train one classifier on the synthetic folds != i and one on the real
folds != i; both are scored on real fold i.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..dataio.toy import LabeledDataset
from ..engine.rng import Rng
from ..model import TideConfig, TideVae, build_model, generate
from ..trainer import TrainConfig, TrainReport, train
from .classifier import ClassifierConfig, classify, train_desk_classifier
from .metrics import AucSummary, roc_auc, stratified_kfold


@dataclass
class SubstitutionReport:
    real_aucs: np.ndarray       # (repetitions, k)
    synthetic_aucs: np.ndarray  # (repetitions, k)
    k: int
    repetitions: int
    generator_reports: dict = field(default_factory=dict)

    @property
    def real(self) -> AucSummary:
        return AucSummary.of(self.real_aucs.ravel())

    @property
    def synthetic(self) -> AucSummary:
        return AucSummary.of(self.synthetic_aucs.ravel())

    def table(self, name: str = "TIDE") -> str:
        rows = [("Training data", "AUC (%)"), ("Real", str(self.real)), (name, str(self.synthetic))]
        width = max(len(r[0]) for r in rows) + 2
        lines = [f"{a:<{width}}{b}" for a, b in rows]
        lines.append(f"({self.k}-fold, {self.repetitions} repetitions, mean ± std over folds x repetitions)")
        return "\n".join(lines)


def synthesize(generators: Mapping[int, TideVae], counts: Mapping[int, int], rng: Rng) -> LabeledDataset:
    images, labels = [], []
    for label in (0, 1):
        images.append(generate(generators[label], rng.fork(), counts[label]))
        labels.append(np.full(counts[label], label))
    return LabeledDataset(np.concatenate(images), np.concatenate(labels))


def substitution_experiment(real: LabeledDataset, generators: Mapping[int, TideVae],
                            counts: Mapping[int, int], k: int = 10, repetitions: int = 10, seed: int = 0,
                            classifier: ClassifierConfig | None = None,
                            progress: Callable[[str], None] | None = None) -> SubstitutionReport:
    classifier = classifier or ClassifierConfig()
    for label in (0, 1):
        g = generators[label]
        expected = (g.config.channels, *g.config.image_size)
        if tuple(real.images.shape[1:]) != expected:
            raise ValueError(f"generator {label} produces {expected} images, real images are {real.images.shape[1:]}")
        if counts[label] < k:
            raise ValueError(f"synthetic count for class {label} ({counts[label]}) is below k={k}")
    rng = Rng(seed)
    real_aucs = np.zeros((repetitions, k))
    synth_aucs = np.zeros((repetitions, k))
    for rep in range(repetitions):
        rep_rng = rng.fork()
        synth = synthesize(generators, counts, rep_rng.fork())
        split_seed = int(rep_rng.u32(1)[0])
        real_folds = stratified_kfold(real.labels, k, seed=split_seed)
        synth_folds = stratified_kfold(synth.labels, k, seed=split_seed + 1)
        for i in range(k):
            test = real.subset(real_folds[i])
            clf_seed = int(rep_rng.u32(1)[0])
            cfg = ClassifierConfig(classifier.epochs, classifier.batch_size, classifier.learning_rate, clf_seed)
            for source, folds, out in ((synth, synth_folds, synth_aucs), (real, real_folds, real_aucs)):
                train_idx = np.concatenate([folds[j] for j in range(k) if j != i])
                clf = train_desk_classifier(source.images[train_idx], source.labels[train_idx], cfg)
                out[rep, i] = roc_auc(classify(clf, test.images), test.labels).auc
            if progress:
                progress(f"repetition {rep + 1} fold {i + 1}: real {real_aucs[rep, i]:.3f} "
                         f"synthetic {synth_aucs[rep, i]:.3f}")
    return SubstitutionReport(real_aucs, synth_aucs, k, repetitions)


def train_class_generators(real: LabeledDataset, model_cfg: TideConfig, train_cfg: TrainConfig,
                           on_epoch=None) -> tuple[dict[int, TideVae], dict[int, TrainReport]]:
    """One TIDE model per class, each trained on that class's full real subset."""
    models, reports = {}, {}
    for label in (0, 1):
        subset = real.of_class(label)
        cfg = TrainConfig(**{**train_cfg.__dict__, "seed": train_cfg.seed + label})
        model = build_model(model_cfg, Rng(train_cfg.seed * 2 + label + 1))
        models[label], reports[label] = train(model, subset.images, cfg,
                                              on_epoch=(lambda r, lab=label: on_epoch(lab, r)) if on_epoch else None)
    return models, reports
