"""Procedural two-class image sets for desk-scale experiments.

Label 0 ("normal") images are smooth, low-frequency colour fields in a warm
palette (red dominant, green carrying the pattern, blue mostly off). Label 1
("abnormal") images are drawn from the same field distribution and then
darkened inside a soft, randomly placed ellipse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..engine.rng import Rng

KINDS = ("blobs", "stripes")
_GAIN = 8.0


@dataclass
class LabeledDataset:
    images: np.ndarray  # (N, 3, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int, 0 = normal, 1 = abnormal
    paths: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.paths:
            self.paths = [f"item_{i:05d}" for i in range(len(self.labels))]
        if not (len(self.images) == len(self.labels) == len(self.paths)):
            raise ValueError(f"dataset length mismatch: {len(self.images)} images, "
                             f"{len(self.labels)} labels, {len(self.paths)} paths")
        if self.images.ndim != 4 and len(self.images):
            raise ValueError(f"images must be (N, 3, H, W), got {self.images.shape}")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def resolution(self) -> tuple[int, int]:
        return tuple(self.images.shape[2:])

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.images[idx], self.labels[idx], [self.paths[i] for i in idx])

    def of_class(self, label: int) -> "LabeledDataset":
        return self.subset(np.flatnonzero(self.labels == label))


def _grid(res: int) -> tuple[np.ndarray, np.ndarray]:
    c = (np.arange(res) + 0.5) / res
    return np.meshgrid(c, c, indexing="ij")


def _field(kind: str, rng: Rng, res: int) -> np.ndarray:
    """Smooth per-channel field squashed by a steep logistic.

    Most pixels saturate near 0 or 1, which keeps the per-pixel Bernoulli
    entropy of the images (the floor of the reconstruction loss) low.
    """
    yy, xx = _grid(res)
    if kind == "blobs":
        mod = np.zeros((res, res))
        for _ in range(3):
            cy, cx, s, a = rng.uniform(4)
            sign = 1.0 if a > 0.5 else -1.0
            mod += sign * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * (0.12 + 0.15 * s) ** 2))
    else:
        theta, freq, phase = rng.uniform(3)
        freq = 1.0 + 1.0 * freq
        proj = np.cos(np.pi * theta) * xx + np.sin(np.pi * theta) * yy
        mod = np.sin(2 * np.pi * freq * proj + 2 * np.pi * phase)
    offset = rng.uniform(3, -0.25, 0.25)
    # red mostly on, green follows the pattern, blue mostly off
    logits = np.stack([0.8 + offset[0] + 0.3 * mod, offset[1] + mod, -0.8 + offset[2] + 0.3 * mod])
    return 1.0 / (1.0 + np.exp(-_GAIN * logits))


def _lesion(img: np.ndarray, rng: Rng) -> np.ndarray:
    res = img.shape[1]
    yy, xx = _grid(res)
    cy, cx, ra, rb, ang = rng.uniform(5)
    cy, cx = 0.25 + 0.5 * cy, 0.25 + 0.5 * cx
    ra, rb = 0.12 + 0.12 * ra, 0.10 + 0.08 * rb
    ang *= np.pi
    dy, dx = yy - cy, xx - cx
    u = np.cos(ang) * dx + np.sin(ang) * dy
    v = -np.sin(ang) * dx + np.cos(ang) * dy
    d = np.sqrt((u / ra) ** 2 + (v / rb) ** 2)
    mask = 1.0 / (1.0 + np.exp((d - 1.0) * 12.0))
    return img * (1.0 - 0.97 * mask)[None]


def make_toy_dataset(kind: str = "blobs", n_per_class: int = 64, resolution: int = 32,
                     seed: int = 0) -> LabeledDataset:
    """``n_per_class`` normal images followed by ``n_per_class`` abnormal ones."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = Rng(seed)
    images, labels, paths = [], [], []
    for label in (0, 1):
        for i in range(n_per_class):
            item = rng.fork()
            img = _field(kind, item, resolution)
            if label:
                img = _lesion(img, item)
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(label)
            paths.append(f"{kind}_{'abnormal' if label else 'normal'}_{i:04d}.ppm")
    return LabeledDataset(np.stack(images).astype(np.float32), np.array(labels), paths)
