"""Line-oriented dataset manifests.

One record per line: ``<path> <label> [split]`` separated by whitespace,
label 0 (normal) or 1 (abnormal). Blank lines and ``#`` comments are
ignored. Paths are relative to the manifest's base directory unless absolute.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .images import resize_bilinear
from .ppm import read_ppm, write_ppm
from .toy import LabeledDataset


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    split: str | None = None


def parse_manifest(text: str, source: str = "<manifest>") -> list[ManifestEntry]:
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ManifestError(f"{source}:{lineno}: expected '<path> <label> [split]', got {raw!r}")
        path, label_s = parts[0], parts[1]
        if label_s not in ("0", "1"):
            raise ManifestError(f"{source}:{lineno}: label must be 0 or 1, got {label_s!r}")
        if path in seen:
            raise ManifestError(f"{source}:{lineno}: duplicate path {path!r} (first on line {seen[path]})")
        seen[path] = lineno
        entries.append(ManifestEntry(path, int(label_s), parts[2] if len(parts) == 3 else None))
    return entries


def read_manifest(path) -> list[ManifestEntry]:
    return parse_manifest(Path(path).read_text(encoding="utf-8"), os.fspath(path))


def load_manifest(path, base_dir=None, resolution: tuple[int, int] | None = None,
                  label: int | None = None) -> LabeledDataset:
    """Load every listed image (optionally one class only), resized to ``resolution``."""
    entries = read_manifest(path)
    if label is not None:
        entries = [e for e in entries if e.label == label]
    if not entries:
        raise ManifestError(f"{path}: manifest lists no images" + (f" with label {label}" if label is not None else ""))
    base = Path(base_dir) if base_dir is not None else Path(path).parent
    images = []
    for e in entries:
        file = Path(e.path) if os.path.isabs(e.path) else base / e.path
        if not file.exists():
            raise ManifestError(f"{path}: image file not found: {file}")
        img = read_ppm(file)
        if resolution is not None:
            img = resize_bilinear(img, resolution)
        images.append(img)
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise ManifestError(f"{path}: images have mixed resolutions {sorted(shapes)}; pass a target resolution")
    return LabeledDataset(np.stack(images), np.array([e.label for e in entries]), [e.path for e in entries])


def write_dataset(ds: LabeledDataset, out_dir, manifest_name: str = "manifest.txt") -> Path:
    """Write each image as PPM next to a manifest listing them in dataset order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for img, lab, p in zip(ds.images, ds.labels, ds.paths):
        name = Path(p).name if p.endswith(".ppm") else f"{Path(p).name}.ppm"
        write_ppm(img, out / name)
        lines.append(f"{name} {int(lab)}")
    target = out / manifest_name
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target


def load_images(source, resolution: tuple[int, int] | None = None, exclude: Iterable[str] = ()) -> np.ndarray:
    """A directory of PPMs or a manifest file -> (N, 3, H, W) array."""
    p = Path(source)
    if p.is_dir():
        files = [f for f in sorted(p.glob("*.ppm")) if f.name not in set(exclude)]
        if not files:
            raise ManifestError(f"{p}: no .ppm images found")
        imgs = [read_ppm(f) for f in files]
        if resolution is not None:
            imgs = [resize_bilinear(im, resolution) for im in imgs]
        return np.stack(imgs)
    return load_manifest(p, resolution=resolution).images
