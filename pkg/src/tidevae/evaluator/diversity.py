"""Spectral diversity: exp of the Shannon entropy of the eigenvalues of K/n."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..engine.tensor import no_grad
from ..model import TideVae, encode

FeatureExtractor = Callable[[np.ndarray], np.ndarray]

SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-8


def cosine_kernel(samples) -> np.ndarray:
    """K_ij = <v_i, v_j> / (|v_i| |v_j|), with an exact unit diagonal."""
    v = np.asarray(samples, dtype=np.float64)
    if v.ndim != 2:
        v = v.reshape(len(v), -1)
    norms = np.linalg.norm(v, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"sample {int(zero[0])} has zero norm; cosine similarity undefined")
    u = v / norms[:, None]
    k = u @ u.T
    k = 0.5 * (k + k.T)
    np.fill_diagonal(k, 1.0)
    return k


def jacobi_eigh(a, tol: float = 1e-10, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi for a symmetric matrix.

    Sweeps over every (p, q) pair, zeroing a_pq with a plane rotation, until
    the off-diagonal Frobenius norm drops below ``tol``. Returns unsorted
    (eigenvalues, eigenvectors as columns).
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(max(0.0, float((a * a).sum() - (np.diag(a) ** 2).sum())))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta^2 would overflow; t -> 1 / (2 theta)
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def check_kernel(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] == 0:
        raise ValueError(f"kernel must be a non-empty square matrix, got shape {k.shape}")
    asym = float(np.abs(k - k.T).max())
    if asym > SYMMETRY_TOL:
        raise ValueError(f"kernel is not symmetric (max |K - K^T| = {asym:.3g})")
    return k


def symmetric_eigenvalues(k) -> np.ndarray:
    """Eigenvalues of K/n, descending, small negative drift clamped to 0."""
    k = check_kernel(k)
    n = k.shape[0]
    lam, _ = jacobi_eigh(k / n)
    lam = np.sort(lam)[::-1]
    if lam[-1] < -PSD_TOL:
        raise ValueError(f"kernel is not positive semi-definite (eigenvalue {lam[-1]:.3g} of K/n)")
    return np.clip(lam, 0.0, None)


@dataclass
class DiversityReport:
    delta: float
    eigenvalues: np.ndarray
    kernel: str = "pixel"
    relative: Optional[float] = None
    n: int = field(init=False)

    def __post_init__(self):
        self.n = len(self.eigenvalues)


def entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def vendi_diversity(k, kernel: str = "pixel") -> DiversityReport:
    lam = symmetric_eigenvalues(k)
    n = len(lam)
    delta = float(np.clip(np.exp(entropy(lam)), 1.0, n))
    return DiversityReport(delta, lam, kernel)


def pixel_vectors(images) -> np.ndarray:
    """Raw flattened [0, 1] RGB values, no centring."""
    x = np.asarray(images, dtype=np.float64)
    return x.reshape(len(x), -1)


class EncoderPatchExtractor:
    """Trained-encoder posterior mean plus per-channel mean/variance on a grid of cells."""

    def __init__(self, model: TideVae, grid: int = 4, chunk: int = 32):
        self.model, self.grid, self.chunk = model, grid, chunk

    def patch_stats(self, images: np.ndarray) -> np.ndarray:
        n, c, h, w = images.shape
        g = self.grid
        ys = np.linspace(0, h, g + 1).astype(int)
        xs = np.linspace(0, w, g + 1).astype(int)
        feats = []
        for i in range(g):
            for j in range(g):
                cell = images[:, :, ys[i]:ys[i + 1], xs[j]:xs[j + 1]].reshape(n, c, -1)
                feats.append(cell.mean(axis=2))
                feats.append(cell.var(axis=2))
        return np.concatenate(feats, axis=1)

    def __call__(self, images) -> np.ndarray:
        x = np.asarray(images, dtype=self.model.dtype)
        mus = []
        with no_grad():
            for s in range(0, len(x), self.chunk):
                mus.append(encode(self.model, x[s:s + self.chunk]).mu.data)
        return np.concatenate([np.concatenate(mus).astype(np.float64), self.patch_stats(x.astype(np.float64))], axis=1)


def feature_embed(images, extractor: FeatureExtractor) -> np.ndarray:
    feats = np.asarray(extractor(np.asarray(images)), dtype=np.float64)
    if feats.ndim != 2 or len(feats) != len(images):
        raise ValueError(f"extractor must return one vector per image, got shape {feats.shape} for {len(images)} images")
    return feats


def kernel_for(images, kind: str = "pixel", extractor: FeatureExtractor | None = None) -> np.ndarray:
    if kind == "pixel":
        return cosine_kernel(pixel_vectors(images))
    if kind == "feature":
        if extractor is None:
            raise ValueError("feature kernel needs an extractor")
        return cosine_kernel(feature_embed(images, extractor))
    raise ValueError(f"unknown kernel kind {kind!r}")


def diversity(images, kind: str = "pixel", extractor: FeatureExtractor | None = None) -> DiversityReport:
    return vendi_diversity(kernel_for(images, kind, extractor), kind)


def relative_diversity(generated, real, kind: str = "pixel",
                       extractor: FeatureExtractor | None = None) -> tuple[float, DiversityReport, DiversityReport]:
    """Returns (delta_g / delta_r, generated report, real report).

    The ratio is not capped: values above 1 mean the generated set is more
    diverse than the real one.
    """
    if len(generated) == 0 or len(real) == 0:
        raise ValueError("relative diversity needs non-empty generated and real sets")
    gen = diversity(generated, kind, extractor)
    ref = diversity(real, kind, extractor)
    ratio = gen.delta / ref.delta
    gen.relative = ratio
    return ratio, gen, ref
