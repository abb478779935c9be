"""Variational objective, Adam, and the early-stopped training loop."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable, Mapping

import numpy as np

from .engine import ops
from .engine.rng import Rng
from .engine.tensor import Tensor, backward
from .model import LatentStats, TideVae, decode, encode, reparameterize

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    max_epochs: int = 5000
    batch_size: int = 128
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mc_samples: int = 1
    early_stop_patience: int = 100
    early_stop_min_rel_improvement: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {unknown}")
        return cls(**d)


# ----------------------------------------------------------------------------
# objective

def kl_term(stats: LatentStats) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over latent dims, averaged over batch."""
    mu, logvar = stats.mu, stats.logvar
    n = mu.shape[0]
    # sign kept positive so the standard-normal case is +0.0, not -0.0
    inner = ops.shift(ops.add(ops.sub(ops.exp(logvar), logvar), ops.square(mu)), -1.0)
    return ops.scale(ops.sum(inner), 0.5 / n)


def reconstruction_loss(pre_activations: Tensor, target) -> Tensor:
    """Per-pixel Bernoulli NLL in logit form, summed per image, averaged over the batch."""
    t = np.asarray(target.data if isinstance(target, Tensor) else target)
    if t.size and (t.min() < 0 or t.max() > 1):
        raise ValueError(f"reconstruction target must lie in [0, 1], got range [{t.min()}, {t.max()}]")
    return ops.bce_with_logits(pre_activations, t)


def elbo_loss(model: TideVae, batch, rng: Rng, mc_samples: int = 1) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (total, recon, kl) with total = recon + kl = -ELBO."""
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    x = np.asarray(batch, dtype=model.dtype)
    stats = encode(model, x)
    recon = None
    for _ in range(mc_samples):
        z = reparameterize(stats, rng)
        _, logits = decode(model, z)
        term = reconstruction_loss(logits, x)
        recon = term if recon is None else ops.add(recon, term)
    if mc_samples > 1:
        recon = ops.scale(recon, 1.0 / mc_samples)
    kl = kl_term(stats)
    return ops.add(recon, kl), recon, kl


# ----------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(state: AdamState, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
              cfg: TrainConfig) -> AdamState:
    """One bias-corrected Adam update, in place on ``params``."""
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ValueError(f"gradient shape {grads[name].shape} != parameter shape {p.shape} for {name}")
    state.t += 1
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        step = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        p.data -= (cfg.learning_rate * step).astype(p.dtype, copy=False)
    return state


def collect_grads(params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}


# ----------------------------------------------------------------------------
# training loop

@dataclass
class EpochRecord:
    epoch: int
    total: float
    recon: float
    kl: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_loss: float = math.inf
    stop_reason: str = ""
    wall_clock: float = 0.0

    @property
    def totals(self) -> list[float]:
        return [e.total for e in self.epochs]

    @property
    def recons(self) -> list[float]:
        return [e.recon for e in self.epochs]

    @property
    def kls(self) -> list[float]:
        return [e.kl for e in self.epochs]

    def log_lines(self) -> list[str]:
        return [e.to_json() for e in self.epochs]


def iterate_batches(n: int, batch_size: int, rng: Rng) -> Iterable[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(model: TideVae, images, cfg: TrainConfig,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[TideVae, TrainReport]:
    """Minimise recon + KL with Adam; restores the lowest-loss parameters.

    Early stopping counts epochs whose mean total loss does not beat the best
    so far by ``early_stop_min_rel_improvement`` (relative); after
    ``early_stop_patience`` such epochs in a row training halts.
    """
    data = np.asarray(images, dtype=model.dtype)
    if data.ndim != 4 or len(data) == 0:
        raise ValueError("train needs a non-empty (N, C, H, W) image array")
    rng = Rng(cfg.seed)
    shuffle_rng, noise_rng = rng.fork(), rng.fork()
    adam = AdamState()
    report = TrainReport()
    best_state = model.state()
    stale = 0
    start = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        sums = np.zeros(3)
        for idx in iterate_batches(len(data), cfg.batch_size, shuffle_rng):
            model.zero_grad()
            total, recon, kl = elbo_loss(model, data[idx], noise_rng, cfg.mc_samples)
            backward(total)
            adam_step(adam, model.params, collect_grads(model.params), cfg)
            sums += len(idx) * np.array([total.item(), recon.item(), kl.item()])
        mean_total, mean_recon, mean_kl = (sums / len(data)).tolist()
        if not all(map(math.isfinite, (mean_total, mean_recon, mean_kl))):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch} "
                                   f"(total={mean_total}, recon={mean_recon}, kl={mean_kl})")
        rec = EpochRecord(epoch, mean_total, mean_recon, mean_kl)
        report.epochs.append(rec)
        if on_epoch:
            on_epoch(rec)
        log.debug("epoch %d total %.4f recon %.4f kl %.4f", epoch, mean_total, mean_recon, mean_kl)

        significant = mean_total < report.best_loss - cfg.early_stop_min_rel_improvement * abs(report.best_loss) \
            if math.isfinite(report.best_loss) else True
        if mean_total < report.best_loss:
            report.best_loss = mean_total
            report.best_epoch = epoch
            best_state = model.state()
        stale = 0 if significant else stale + 1
        if stale >= cfg.early_stop_patience:
            report.stop_reason = f"early stop: no {cfg.early_stop_min_rel_improvement:g} relative improvement " \
                                 f"for {cfg.early_stop_patience} epochs"
            break
    else:
        report.stop_reason = f"reached max_epochs={cfg.max_epochs}"
    model.load_state(best_state)
    report.wall_clock = time.perf_counter() - start
    return model, report
