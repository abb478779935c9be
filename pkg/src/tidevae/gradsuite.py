"""Finite-difference checks for every primitive and the full TIDE loss (float64)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .engine import ops
from .engine.gradcheck import grad_check
from .engine.rng import Rng
from .engine.tensor import Tensor, parameter
from .model import TideConfig, build_model, clone_config
from .trainer import elbo_loss

TOLERANCE = 1e-3
STEP = 1e-4

# every TIDE component at 32x32, narrowed so the check runs in about a minute
TOY_CONFIG = TideConfig(image_size=(32, 32), stem_filters=4, msb_filters=(8, 16, 32, 64),
                        pool_filters=(16, 32, 64), encoder_fc=64)


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    passed: bool


def _rand(rng: Rng, *shape, low=-1.0, high=1.0) -> Tensor:
    return parameter(rng.uniform(int(np.prod(shape)), low, high).reshape(shape))


def _weighted_sum(y: Tensor, w: np.ndarray) -> Tensor:
    # random projection so every output coordinate matters
    return ops.sum(ops.mul(y, Tensor(w)))


def primitive_cases(rng: Rng) -> dict[str, tuple[Callable[[], Tensor], dict[str, Tensor]]]:
    cases = {}

    x, w, b = _rand(rng, 2, 3, 6, 5), _rand(rng, 4, 3, 3, 3), _rand(rng, 4)
    proj = rng.uniform(2 * 4 * 3 * 3, -1, 1).reshape(2, 4, 3, 3)
    cases["conv2d stride 2"] = (lambda x=x, w=w, b=b, proj=proj: _weighted_sum(ops.conv2d(x, w, b, 2, 1), proj),
                                {"x": x, "w": w, "b": b})

    x, w, b = _rand(rng, 1, 2, 5, 5), _rand(rng, 3, 2, 5, 5), _rand(rng, 3)
    proj = rng.uniform(3 * 25, -1, 1).reshape(1, 3, 5, 5)
    cases["conv2d same 5x5"] = (lambda x=x, w=w, b=b, proj=proj: _weighted_sum(ops.conv2d(x, w, b, 1, 2), proj),
                                {"x": x, "w": w, "b": b})

    x, w, b = _rand(rng, 2, 3, 3, 4), _rand(rng, 3, 2, 3, 3), _rand(rng, 2)
    proj = rng.uniform(2 * 2 * 6 * 8, -1, 1).reshape(2, 2, 6, 8)
    cases["conv_transpose2d"] = (
        lambda x=x, w=w, b=b, proj=proj: _weighted_sum(ops.conv_transpose2d(x, w, b, 2, 1, 1), proj),
        {"x": x, "w": w, "b": b})

    x, w, b = _rand(rng, 3, 4), _rand(rng, 4, 5), _rand(rng, 5)
    proj = rng.uniform(15, -1, 1).reshape(3, 5)
    cases["dense"] = (lambda x=x, w=w, b=b, proj=proj: _weighted_sum(ops.dense(x, w, b), proj),
                      {"x": x, "w": w, "b": b})

    # keep relu inputs away from the kink so central differences are valid
    vals = rng.uniform(12, 0.1, 1.0) * np.where(rng.uniform(12) > 0.5, 1, -1)
    x = parameter(vals.reshape(3, 4))
    proj = rng.uniform(12, -1, 1).reshape(3, 4)
    cases["relu"] = (lambda x=x, proj=proj: _weighted_sum(ops.relu(x), proj), {"x": x})

    x = _rand(rng, 3, 4, low=-8, high=8)
    cases["log_sigmoid"] = (lambda x=x, proj=proj: _weighted_sum(ops.log_sigmoid(x), proj), {"x": x})

    a, b2, c = _rand(rng, 1, 2, 3, 3), _rand(rng, 1, 3, 3, 3), _rand(rng, 1, 1, 3, 3)
    proj6 = rng.uniform(54, -1, 1).reshape(1, 6, 3, 3)
    cases["concat_channels"] = (
        lambda a=a, b2=b2, c=c, proj6=proj6: _weighted_sum(ops.concat_channels([a, b2, c]), proj6),
        {"a": a, "b": b2, "c": c})

    a, b3 = _rand(rng, 2, 3), _rand(rng, 2, 3)
    p23 = rng.uniform(6, -1, 1).reshape(2, 3)
    cases["add"] = (lambda a=a, b3=b3, p23=p23: _weighted_sum(ops.add(a, b3), p23), {"a": a, "b": b3})
    cases["mul"] = (lambda a=a, b3=b3, p23=p23: _weighted_sum(ops.mul(a, b3), p23), {"a": a, "b": b3})

    x = _rand(rng, 2, 3, 2, 2)
    p = rng.uniform(24, -1, 1).reshape(2, 12)
    cases["reshape"] = (lambda x=x, p=p: _weighted_sum(ops.flatten(x), p), {"x": x})

    x = _rand(rng, 2, 3)
    cases["exp"] = (lambda x=x, p23=p23: _weighted_sum(ops.exp(x), p23), {"x": x})
    cases["square"] = (lambda x=x, p23=p23: _weighted_sum(ops.square(x), p23), {"x": x})

    x = _rand(rng, 2, 3, 4, 4)
    p = rng.uniform(6, -1, 1).reshape(2, 3)
    cases["global_avg_pool"] = (lambda x=x, p=p: _weighted_sum(ops.global_avg_pool(x), p), {"x": x})

    x = _rand(rng, 2, 3, 4, 4, low=-4, high=4)
    t = rng.uniform(96).reshape(2, 3, 4, 4)
    cases["bce_with_logits"] = (lambda x=x, t=t: ops.bce_with_logits(x, t), {"x": x})
    return cases


def check_primitives(seed: int = 0, trials: int = 1) -> list[CheckResult]:
    out = []
    rng = Rng(seed)
    worst: dict[str, float] = {}
    for _ in range(trials):
        for name, (f, params) in primitive_cases(rng.fork()).items():
            err = grad_check(f, params, eps=STEP, samples_per_param=None)
            worst[name] = max(worst.get(name, 0.0), err)
    for name, err in worst.items():
        out.append(CheckResult(name, err, err < TOLERANCE))
    return out


def check_tide_loss(seed: int = 0, image_size=(32, 32), samples_per_param: int = 2,
                    config: TideConfig | None = None, report: dict | None = None,
                    kinks: dict | None = None) -> CheckResult:
    """Full recon + KL loss on a 2-image batch, every parameter tensor sampled.

    The model has ~10^5 relu units, so a 1e-4 nudge often flips one of them;
    those coordinates are re-evaluated with the relu masks frozen (see
    ``grad_check(freeze_kinks=True)``).
    """
    cfg = config or (TOY_CONFIG if tuple(image_size) == (32, 32) else clone_config(TOY_CONFIG, image_size=image_size))
    rng = Rng(seed)
    model = build_model(cfg, rng.fork(), dtype=np.float64)
    batch = rng.uniform(2 * 3 * cfg.image_size[0] * cfg.image_size[1]).reshape(2, 3, *cfg.image_size)
    noise_seed = int(rng.u32(1)[0])

    def f():
        total, _, _ = elbo_loss(model, batch, Rng(noise_seed), 1)
        return total

    err = grad_check(f, model.params, eps=STEP, samples_per_param=samples_per_param, rng=rng.fork(), report=report,
                     freeze_kinks=True, kinks=kinks)
    return CheckResult(f"TIDE loss {cfg.image_size[0]}x{cfg.image_size[1]}", err, err < TOLERANCE)


def run_suite(seed: int = 0, trials: int = 1, tide_samples: int = 2) -> list[CheckResult]:
    return check_primitives(seed, trials) + [check_tide_loss(seed, samples_per_param=tide_samples)]
