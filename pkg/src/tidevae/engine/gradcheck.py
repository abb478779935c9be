"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .ops import freeze_relu_masks, record_relu_masks
from .rng import Rng
from .tensor import Tensor, backward, no_grad


def _same_masks(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(f: Callable[[], Tensor], params: Mapping[str, Tensor], eps: float = 1e-4,
               samples_per_param: int | None = 8, rng: Rng | None = None,
               report: dict | None = None, freeze_kinks: bool = False,
               kinks: dict | None = None) -> float:
    """Max relative error between backprop and central differences.

    ``f`` rebuilds the scalar loss from the current ``params`` on every call.
    For each parameter, ``samples_per_param`` coordinates are drawn (all of
    them when None). Error per coordinate is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    Per-parameter maxima land in ``report`` when given.

    With ``freeze_kinks``, a coordinate whose +-eps perturbation flips any
    relu on/off state is re-evaluated with every relu mask frozen to its
    unperturbed value. A plain quotient there straddles a kink and measures
    nothing about the gradient; the frozen one measures the slope of the
    linear piece backprop differentiates. Bias nudges in early conv layers
    shift thousands of pre-activations at once, so for those nearly every
    coordinate needs this. Counts of frozen coordinates land in ``kinks``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = rng or Rng(0)
    for p in params.values():
        p.zero_grad()
    with record_relu_masks() as base_masks:
        loss = f()
    backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        want = flat.size if samples_per_param is None else min(samples_per_param, flat.size)
        order = np.arange(flat.size) if samples_per_param is None else rng.permutation(flat.size)
        a_flat = analytic[name].reshape(-1)
        param_worst = 0.0
        frozen = 0
        for c in order[:want]:
            orig = flat[c]
            with no_grad(), record_relu_masks() as up_masks:
                flat[c] = orig + eps
                up = f().item()
            with no_grad(), record_relu_masks() as down_masks:
                flat[c] = orig - eps
                down = f().item()
            if freeze_kinks and not (_same_masks(base_masks, up_masks) and _same_masks(base_masks, down_masks)):
                frozen += 1
                with no_grad(), freeze_relu_masks(base_masks):
                    flat[c] = orig + eps
                    up = f().item()
                with no_grad(), freeze_relu_masks(base_masks):
                    flat[c] = orig - eps
                    down = f().item()
            flat[c] = orig
            numeric = (up - down) / (2 * eps)
            a = float(a_flat[c])
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            param_worst = max(param_worst, err)
        if report is not None:
            report[name] = param_worst
        if kinks is not None:
            kinks[name] = frozen
        worst = max(worst, param_worst)
    return worst
