"""TIDE: multiscale residual VAE.

Encoder::

    stem(3x3) -> MSB[0] -> pool[0](s2) -> MSB[1] -> pool[1](s2) -> MSB[2]
              -> pool[2](s2) -> MSB[3] -> flatten -> fc_hidden(ReLU) -> {fc_mu, fc_logvar}

Decoder::

    fc_expand(ReLU) -> reshape(C, H/8, W/8) -> MSB[3] -> up(s2) -> MSB[2] -> up(s2)
                    -> MSB[1] -> up(s2) -> MSB[0] -> out(3 filters, s1) -> log-sigmoid

Each multiscale block (MSB) runs 3x3, 5x5 and 7x7 convolutions in parallel,
concatenates them, fuses with a pointwise conv then a 3x3 conv back to F
filters, adds a 3x3 projection of the block input and finishes with a
pointwise conv. Every conv is followed by ReLU.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .engine import ops
from .engine.ops import ShapeError
from .engine.rng import Rng, sample_standard_normal
from .engine.tensor import Tensor, no_grad, parameter


@dataclass(frozen=True)
class TideConfig:
    image_size: tuple[int, int] = (96, 96)
    channels: int = 3
    latent_dim: int = 6
    stem_filters: int = 16
    msb_filters: tuple[int, ...] = (32, 64, 128, 256)
    pool_filters: tuple[int, ...] = (64, 128, 256)
    encoder_fc: int = 256

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        object.__setattr__(self, "msb_filters", tuple(int(v) for v in self.msb_filters))
        object.__setattr__(self, "pool_filters", tuple(int(v) for v in self.pool_filters))
        self.validate()

    def validate(self) -> None:
        h, w = self.image_size
        if h <= 0 or w <= 0 or h % 8 or w % 8:
            raise ValueError(f"image_size {self.image_size} must be positive and divisible by 8")
        if len(self.msb_filters) != 4 or len(self.pool_filters) != 3:
            raise ValueError("TIDE has exactly 4 multiscale blocks and 3 pooling convs")
        for a, b in zip(self.msb_filters, self.msb_filters[1:]):
            if b != 2 * a:
                raise ValueError(f"msb_filters must double per stage, got {self.msb_filters}")
        if min(self.channels, self.latent_dim, self.stem_filters, self.encoder_fc, *self.pool_filters) < 1:
            raise ValueError("all widths must be positive")

    @property
    def bottleneck_shape(self) -> tuple[int, int, int]:
        h, w = self.image_size
        return self.msb_filters[-1], h // 8, w // 8

    @property
    def decoder_fc(self) -> int:
        c, h, w = self.bottleneck_shape
        return c * h * w

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


@dataclass
class LatentStats:
    mu: Tensor
    logvar: Tensor


@dataclass
class MsbParams:
    branch3: tuple[Tensor, Tensor]
    branch5: tuple[Tensor, Tensor]
    branch7: tuple[Tensor, Tensor]
    fuse_pointwise: tuple[Tensor, Tensor]
    fuse_out: tuple[Tensor, Tensor]
    skip_proj: tuple[Tensor, Tensor]
    post_pointwise: tuple[Tensor, Tensor]

    @classmethod
    def from_params(cls, params: dict[str, Tensor], prefix: str) -> "MsbParams":
        return cls(**{f: (params[f"{prefix}.{f}.weight"], params[f"{prefix}.{f}.bias"])
                      for f in cls.__dataclass_fields__})

    @property
    def filters(self) -> int:
        return self.branch3[0].shape[0]

    @property
    def in_channels(self) -> int:
        return self.branch3[0].shape[1]


def _msb_layout(prefix: str, cin: int, f: int) -> Iterator[tuple[str, str, tuple[int, ...]]]:
    yield f"{prefix}.branch3", "conv", (f, cin, 3, 3)
    yield f"{prefix}.branch5", "conv", (f, cin, 5, 5)
    yield f"{prefix}.branch7", "conv", (f, cin, 7, 7)
    yield f"{prefix}.fuse_pointwise", "conv", (3 * f, 3 * f, 1, 1)
    yield f"{prefix}.fuse_out", "conv", (f, 3 * f, 3, 3)
    yield f"{prefix}.skip_proj", "conv", (f, cin, 3, 3)
    yield f"{prefix}.post_pointwise", "conv", (f, f, 1, 1)


def layer_layout(cfg: TideConfig) -> list[tuple[str, str, tuple[int, ...]]]:
    """(layer name, kind, weight shape) in canonical order; kinds: conv, convT, dense."""
    msb, pool = cfg.msb_filters, cfg.pool_filters
    out = [("encoder.stem", "conv", (cfg.stem_filters, cfg.channels, 3, 3))]
    cin = cfg.stem_filters
    for i in range(4):
        out.extend(_msb_layout(f"encoder.msb{i}", cin, msb[i]))
        if i < 3:
            out.append((f"encoder.pool{i}", "conv", (pool[i], msb[i], 3, 3)))
            cin = pool[i]
    out.append(("encoder.fc_hidden", "dense", (cfg.decoder_fc, cfg.encoder_fc)))
    out.append(("encoder.fc_mu", "dense", (cfg.encoder_fc, cfg.latent_dim)))
    out.append(("encoder.fc_logvar", "dense", (cfg.encoder_fc, cfg.latent_dim)))

    out.append(("decoder.fc_expand", "dense", (cfg.latent_dim, cfg.decoder_fc)))
    cin = msb[-1]
    for j, i in enumerate(range(3, -1, -1)):
        out.extend(_msb_layout(f"decoder.msb{j}", cin, msb[i]))
        if i > 0:
            out.append((f"decoder.up{j}", "convT", (msb[i], msb[i - 1], 3, 3)))
            cin = msb[i - 1]
    out.append(("decoder.out", "convT", (msb[0], cfg.channels, 3, 3)))
    return out


@dataclass
class TideVae:
    config: TideConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def astype(self, dtype) -> "TideVae":
        return TideVae(self.config, {k: parameter(v.data.astype(dtype), name=k) for k, v in self.params.items()})

    def copy(self) -> "TideVae":
        return TideVae(self.config, {k: parameter(v.data.copy(), name=k) for k, v in self.params.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            self.params[k].data[...] = v

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def msb(self, prefix: str) -> MsbParams:
        return MsbParams.from_params(self.params, prefix)

    def layer(self, name: str) -> tuple[Tensor, Tensor]:
        return self.params[f"{name}.weight"], self.params[f"{name}.bias"]

    encode = lambda self, x: encode(self, x)  # noqa: E731
    decode = lambda self, z: decode(self, z)  # noqa: E731


def build_model(config: TideConfig | None = None, rng: Rng | None = None, dtype=np.float32) -> TideVae:
    """He-uniform weights (bound sqrt(6 / fan_in), fan_in = in-channels * k * k), zero biases.

    For transposed convs the in-channels are the weight's leading axis.
    """
    config = config or TideConfig()
    config.validate()
    rng = rng if rng is not None else Rng(0)
    params: dict[str, Tensor] = {}
    for name, kind, shape in layer_layout(config):
        if kind == "dense":
            fan_in, nout = shape[0], shape[1]
        elif kind == "conv":
            fan_in, nout = shape[1] * shape[2] * shape[3], shape[0]
        else:
            fan_in, nout = shape[0] * shape[2] * shape[3], shape[1]
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(int(np.prod(shape)), -bound, bound).reshape(shape).astype(dtype)
        params[f"{name}.weight"] = parameter(w, name=f"{name}.weight")
        params[f"{name}.bias"] = parameter(np.zeros(nout, dtype=dtype), name=f"{name}.bias")
    return TideVae(config, params)


def _conv(x: Tensor, wb: tuple[Tensor, Tensor], stride: int = 1) -> Tensor:
    w, b = wb
    return ops.relu(ops.conv2d(x, w, b, stride=stride, pad=w.shape[-1] // 2))


def msb_forward(p: MsbParams, x: Tensor) -> Tensor:
    if x.shape[1] != p.in_channels:
        raise ShapeError(f"MSB expects {p.in_channels} input channels, got {x.shape[1]}")
    multi = ops.concat_channels([_conv(x, p.branch3), _conv(x, p.branch5), _conv(x, p.branch7)])
    fused = _conv(_conv(multi, p.fuse_pointwise), p.fuse_out)
    return _conv(ops.add(_conv(x, p.skip_proj), fused), p.post_pointwise)


def _as_input(model: TideVae, x) -> Tensor:
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=model.dtype))
    return x


def encode_features(model: TideVae, x) -> Tensor:
    """Convolutional trunk of the encoder: (N, 3, H, W) -> (N, C, H/8, W/8)."""
    cfg = model.config
    x = _as_input(model, x)
    expected = (cfg.channels, *cfg.image_size)
    if x.data.ndim != 4 or x.shape[1:] != expected:
        raise ShapeError(f"encoder expects input (N, {expected[0]}, {expected[1]}, {expected[2]}), got {x.shape}")
    h = _conv(x, model.layer("encoder.stem"))
    for i in range(4):
        h = msb_forward(model.msb(f"encoder.msb{i}"), h)
        if i < 3:
            h = _conv(h, model.layer(f"encoder.pool{i}"), stride=2)
    return h


def encode(model: TideVae, x) -> LatentStats:
    h = ops.flatten(encode_features(model, x))
    h = ops.relu(ops.dense(h, *model.layer("encoder.fc_hidden")))
    return LatentStats(ops.dense(h, *model.layer("encoder.fc_mu")),
                       ops.dense(h, *model.layer("encoder.fc_logvar")))


def reparameterize(stats: LatentStats, rng: Rng | None = None, eps: np.ndarray | None = None) -> Tensor:
    """z = mu + exp(logvar / 2) * eps; eps is a constant of the graph."""
    if eps is None:
        eps = sample_standard_normal(rng, stats.mu.shape, dtype=stats.mu.dtype)
    eps = Tensor(np.asarray(eps, dtype=stats.mu.dtype))
    sigma = ops.exp(ops.scale(stats.logvar, 0.5))
    return ops.add(stats.mu, ops.mul(sigma, eps))


def decode(model: TideVae, z) -> tuple[Tensor, Tensor]:
    """Returns (per-pixel log-probabilities, pre-activation logits)."""
    cfg = model.config
    z = _as_input(model, z)
    if z.data.ndim != 2 or z.shape[1] != cfg.latent_dim:
        raise ShapeError(f"decoder expects latent (N, {cfg.latent_dim}), got {z.shape}")
    h = ops.relu(ops.dense(z, *model.layer("decoder.fc_expand")))
    h = ops.reshape(h, (z.shape[0], *cfg.bottleneck_shape))
    for j in range(4):
        h = msb_forward(model.msb(f"decoder.msb{j}"), h)
        if j < 3:
            w, b = model.layer(f"decoder.up{j}")
            h = ops.relu(ops.conv_transpose2d(h, w, b, stride=2, pad=1, output_pad=1))
    w, b = model.layer("decoder.out")
    logits = ops.conv_transpose2d(h, w, b, stride=1, pad=1)
    return ops.log_sigmoid(logits), logits


def generate(model: TideVae, rng: Rng, n: int, chunk: int = 32) -> np.ndarray:
    """Sample n images from the prior; returns an (n, 3, H, W) array in [0, 1]."""
    if n < 1:
        raise ValueError(f"generate needs n >= 1, got {n}")
    z = sample_standard_normal(rng, (n, model.config.latent_dim), dtype=model.dtype)
    out = []
    with no_grad():
        for start in range(0, n, chunk):
            log_p, _ = decode(model, z[start:start + chunk])
            out.append(np.clip(np.exp(log_p.data), 0.0, 1.0))
    return np.concatenate(out, axis=0)


def reconstruct(model: TideVae, x) -> np.ndarray:
    """Decode the posterior mean of each image."""
    with no_grad():
        stats = encode(model, x)
        log_p, _ = decode(model, stats.mu)
    return np.exp(log_p.data)


@dataclass(frozen=True)
class LayerCount:
    name: str
    shape: tuple[int, ...]
    count: int


def count_parameters(model: TideVae) -> list[LayerCount]:
    return [LayerCount(name, tuple(p.shape), int(p.size)) for name, p in model.params.items()]


def total_parameters(model: TideVae) -> int:
    return sum(e.count for e in count_parameters(model))


def clone_config(cfg: TideConfig, **changes) -> TideConfig:
    d = copy.deepcopy(cfg.to_dict())
    d.update(changes)
    return TideConfig(**d)
