"""TIDE: a multiscale residual VAE for building synthetic image datasets."""

from .model import LatentStats, TideConfig, TideVae, build_model, decode, encode, generate, reparameterize
from .trainer import TrainConfig, TrainReport, elbo_loss, train

__version__ = "0.1.0"

__all__ = [
    "LatentStats", "TideConfig", "TideVae", "TrainConfig", "TrainReport", "build_model", "decode", "elbo_loss",
    "encode", "generate", "reparameterize", "train",
]
