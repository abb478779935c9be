from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config, parse_config
from .images import compose_grid, resize_bilinear
from .manifest import ManifestError, load_images, load_manifest, read_manifest, write_dataset
from .ppm import PpmError, read_ppm, write_ppm
from .toy import LabeledDataset, make_toy_dataset

__all__ = [
    "CheckpointError", "ConfigError", "LabeledDataset", "ManifestError", "PpmError", "RunConfig", "compose_grid",
    "load_checkpoint", "load_config", "load_images", "load_manifest", "make_toy_dataset", "parse_config",
    "read_manifest", "read_ppm", "resize_bilinear", "save_checkpoint", "write_dataset", "write_ppm",
]
