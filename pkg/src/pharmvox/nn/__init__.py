"""Voxel-captioning network built on a small numpy autodiff."""

from .checkpoint import VCPT_MAGIC, VCPT_VERSION, load_checkpoint, read_checkpoint, save_checkpoint
from .model import TINY, CaptionerModel, ModelConfig, SamplerConfig, sampling_distribution
from .train import TrainConfig, TrainingError, fit

__all__ = [
    "CaptionerModel", "ModelConfig", "SamplerConfig", "TINY", "TrainConfig", "TrainingError",
    "VCPT_MAGIC", "VCPT_VERSION", "fit", "load_checkpoint", "read_checkpoint", "save_checkpoint",
    "sampling_distribution",
]
