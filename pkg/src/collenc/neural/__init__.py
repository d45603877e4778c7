from .vae import (
    VaeConfig,
    VaeModel,
    load_checkpoint,
    reparameterize,
    save_checkpoint,
    vae_loss,
)
from .train import Adam, TrainConfig, TrainingDiverged, train, window_means

__all__ = [
    "Adam",
    "TrainConfig",
    "TrainingDiverged",
    "VaeConfig",
    "VaeModel",
    "load_checkpoint",
    "reparameterize",
    "save_checkpoint",
    "train",
    "vae_loss",
    "window_means",
]
