"""Small GAN that learns exported CSI distributions and emits spoof traces."""

__version__ = "0.1.0"

from .train import (GanConfig, GanError, TrainedGenerator, TrainingDiverged,
                    generate_trace, load_model, save_model, train_gan)
