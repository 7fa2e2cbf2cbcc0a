"""ConvLSTM radar precipitation nowcasting, built from scratch on numpy."""

from .model import ArchitectureConfig, build_model, forward, predict, train_step

__all__ = ["ArchitectureConfig", "build_model", "forward", "predict", "train_step"]
__version__ = "0.1.0"
