"""Convolutional reconstructors written directly in NumPy."""
from .checkpoint import load_checkpoint, read_loss_history, save_checkpoint, write_loss_history
from .layers import BatchNorm2d, Conv2d, ReLU, ResidualBlock, Sequential
from .models import (
    MiniUNet,
    NetworkModel,
    SSNet3L,
    backward,
    build_mini_unet,
    build_model,
    build_ssnet3l,
    forward,
)
from .optim import Adam, AdamState, adam_step
from .training import TrainConfig, train

__all__ = [
    "Adam",
    "AdamState",
    "BatchNorm2d",
    "Conv2d",
    "MiniUNet",
    "NetworkModel",
    "ReLU",
    "ResidualBlock",
    "SSNet3L",
    "Sequential",
    "TrainConfig",
    "adam_step",
    "backward",
    "build_mini_unet",
    "build_model",
    "build_ssnet3l",
    "forward",
    "load_checkpoint",
    "read_loss_history",
    "save_checkpoint",
    "train",
    "write_loss_history",
]
