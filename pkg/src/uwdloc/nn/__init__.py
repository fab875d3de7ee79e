"""Numpy CNN for direct localization from SOS tensors."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    Branch, JointModel, NetworkConfig, assemble_joint, count_parameters, sos_to_input,
    with_normalization,
)
from .train import TrainOptions, predict_xyz, progressive_train, train_branch, train_joint

__all__ = [
    "Branch", "JointModel", "NetworkConfig", "TrainOptions", "assemble_joint",
    "count_parameters", "load_checkpoint", "predict_xyz", "progressive_train",
    "save_checkpoint", "sos_to_input", "train_branch", "train_joint", "with_normalization",
]
