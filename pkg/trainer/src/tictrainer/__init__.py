"""Toy-scale trainer for the TIC calibration network.

Consumes TICD dataset files, trains the transformer, and exports TICW
weight files readable by the inference side, plus a loss-curve CSV.
"""

from .dataset import DatasetError, WindowDataset, read_ticd
from .loss import calibration_loss
from .model import TICNet
from .train import TrainConfig, train
from .weights_io import load_ticw, save_ticw

__all__ = [
    "DatasetError",
    "WindowDataset",
    "read_ticd",
    "calibration_loss",
    "TICNet",
    "TrainConfig",
    "train",
    "load_ticw",
    "save_ticw",
]
