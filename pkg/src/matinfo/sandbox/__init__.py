"""Desk-scale training harness."""

from .config import MASKED_LOSSES, SIAMESE_LOSSES, SandboxConfig
from .data import SyntheticDataset, make_dataset
from .model import Decoder, Encoder
from .probe import linear_probe
from .train import (
    Run,
    TrainRecord,
    descent_probe,
    format_sweep,
    mu_sweep,
    probe_accuracy,
    representations,
    train,
    train_masked,
    train_siamese,
    write_trajectory,
)
