"""Desk-scale training harness for the nnkstop engine: the toy ConvNet,
snapshot extraction, exact channel freezing and the stopping-criterion
comparison. Talks to the engine exclusively through NNKA snapshots and
the framed serve protocol."""

from .client import EngineClient, EngineError
from .compare import ComparisonRow, plot_risk_curves, run_comparison, run_single, write_table
from .config import CIFAR2, SYNTHETIC_BLOBS, HarnessConfig
from .data import make_splits, synthetic_blob_images
from .loop import (
    CW_DEEPNNK,
    DEEPNNK,
    VALIDATION,
    TrainResult,
    train_nnk_run,
    train_validation_run,
)
from .model import ChannelFreezer, ToyConvNet, extract_features
from .nnka import full_layer_payload, snapshot_payload

__version__ = "0.1.0"
