"""Run configuration for the desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass

SYNTHETIC_BLOBS = "synthetic-blobs"
CIFAR2 = "cifar2"


@dataclass(frozen=True)
class HarnessConfig:
    """Training and comparison settings.

    The architecture is the fixed toy ConvNet (4 conv layers of 5 channels
    with ReLU, 2 max-pools, a fully connected softmax head); optimizer is
    Adam at lr 0.001 with batch size 50. ``val_fraction`` is consumed only
    by the validation-based baseline; the NNK criteria train on the full
    labeled budget.
    """

    dataset: str = SYNTHETIC_BLOBS
    labeled_budget: int = 300
    val_fraction: float = 0.2
    dropout_rate: float = 0.0
    label_noise: float = 0.1
    blob_noise: float = 1.0
    image_size: int = 16
    test_size: int = 400
    max_epochs: int = 40
    patience: int = 4
    eval_period: int = 1
    k_neighbors: int = 15
    kernel: str = "cosine"
    subsample: int | None = None
    seed: int = 0
    learning_rate: float = 0.001
    batch_size: int = 50
    spatial_pool: bool = False  # average-pool channel maps instead of flattening
    data_root: str = "./data"

    def __post_init__(self) -> None:
        if self.dataset not in (SYNTHETIC_BLOBS, CIFAR2):
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.labeled_budget < 20:
            raise ValueError("labeled_budget too small to train on")
