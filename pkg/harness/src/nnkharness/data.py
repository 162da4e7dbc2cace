"""Datasets: synthetic blob images (self-contained) and the CIFAR-10
plane/ship pair when the archive is available locally.

The synthetic task places a soft bright disk in a class-dependent corner
of a noisy image. With a small labeled budget, some label noise and no
regularization the toy ConvNet fits the training set well past the point
where it generalizes, which is exactly the regime the stopping criteria
are compared in.
"""

from __future__ import annotations

import numpy as np
import torch

from .config import CIFAR2, SYNTHETIC_BLOBS, HarnessConfig


def _disk(size: int, center: tuple[float, float], radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    d2 = (yy - center[0]) ** 2 + (xx - center[1]) ** 2
    return np.exp(-d2 / (2.0 * radius**2))


def synthetic_blob_images(rng: np.random.Generator, n: int, size: int = 16, noise: float = 1.0):
    """Class 0: disk in the upper-left; class 1: lower-right. 3-channel float32."""
    labels = rng.integers(0, 2, size=n)
    templates = [
        _disk(size, (size * 0.3, size * 0.3), size * 0.18),
        _disk(size, (size * 0.7, size * 0.7), size * 0.18),
    ]
    images = np.empty((n, 3, size, size), dtype=np.float32)
    for i, y in enumerate(labels):
        base = templates[y] * rng.uniform(0.8, 1.2)
        chans = np.stack([base * rng.uniform(0.6, 1.0) for _ in range(3)])
        images[i] = chans + noise * rng.normal(size=(3, size, size))
    return images, labels.astype(np.int64)


def _load_cifar2(config: HarnessConfig, rng: np.random.Generator, n: int):
    try:
        from torchvision.datasets import CIFAR10
    except ImportError as exc:
        raise RuntimeError("cifar2 requires torchvision") from exc
    try:
        train = CIFAR10(config.data_root, train=True, download=False)
    except RuntimeError as exc:
        raise RuntimeError(
            f"CIFAR-10 archive not found under {config.data_root}; "
            "use dataset=synthetic-blobs or place the archive there"
        ) from exc
    data = np.asarray(train.data, dtype=np.float32) / 255.0
    targets = np.asarray(train.targets)
    keep = np.isin(targets, (0, 8))  # plane, ship
    data, targets = data[keep], (targets[keep] == 8).astype(np.int64)
    order = rng.permutation(len(data))[:n]
    return data[order].transpose(0, 3, 1, 2), targets[order]


def make_splits(config: HarnessConfig, seed: int):
    """Train/val/test arrays as torch tensors.

    Label noise corrupts the labeled pool before any splitting (noise
    lives in the labels one actually has), the test labels stay clean.
    The validation split is stratified and carved out of the labeled
    budget; NNK-based runs train on ``full`` (the whole budget).
    """
    rng = np.random.default_rng([seed, 17])
    n_total = config.labeled_budget + config.test_size
    if config.dataset == SYNTHETIC_BLOBS:
        images, labels = synthetic_blob_images(rng, n_total, size=config.image_size,
                                               noise=config.blob_noise)
    elif config.dataset == CIFAR2:
        images, labels = _load_cifar2(config, rng, n_total)
    else:
        raise ValueError(config.dataset)

    test_x, test_y = images[: config.test_size], labels[: config.test_size]
    pool_x, pool_y = images[config.test_size :], labels[config.test_size :].copy()
    if config.label_noise > 0.0:
        flip = rng.random(len(pool_y)) < config.label_noise
        pool_y[flip] = 1 - pool_y[flip]

    # stratified validation split over the labeled budget
    n_val = int(round(config.val_fraction * len(pool_y)))
    val_idx = []
    if n_val:
        for cls in (0, 1):
            cls_idx = np.flatnonzero(pool_y == cls)
            take = int(round(n_val * len(cls_idx) / len(pool_y)))
            val_idx.extend(cls_idx[:take].tolist())
    val_mask = np.zeros(len(pool_y), dtype=bool)
    val_mask[val_idx] = True

    def t(x):
        return torch.as_tensor(x)

    return {
        "train": (t(pool_x[~val_mask]), t(pool_y[~val_mask])),
        "val": (t(pool_x[val_mask]), t(pool_y[val_mask])),
        "test": (t(test_x), t(test_y)),
        "full": (t(pool_x), t(pool_y)),
    }
