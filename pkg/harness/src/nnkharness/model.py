"""The toy ConvNet and exact per-channel freezing of its penultimate layer.

Architecture (7 layers): 4 convolutions with 5 depth channels and ReLU,
2 max-pools, one fully connected softmax head. The penultimate features
are the post-pool activation maps of the last convolution; channel c's
subvector is that channel's flattened spatial map (or its average when
``spatial_pool`` is set).

Freezing a channel zeroes the gradient slices of the last convolution's
filter c and bias c and, after every optimizer step, restores the stored
parameter slices bit for bit, so Adam's momentum cannot drift them.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn


class ToyConvNet(nn.Module):
    def __init__(self, in_channels: int = 3, channels: int = 5, num_classes: int = 2,
                 image_size: int = 16, dropout_rate: float = 0.0, spatial_pool: bool = False):
        super().__init__()
        self.channels = channels
        self.spatial_pool = spatial_pool
        self.conv1 = nn.Conv2d(in_channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv3 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv4 = nn.Conv2d(channels, channels, 3, padding=1)
        self.pool = nn.MaxPool2d(2)
        self.drop = nn.Dropout(dropout_rate) if dropout_rate > 0.0 else nn.Identity()
        self.feature_map = image_size // 4
        feat = channels if spatial_pool else channels * self.feature_map**2
        self.fc = nn.Linear(feat, num_classes)

    def penultimate(self, x: torch.Tensor) -> torch.Tensor:
        """Post-pool activation maps of conv4: (batch, channels, h, w)."""
        x = self.drop(torch.relu(self.conv1(x)))
        x = self.drop(torch.relu(self.conv2(x)))
        x = self.pool(x)
        x = self.drop(torch.relu(self.conv3(x)))
        x = self.drop(torch.relu(self.conv4(x)))
        return self.pool(x)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        maps = self.penultimate(x)
        if self.spatial_pool:
            return maps.mean(dim=(2, 3))
        return maps.flatten(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc(self.features(x))


class ChannelFreezer:
    """Tracks frozen penultimate channels and enforces exact freezing."""

    def __init__(self, model: ToyConvNet):
        self.model = model
        self.frozen: set[int] = set()
        self._saved_weight: dict[int, torch.Tensor] = {}
        self._saved_bias: dict[int, torch.Tensor] = {}
        model.conv4.weight.register_hook(self._mask_weight_grad)
        model.conv4.bias.register_hook(self._mask_bias_grad)

    def _mask_weight_grad(self, grad: torch.Tensor) -> torch.Tensor:
        if not self.frozen:
            return grad
        grad = grad.clone()
        for c in self.frozen:
            grad[c].zero_()
        return grad

    def _mask_bias_grad(self, grad: torch.Tensor) -> torch.Tensor:
        if not self.frozen:
            return grad
        grad = grad.clone()
        for c in self.frozen:
            grad[c] = 0.0
        return grad

    def apply_freeze(self, channel_ids) -> None:
        """Freeze the given penultimate channels from this step on."""
        for c in channel_ids:
            c = int(c)
            if not 0 <= c < self.model.channels:
                raise ValueError(f"unknown penultimate channel {c}")
            if c in self.frozen:
                continue
            self.frozen.add(c)
            self._saved_weight[c] = self.model.conv4.weight.detach()[c].clone()
            self._saved_bias[c] = self.model.conv4.bias.detach()[c].clone()

    def enforce(self) -> None:
        """Restore frozen slices after an optimizer step (bitwise exact)."""
        if not self.frozen:
            return
        with torch.no_grad():
            for c in self.frozen:
                self.model.conv4.weight[c].copy_(self._saved_weight[c])
                self.model.conv4.bias[c].copy_(self._saved_bias[c])


def extract_features(model: ToyConvNet, images: torch.Tensor, batch_size: int = 256) -> np.ndarray:
    """Per-channel penultimate activations in evaluation mode (dropout off).

    Returns (N, channels, D_c) float32; channel order is filter order.
    """
    was_training = model.training
    model.eval()
    chunks = []
    with torch.no_grad():
        for at in range(0, len(images), batch_size):
            maps = model.penultimate(images[at : at + batch_size])
            if model.spatial_pool:
                chunks.append(maps.mean(dim=(2, 3), keepdim=True).flatten(2))
            else:
                chunks.append(maps.flatten(2))
    if was_training:
        model.train()
    return torch.cat(chunks).numpy().astype(np.float32)
