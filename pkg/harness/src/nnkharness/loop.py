"""Training runs: NNK-driven stopping over the serve protocol, plus the
validation-patience baseline.

An NNK run trains on the whole labeled budget. Each epoch it asks the
engine whether an evaluation is due, extracts penultimate activations in
eval mode, ships them as an inline NNKA snapshot and applies whatever
freeze decision comes back. Checkpoints are kept per evaluated epoch so
the model at the criterion's best step t* can be restored afterwards.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .client import EngineClient
from .config import HarnessConfig
from .data import make_splits
from .model import ChannelFreezer, ToyConvNet, extract_features
from .nnka import full_layer_payload, snapshot_payload

CW_DEEPNNK = "cw-deepnnk"
DEEPNNK = "deepnnk"
VALIDATION = "validation"


@dataclass
class TrainResult:
    method: str
    seed: int
    stop_epoch: int
    t_star: int
    test_acc_at_best: float
    test_acc_final: float
    wallclock_s: float
    risk_curves: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    test_loss_curve: list[tuple[int, float]] = field(default_factory=list)
    test_acc_curve: list[tuple[int, float]] = field(default_factory=list)
    train_loss_curve: list[tuple[int, float]] = field(default_factory=list)
    freeze_events: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)


def _make_model(config: HarnessConfig, seed: int) -> ToyConvNet:
    torch.manual_seed(seed)
    return ToyConvNet(
        image_size=config.image_size,
        dropout_rate=config.dropout_rate,
        spatial_pool=config.spatial_pool,
    )


def _train_one_epoch(model, optimizer, freezer, x, y, batch_size, generator) -> float:
    model.train()
    loss_fn = nn.CrossEntropyLoss()
    order = torch.randperm(len(x), generator=generator)
    total = 0.0
    for at in range(0, len(x), batch_size):
        idx = order[at : at + batch_size]
        optimizer.zero_grad()
        loss = loss_fn(model(x[idx]), y[idx])
        loss.backward()
        optimizer.step()
        if freezer is not None:
            freezer.enforce()
        total += float(loss.detach()) * len(idx)
    return total / len(x)


@torch.no_grad()
def _eval_metrics(model, x, y) -> tuple[float, float]:
    was_training = model.training
    model.eval()
    logits = model(x)
    loss = float(nn.CrossEntropyLoss()(logits, y))
    acc = float((logits.argmax(dim=1) == y).float().mean())
    if was_training:
        model.train()
    return loss, acc


def train_nnk_run(config: HarnessConfig, seed: int, channelwise: bool = True,
                  history_out: str | None = None) -> TrainResult:
    """Train with the engine deciding freezes and the stop (Algorithm 1)."""
    started = time.perf_counter()
    splits = make_splits(config, seed)
    x_train, y_train = splits["full"]
    x_test, y_test = splits["test"]
    labels = y_train.numpy().astype(np.int64)

    model = _make_model(config, seed)
    freezer = ChannelFreezer(model)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(seed + 1)

    method = CW_DEEPNNK if channelwise else DEEPNNK
    result = TrainResult(method=method, seed=seed, stop_epoch=config.max_epochs,
                         t_star=0, test_acc_at_best=0.0, test_acc_final=0.0, wallclock_s=0.0)
    checkpoints: dict[int, dict] = {}
    prior_dims: tuple[int, ...] | None = None

    with EngineClient(
        num_channels=model.channels if channelwise else 1,
        patience=config.patience,
        k=config.k_neighbors,
        kernel=config.kernel,
        eval_period=config.eval_period,
        subsample=config.subsample,
        seed=seed,
        history_out=history_out,
    ) as client:
        t_star = 0
        for epoch in range(1, config.max_epochs + 1):
            train_loss = _train_one_epoch(model, optimizer, freezer, x_train, y_train,
                                          config.batch_size, generator)
            result.train_loss_curve.append((epoch, train_loss))
            test_loss, test_acc = _eval_metrics(model, x_test, y_test)
            result.test_loss_curve.append((epoch, test_loss))
            result.test_acc_curve.append((epoch, test_acc))

            if not client.should_evaluate(epoch):
                continue
            feats = extract_features(model, x_train)
            dims = tuple(feats.shape[1:])
            if prior_dims is not None and dims != prior_dims:
                raise RuntimeError(f"penultimate dimensions drifted: {prior_dims} -> {dims}")
            prior_dims = dims
            if channelwise:
                payload = snapshot_payload(epoch, feats, labels)
            else:
                payload = full_layer_payload(epoch, feats, labels)
            response = client.evaluate(epoch, token=f"epoch-{epoch}", snapshot=payload)
            for report in response["channels"]:
                result.risk_curves.setdefault(report["channel"], []).append(
                    (epoch, report["loo_risk"])
                )
            checkpoints[epoch] = copy.deepcopy(model.state_dict())
            decision = response["decision"]
            t_star = decision["t_star"]
            if decision["freeze_now"]:
                result.freeze_events.append((epoch, tuple(decision["freeze_now"])))
                if channelwise:
                    freezer.apply_freeze(decision["freeze_now"])
            if decision["stopped"]:
                result.stop_epoch = epoch
                break

    result.t_star = t_star
    result.test_acc_final = _eval_metrics(model, x_test, y_test)[1]
    if t_star in checkpoints:
        best = _make_model(config, seed)
        best.load_state_dict(checkpoints[t_star])
        result.test_acc_at_best = _eval_metrics(best, x_test, y_test)[1]
    else:
        result.test_acc_at_best = result.test_acc_final
    result.wallclock_s = time.perf_counter() - started
    return result


def train_validation_run(config: HarnessConfig, seed: int) -> TrainResult:
    """Patience on validation loss; trains on the budget minus the held-out split."""
    started = time.perf_counter()
    splits = make_splits(config, seed)
    x_train, y_train = splits["train"]
    x_val, y_val = splits["val"]
    x_test, y_test = splits["test"]
    if not len(x_val):
        raise ValueError("validation baseline needs val_fraction > 0")

    model = _make_model(config, seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(seed + 1)

    result = TrainResult(method=VALIDATION, seed=seed, stop_epoch=config.max_epochs,
                         t_star=0, test_acc_at_best=0.0, test_acc_final=0.0, wallclock_s=0.0)
    checkpoints: dict[int, dict] = {}
    best_val = float("inf")
    remaining = config.patience
    t_star = 0
    for epoch in range(1, config.max_epochs + 1):
        train_loss = _train_one_epoch(model, optimizer, None, x_train, y_train,
                                      config.batch_size, generator)
        result.train_loss_curve.append((epoch, train_loss))
        test_loss, test_acc = _eval_metrics(model, x_test, y_test)
        result.test_loss_curve.append((epoch, test_loss))
        result.test_acc_curve.append((epoch, test_acc))

        val_loss, _ = _eval_metrics(model, x_val, y_val)
        result.risk_curves.setdefault(0, []).append((epoch, val_loss))
        checkpoints[epoch] = copy.deepcopy(model.state_dict())
        if val_loss < best_val:
            best_val = val_loss
            remaining = config.patience
            t_star = epoch
        else:
            remaining -= 1
            if remaining == 0:
                result.stop_epoch = epoch
                break

    result.t_star = t_star
    result.test_acc_final = _eval_metrics(model, x_test, y_test)[1]
    if t_star in checkpoints:
        best = _make_model(config, seed)
        best.load_state_dict(checkpoints[t_star])
        result.test_acc_at_best = _eval_metrics(best, x_test, y_test)[1]
    else:
        result.test_acc_at_best = result.test_acc_final
    result.wallclock_s = time.perf_counter() - started
    return result
