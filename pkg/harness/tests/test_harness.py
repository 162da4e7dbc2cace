import numpy as np
import pytest
import torch

from nnkharness import (
    ChannelFreezer,
    EngineClient,
    HarnessConfig,
    ToyConvNet,
    extract_features,
    full_layer_payload,
    make_splits,
    snapshot_payload,
    synthetic_blob_images,
)
from nnkharness.loop import _make_model, _train_one_epoch


def small_config(**over):
    defaults = dict(labeled_budget=80, test_size=40, max_epochs=3, patience=2, k_neighbors=5)
    defaults.update(over)
    return HarnessConfig(**defaults)


def test_config_validation():
    with pytest.raises(ValueError):
        HarnessConfig(dataset="imagenet")
    with pytest.raises(ValueError):
        HarnessConfig(val_fraction=1.0)
    with pytest.raises(ValueError):
        HarnessConfig(labeled_budget=5)


def test_splits_shapes_and_budget():
    cfg = small_config()
    splits = make_splits(cfg, seed=0)
    assert len(splits["full"][0]) == 80
    assert len(splits["train"][0]) + len(splits["val"][0]) == 80
    assert len(splits["val"][0]) == round(0.2 * 80)
    assert len(splits["test"][0]) == 40
    # deterministic in the seed
    again = make_splits(cfg, seed=0)
    assert torch.equal(splits["full"][0], again["full"][0])
    other = make_splits(cfg, seed=1)
    assert not torch.equal(splits["full"][0], other["full"][0])


def test_blob_images_have_class_structure():
    rng = np.random.default_rng(0)
    images, labels = synthetic_blob_images(rng, 400, size=16, noise=0.1)
    # at low noise the class-dependent corner is brighter
    upper = images[:, :, :8, :8].mean(axis=(1, 2, 3))
    lower = images[:, :, 8:, 8:].mean(axis=(1, 2, 3))
    assert np.all((upper > lower) == (labels == 0))


def test_model_is_the_specified_architecture():
    model = ToyConvNet()
    convs = [m for m in model.modules() if isinstance(m, torch.nn.Conv2d)]
    assert len(convs) == 4
    assert all(conv.out_channels == 5 for conv in convs)
    fcs = [m for m in model.modules() if isinstance(m, torch.nn.Linear)]
    assert len(fcs) == 1
    x = torch.randn(7, 3, 16, 16)
    assert model(x).shape == (7, 2)
    assert model.penultimate(x).shape == (7, 5, 4, 4)


def test_extract_features_shapes_and_eval_mode():
    model = ToyConvNet(dropout_rate=0.2)
    model.train()
    x = torch.randn(30, 3, 16, 16)
    feats1 = extract_features(model, x)
    feats2 = extract_features(model, x)
    assert feats1.shape == (30, 5, 16)
    assert np.array_equal(feats1, feats2)  # dropout disabled during extraction
    assert model.training  # mode restored

    pooled = ToyConvNet(spatial_pool=True)
    assert extract_features(pooled, x).shape == (30, 5, 1)


def test_snapshot_payload_parses_in_engine():
    from nnkstop import snapshot_from_bytes

    model = ToyConvNet()
    x = torch.randn(20, 3, 16, 16)
    y = np.array([0, 1] * 10)
    feats = extract_features(model, x)
    snap = snapshot_from_bytes(snapshot_payload(3, feats, y))
    assert snap.step == 3 and snap.N == 20 and snap.C == 5
    assert snap.dims == (16,) * 5
    np.testing.assert_array_equal(snap.labels.labels, y)
    np.testing.assert_allclose(snap.channels[2], feats[:, 2, :], rtol=0, atol=0)

    full = snapshot_from_bytes(full_layer_payload(3, feats, y))
    assert full.C == 1 and full.dims == (80,)
    np.testing.assert_allclose(full.channels[0], feats.reshape(20, -1))


def test_consecutive_epochs_differ_in_payload_not_header():
    cfg = small_config()
    splits = make_splits(cfg, seed=0)
    x, y = splits["full"]
    model = _make_model(cfg, 0)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    gen = torch.Generator().manual_seed(1)
    payloads = []
    for epoch in (1, 2):
        _train_one_epoch(model, opt, None, x, y, cfg.batch_size, gen)
        feats = extract_features(model, x)
        payloads.append(snapshot_payload(7, feats, y.numpy()))
    header = 4 + 2 + 8 + 4 + 4 + 4 * 5
    assert payloads[0][:header] == payloads[1][:header]
    assert payloads[0][header:] != payloads[1][header:]


def test_apply_freeze_validates_channel():
    freezer = ChannelFreezer(ToyConvNet())
    with pytest.raises(ValueError):
        freezer.apply_freeze([9])


def test_freeze_keeps_parameters_bitwise_constant():
    cfg = small_config()
    splits = make_splits(cfg, seed=0)
    x, y = splits["full"]
    model = _make_model(cfg, 0)
    freezer = ChannelFreezer(model)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    gen = torch.Generator().manual_seed(2)
    _train_one_epoch(model, opt, freezer, x, y, cfg.batch_size, gen)  # build Adam moments

    freezer.apply_freeze([0, 3])
    w_before = model.conv4.weight.detach().clone()
    b_before = model.conv4.bias.detach().clone()
    for _ in range(3):
        _train_one_epoch(model, opt, freezer, x, y, cfg.batch_size, gen)
    for c in (0, 3):
        assert torch.equal(model.conv4.weight[c], w_before[c])
        assert torch.equal(model.conv4.bias[c], b_before[c])
    for c in (1, 2, 4):
        assert not torch.equal(model.conv4.weight[c], w_before[c])


def test_freeze_all_channels_constant_forward_changes_elsewhere():
    cfg = small_config()
    splits = make_splits(cfg, seed=0)
    x, y = splits["full"]
    model = _make_model(cfg, 0)
    freezer = ChannelFreezer(model)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    gen = torch.Generator().manual_seed(3)

    freezer.apply_freeze(range(5))
    w_before = model.conv4.weight.detach().clone()
    conv1_before = model.conv1.weight.detach().clone()
    _train_one_epoch(model, opt, freezer, x, y, cfg.batch_size, gen)
    assert torch.equal(model.conv4.weight, w_before)
    assert not torch.equal(model.conv1.weight, conv1_before)  # the rest keeps learning


def test_engine_client_status_round_trip():
    with EngineClient(num_channels=5, patience=3, k=5) as client:
        status = client.status()
        assert status["q"] == [3, 3, 3, 3, 3]
        assert status["stopped"] is False
        assert client.should_evaluate(0) is False
        assert client.should_evaluate(1) is True
