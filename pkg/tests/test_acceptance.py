"""Acceptance gate: every release criterion, at its stated tolerance.

Each test prints one PASS line on success (run with ``pytest -s`` to see
them); a failure is a failed criterion. Budgeted criteria also assert
their wall-clock limit.
"""

import io
import json
import struct
import time
import zlib

import numpy as np
import pytest

from nnkstop.controller import ControllerConfig, controller_new, observe, should_evaluate
from nnkstop.interpolation import EvalOptions, LabelSet, loo_risk_channel
from nnkstop.kernels import COSINE, GAUSSIAN, SIGMA_FIXED, SIGMA_MEDIAN_KNN, KernelSpec, kernel_matrix
from nnkstop.nnk import NnkConfig, knn_candidates, nnk_solve
from nnkstop.serve import ServeConfig, serve_loop, write_frame
from nnkstop.snapshot import (
    FeatureSnapshot,
    SnapshotDataError,
    SnapshotFormatError,
    snapshot_from_bytes,
    snapshot_to_bytes,
)

from oracles import (
    exhaustive_loo_classifications,
    make_blobs,
    projected_gradient_nnls,
    qp_objective,
    sim,
)


def _ok(name):
    print(f"ACCEPTANCE PASS: {name}")


def test_nnls_oracle_equivalence_200_instances():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    for trial in range(200):
        n = int(rng.integers(4, 51))
        k = int(rng.integers(1, min(10, n - 1) + 1))
        d = int(rng.integers(2, 7))
        scale = float(rng.uniform(0.3, 4.0))
        X = rng.normal(scale=scale, size=(n, d))
        if trial % 2 == 0:
            sigma = float(rng.uniform(0.5, 2.0) * scale * np.sqrt(d))
            spec = KernelSpec(kind=GAUSSIAN, sigma=sigma, sigma_policy=SIGMA_FIXED)
        else:
            spec = KernelSpec(kind=COSINE)
        cfg = NnkConfig(K=k, kernel=spec)
        q = int(rng.integers(0, n))
        cand = knn_candidates(q, X, k, spec)
        nb = nnk_solve(q, cand, X, cfg)

        assert np.all(nb.weights > 0.0)
        assert set(nb.neighbor_indices.tolist()) <= set(cand.tolist())

        Q = kernel_matrix(X[cand], spec) + cfg.jitter * np.eye(k)
        rhs = np.array([sim(X[q], X[j], spec.kind, spec.sigma) for j in cand])
        theta = np.zeros(k)
        pos = {int(j): w for j, w in zip(nb.neighbor_indices, nb.weights)}
        for slot, j in enumerate(cand):
            theta[slot] = pos.get(int(j), 0.0)
        oracle = projected_gradient_nnls(Q, rhs)
        assert abs(qp_objective(Q, theta, rhs) - qp_objective(Q, oracle, rhs)) <= 1e-6, f"trial {trial}"
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"NNLS oracle run took {elapsed:.1f}s"
    _ok(f"NNLS oracle equivalence (200 instances, {elapsed:.1f}s)")


def test_loo_pipeline_oracle_50_instances():
    started = time.perf_counter()
    rng = np.random.default_rng(77)
    for trial in range(50):
        n = int(rng.integers(6, 13))
        k = int(rng.integers(1, n - 1))
        kind = "gaussian" if trial % 2 == 0 else "cosine"
        # 1-D cosine features collapse similarities to {0, 1} exactly,
        # making argmax comparison on tied optima ill-defined
        d = int(rng.integers(1, 4)) if kind == "gaussian" else int(rng.integers(2, 4))
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, size=n)
        while len(set(y.tolist())) < 2:
            y = rng.integers(0, 2, size=n)
        spec = KernelSpec(kind=kind, sigma_policy=SIGMA_MEDIAN_KNN)
        rep = loo_risk_channel(X, LabelSet(y, 2), NnkConfig(K=k, kernel=spec))
        expected = exhaustive_loo_classifications(X, y.tolist(), 2, k, kind)
        for i, pred in enumerate(expected):
            want = pred is not None and pred == y[i]
            assert bool(rep.per_node_correct[i]) == want, f"trial {trial} node {i}"
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"LOO oracle run took {elapsed:.1f}s"
    _ok(f"LOO pipeline oracle (50 instances, {elapsed:.1f}s)")


def test_separable_blobs_and_random_labels():
    started = time.perf_counter()
    cfg = NnkConfig(K=15, kernel=KernelSpec(kind=COSINE))
    gauss_cfg = NnkConfig(K=15, kernel=KernelSpec(kind=GAUSSIAN, sigma_policy=SIGMA_MEDIAN_KNN))

    X, y = make_blobs(np.random.default_rng(1), n=200, d=5, margin=10.0, spread=1.0)
    labels = LabelSet(y, 2)
    for config in (cfg, gauss_cfg):
        rep = loo_risk_channel(X, labels, config)
        assert rep.loo_risk <= 0.05, f"separable blobs risk {rep.loo_risk}"

    risks = []
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        Xr, _ = make_blobs(rng, n=200, d=5, margin=10.0, spread=1.0)
        yr = rng.integers(0, 2, size=200)
        rep = loo_risk_channel(Xr, LabelSet(yr, 2), cfg)
        risks.append(rep.loo_risk)
        assert 0.3 <= rep.loo_risk <= 0.7, f"seed {seed}: risk {rep.loo_risk}"
    mean_risk = float(np.mean(risks))
    assert 0.4 <= mean_risk <= 0.6, f"mean random-label risk {mean_risk}"
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"blob sanity took {elapsed:.1f}s"
    _ok(f"separable blobs <= 0.05, random labels mean {mean_risk:.3f} in [0.4, 0.6] ({elapsed:.1f}s)")


def test_controller_matches_hand_simulated_traces():
    # C=1, p=2: risks 0.4, 0.3, 0.31, 0.32 -> freeze at step 4, t* = 2
    cfg = ControllerConfig(num_channels=1, patience=2)
    state = controller_new(cfg)
    expected = [
        # (freeze_now, best_updated, t_star, stopped, q_after)
        ((), True, 1, False, (2,)),
        ((), True, 2, False, (2,)),
        ((), False, 2, False, (1,)),
        ((0,), False, 2, True, (0,)),
    ]
    for (t, risk), exp in zip(enumerate([0.4, 0.3, 0.31, 0.32], start=1), expected):
        state, decision = observe(state, t, {0: risk}, f"ck{t}")
        assert (decision.freeze_now, decision.best_updated, decision.t_star, decision.stopped) == exp[:4]
        assert state.q == exp[4]
    assert state.t_star == 2 and state.best_checkpoint == "ck2"

    # strict inequality: equal risk burns patience
    state = controller_new(cfg)
    state, _ = observe(state, 1, {0: 0.3}, "a")
    state, decision = observe(state, 2, {0: 0.3}, "b")
    assert not decision.best_updated and state.q == (1,) and state.t_star == 1

    # 5-channel staggered minima, p=2: minima at steps 1..5 per channel
    cfg5 = ControllerConfig(num_channels=5, patience=2)
    state = controller_new(cfg5)
    freeze_steps = {}
    t = 0
    active = set(range(5))
    while not state.stopped:
        t += 1
        risks = {}
        for c in sorted(active):
            best_at = c + 1  # channel c improves until step c+1, then worsens
            risks[c] = 0.5 - 0.05 * min(t, best_at) + 0.01 * max(0, t - best_at)
        state, decision = observe(state, t, risks, f"ck{t}")
        for c in decision.freeze_now:
            freeze_steps[c] = t
            active.discard(c)
    # channel c freezes exactly p=2 evaluations after its minimum at step c+1
    assert freeze_steps == {0: 3, 1: 4, 2: 5, 3: 6, 4: 7}
    assert state.t_star == 5  # the last improvement anywhere: channel 4's minimum
    assert state.best_checkpoint == "ck5"
    _ok("controller matches hand-simulated traces")


def test_controller_replay_bit_identical():
    rng = np.random.default_rng(5)
    cfg = ControllerConfig(num_channels=4, patience=3)
    state = controller_new(cfg)
    trace = []
    t = 0
    while not state.stopped:
        t += 1
        risks = {c: float(rng.uniform(0.1, 0.9)) for c in range(4) if not state.frozen[c]}
        state, decision = observe(state, t, risks, f"ck{t}")
        trace.append((t, risks, f"ck{t}", decision))
    for _ in range(3):
        replay_state = controller_new(cfg)
        for t, risks, token, decision in trace:
            replay_state, replay_decision = observe(replay_state, t, risks, token)
            assert replay_decision == decision
        assert replay_state == state
    _ok(f"controller replay bit-identical over {len(trace)} observations")


def test_cosine_scale_invariance_20_snapshots():
    rng = np.random.default_rng(99)
    cfg = NnkConfig(K=6, kernel=KernelSpec(kind=COSINE))
    for snap_idx in range(20):
        n = int(rng.integers(20, 41))
        d = int(rng.integers(2, 6))
        X = rng.normal(size=(n, d)) * rng.uniform(0.5, 2.0)
        y = rng.integers(0, 2, size=n)
        while len(set(y.tolist())) < 2:
            y = rng.integers(0, 2, size=n)
        labels = LabelSet(y, 2)
        base = loo_risk_channel(X, labels, cfg)
        for c in (0.1, 10.0):
            scaled = loo_risk_channel(c * X, labels, cfg)
            assert np.array_equal(scaled.per_node_correct, base.per_node_correct), f"snapshot {snap_idx} scale {c}"
            assert scaled.loo_risk == base.loo_risk
    _ok("cosine scale invariance over 20 snapshots, c in {0.1, 10}")


def _sample_snapshot(seed=0, n=10, dims=(3, 2), step=4):
    rng = np.random.default_rng(seed)
    labels = LabelSet(np.array([0, 1] * (n // 2)), 2)
    channels = tuple(rng.normal(size=(n, d)).astype(np.float32) for d in dims)
    return FeatureSnapshot(step=step, labels=labels, channels=channels)


def test_format_laws():
    # round-trip byte identity
    for seed in range(5):
        snap = _sample_snapshot(seed=seed)
        data = snapshot_to_bytes(snap)
        assert snapshot_to_bytes(snapshot_from_bytes(data)) == data

    # malformed corpus -> the specified error classes
    good = snapshot_to_bytes(_sample_snapshot())
    corpus_format = [good[:cut] for cut in (0, 3, 5, 13, 21, 30, len(good) // 2, len(good) - 1)]
    bad_magic = bytearray(good)
    bad_magic[:4] = b"XXXX"
    corpus_format.append(bytes(bad_magic))
    bad_version = bytearray(good)
    struct.pack_into("<H", bad_version, 4, 3)
    corpus_format.append(bytes(bad_version))
    bad_crc = bytearray(good)
    bad_crc[-1] ^= 0x5A
    corpus_format.append(bytes(bad_crc))
    corpus_format.append(good + b"\x00")
    for i, payload in enumerate(corpus_format):
        with pytest.raises(SnapshotFormatError):
            snapshot_from_bytes(payload)

    nan_body = bytearray(good)[:-4]
    data_start = 4 + 2 + 8 + 4 + 4 + 4 * 2 + 2 * 10 + 2
    struct.pack_into("<f", nan_body, data_start, float("nan"))
    nan_payload = bytes(nan_body) + struct.pack("<I", zlib.crc32(bytes(nan_body)) & 0xFFFFFFFF)
    with pytest.raises(SnapshotDataError):
        snapshot_from_bytes(nan_payload)

    # serve-loop golden replay: identical request bytes -> identical response bytes
    config = ServeConfig(
        controller=ControllerConfig(num_channels=2, patience=2),
        nnk=NnkConfig(K=4, kernel=KernelSpec(kind=COSINE)),
        options=EvalOptions(seed=1),
    )
    requests = io.BytesIO()
    for step in (1, 2, 3):
        header = json.dumps({"type": "evaluate", "step": step, "token": f"ck{step}", "snapshot": "inline"}).encode()
        write_frame(requests, header)
        write_frame(requests, snapshot_to_bytes(_sample_snapshot(seed=step, n=20, step=step)))
    write_frame(requests, json.dumps({"type": "status"}).encode())
    request_bytes = requests.getvalue()
    responses = []
    for _ in range(2):
        out = io.BytesIO()
        assert serve_loop(io.BytesIO(request_bytes), out, config) == 0
        responses.append(out.getvalue())
    assert responses[0] == responses[1]
    _ok("format laws: NNKA round-trip, malformed corpus rejected, golden serve replay")


def test_eval_period_semantics():
    horizon = 200
    counts = {}
    for T in (1, 5, 10):
        cfg = ControllerConfig(num_channels=1, patience=10**6, eval_interval=1, eval_period=T)
        state = controller_new(cfg)
        evaluated_at = []
        risk = 1.0
        for t in range(1, horizon + 1):
            if should_evaluate(state, t, cfg):
                risk *= 0.99  # always improving: never stops in-horizon
                state, _ = observe(state, t, {0: risk}, None)
                evaluated_at.append(t)
        assert all(t % T == 0 for t in evaluated_at)
        assert evaluated_at == list(range(T, horizon + 1, T))
        counts[T] = len(evaluated_at)
    assert counts[1] == 200 and counts[5] == 40 and counts[10] == 20
    assert counts[1] == 5 * counts[5] == 10 * counts[10]
    _ok(f"eval-period semantics: counts {counts} scale as 1/T")
