import numpy as np
import pytest

from nnkstop.controller import ControllerConfig, Decision, controller_new, observe
from nnkstop.interpolation import ChannelLooReport
from nnkstop.reports import (
    HistoryEntry,
    header_record,
    load_run_history,
    parse_header,
    parse_report,
    replay_decisions,
    save_run_history,
    verify_history,
    write_report,
)


def make_report(channel, risk, n=20, seed=0):
    rng = np.random.default_rng(seed + channel)
    wrong = round(risk * n)
    correct = np.arange(n) >= wrong  # first `wrong` nodes misclassified
    return ChannelLooReport(
        channel=channel,
        loo_risk=1.0 - correct.sum() / n,
        per_node_correct=correct,
        mean_neighbor_count=float(rng.uniform(1, 6)),
        mean_same_class_weight=float(rng.uniform(0, 1)),
        zero_fraction=float(rng.uniform(0, 1)),
        evaluated_nodes=n,
        failed_nodes=(2,) if channel == 1 else (),
    )


def simulated_history(config, risk_rows):
    state = controller_new(config)
    entries = []
    for step, risks in risk_rows:
        reports = tuple(make_report(c, r, seed=step) for c, r in sorted(risks.items()))
        risks_now = {rep.channel: rep.loo_risk for rep in reports}
        state, decision = observe(state, step, risks_now, f"tok{step}")
        entries.append(HistoryEntry(step, reports, decision, duration_s=0.125 * step, seed=7, token=f"tok{step}"))
    return entries


def test_entry_round_trip_equality():
    entry = HistoryEntry(
        step=3,
        reports=(make_report(0, 0.3), make_report(1, 0.6)),
        decision=Decision(freeze_now=(1,), best_updated=False, t_star=2, stopped=False),
        duration_s=0.4375,
        seed=11,
        token="ck3",
    )
    line = write_report(entry)
    assert parse_report(line) == entry
    # serialization is deterministic
    assert write_report(parse_report(line)) == line


def test_header_round_trip():
    cfg = ControllerConfig(num_channels=4, patience=3, eval_interval=2, eval_period=5)
    parsed, extra = parse_header(header_record(cfg, {"seed": 9}))
    assert parsed == cfg
    assert extra == {"seed": 9}


def test_parse_rejects_wrong_kinds():
    cfg = ControllerConfig(num_channels=1, patience=1)
    with pytest.raises(ValueError):
        parse_report(header_record(cfg))
    entry = simulated_history(cfg, [(1, {0: 0.5})])[0]
    with pytest.raises(ValueError):
        parse_header(write_report(entry))


def test_history_file_round_trip_and_replay(tmp_path):
    cfg = ControllerConfig(num_channels=2, patience=2)
    rows = [
        (1, {0: 0.50, 1: 0.60}),
        (2, {0: 0.40, 1: 0.65}),
        (3, {0: 0.45, 1: 0.70}),  # channel 1 freezes here
        (4, {0: 0.50}),           # channel 0 freezes, run stops
    ]
    entries = simulated_history(cfg, rows)
    path = tmp_path / "history.log"
    save_run_history(path, cfg, entries, extra={"seed": 7})
    loaded_cfg, loaded, extra = load_run_history(path)
    assert loaded_cfg == cfg
    assert extra == {"seed": 7}
    assert loaded == entries
    assert verify_history(loaded_cfg, loaded) == []
    replayed = replay_decisions(loaded_cfg, loaded)
    assert replayed == [e.decision for e in loaded]


def test_verify_history_flags_tampering(tmp_path):
    cfg = ControllerConfig(num_channels=1, patience=1)
    entries = simulated_history(cfg, [(1, {0: 0.5}), (2, {0: 0.9})])
    tampered = list(entries)
    tampered[1] = HistoryEntry(
        step=2,
        reports=entries[1].reports,
        decision=Decision(freeze_now=(), best_updated=True, t_star=2, stopped=False),
        duration_s=entries[1].duration_s,
        seed=entries[1].seed,
        token=entries[1].token,
    )
    mismatches = verify_history(cfg, tampered)
    assert len(mismatches) == 1 and "step 2" in mismatches[0]


def test_history_steps_must_increase(tmp_path):
    cfg = ControllerConfig(num_channels=1, patience=2)
    entries = simulated_history(cfg, [(1, {0: 0.5}), (2, {0: 0.6})])
    path = tmp_path / "bad.log"
    lines = [header_record(cfg), write_report(entries[1]), write_report(entries[0])]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError):
        load_run_history(path)
