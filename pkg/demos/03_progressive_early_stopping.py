"""The progressive stopping controller on a simulated training run.

Synthetic per-channel risk curves: each channel improves for a while,
bottoms out at its own time, then overfits. The controller freezes each
channel a patience-worth of evaluations after its minimum, remembers the
best step and checkpoint token, and stops once every channel is frozen.

Run: python3 demos/03_progressive_early_stopping.py
"""

import numpy as np

from nnkstop import (
    ControllerConfig,
    active_channels,
    controller_new,
    observe,
    should_evaluate,
)

rng = np.random.default_rng(3)
C, patience = 4, 3
minima = {0: 6, 1: 10, 2: 14, 3: 18}  # epoch where each channel bottoms out


def risk_curve(channel, t):
    best = minima[channel]
    base = 0.45 - 0.02 * min(t, best) + 0.015 * max(0, t - best)
    return base + 0.003 * rng.standard_normal()


config = ControllerConfig(num_channels=C, patience=patience, eval_interval=1, eval_period=2)
state = controller_new(config)

print(f"channels={C} patience={patience} eval every {config.eval_interval * config.eval_period} steps")
print("step  risks (active channels)              events")
t = 0
while not state.stopped:
    t += 1
    if not should_evaluate(state, t, config):
        continue
    risks = {c: risk_curve(c, t) for c in active_channels(state)}
    state, decision = observe(state, t, risks, checkpoint_token=f"weights@{t}")
    shown = " ".join(f"{c}:{risks[c]:.3f}" for c in sorted(risks))
    events = []
    if decision.best_updated:
        events.append("best!")
    if decision.freeze_now:
        events.append(f"freeze {list(decision.freeze_now)}")
    if decision.stopped:
        events.append("STOP")
    print(f"{t:4d}  {shown:<38s}{' '.join(events)}")

print(f"\nbest step t* = {state.t_star}, checkpoint = {state.best_checkpoint!r}")
print(f"per-channel best risks: {[round(r, 3) for r in state.r]}")
print("training would restore the checkpoint recorded at t* and ship that model.")
