"""Progressive channel-wise early stopping as a pure state machine.

Each channel holds a patience counter q(c) and a best risk r(c). A strict
improvement of the channel's LOO risk resets its patience and marks the
current step (and checkpoint token) as the best so far; anything else
burns one unit of patience. A channel freezes when its patience runs out,
and the run stops once every channel is frozen.

``observe`` is a pure transition on immutable state: replaying the same
(step, risks, token) sequence yields identical states and decisions. The
engine never holds model weights — the training side passes an opaque
checkpoint token that stands in for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping


class ContractError(RuntimeError):
    """A caller broke the controller protocol (bad channel set or step order)."""


@dataclass(frozen=True)
class ControllerConfig:
    """Channel count, patience, and evaluation cadence.

    ``eval_interval`` is the number of training steps between candidate
    evaluation points; one LOO computation actually runs every
    ``eval_period`` of those, so evaluations land on multiples of
    eval_interval * eval_period.

    ``track_combined_best`` switches the best-step bookkeeping from the
    literal per-channel rule (any channel improvement moves t*) to a
    combined criterion (mean of the reported risks must improve).
    Experimental; off by default.
    """

    num_channels: int
    patience: int
    eval_interval: int = 1
    eval_period: int = 1
    track_combined_best: bool = False

    def __post_init__(self) -> None:
        if self.num_channels < 1:
            raise ValueError("num_channels must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.eval_interval < 1 or self.eval_period < 1:
            raise ValueError("eval_interval and eval_period must be >= 1")


@dataclass(frozen=True)
class StoppingState:
    """Immutable controller state between observations."""

    config: ControllerConfig
    q: tuple[int, ...]
    r: tuple[float, ...]
    t: int
    t_star: int
    best_checkpoint: Any
    frozen: tuple[bool, ...]
    stopped: bool
    combined_best: float = math.inf


@dataclass(frozen=True)
class Decision:
    """Controller output for one observation."""

    freeze_now: tuple[int, ...]
    best_updated: bool
    t_star: int
    stopped: bool


def controller_new(config: ControllerConfig) -> StoppingState:
    """Fresh state: full patience everywhere, best risks at infinity."""
    C = config.num_channels
    return StoppingState(
        config=config,
        q=(config.patience,) * C,
        r=(math.inf,) * C,
        t=0,
        t_star=0,
        best_checkpoint=None,
        frozen=(False,) * C,
        stopped=False,
    )


def active_channels(state: StoppingState) -> list[int]:
    """Unfrozen channel ids, ascending."""
    return [c for c, fr in enumerate(state.frozen) if not fr]


def observe(
    state: StoppingState,
    t: int,
    risks: Mapping[int, float],
    checkpoint_token: Any = None,
) -> tuple[StoppingState, Decision]:
    """Fold one evaluation's per-channel risks into the state.

    ``risks`` must cover exactly the currently active channels, and ``t``
    must exceed the previous observation's step. Channels are processed in
    ascending id.
    """
    if t <= state.t:
        raise ContractError(f"non-monotone step: {t} after {state.t}")
    reported = set(int(c) for c in risks)
    active = set(active_channels(state))
    extra = sorted(reported - active)
    if extra:
        raise ContractError(f"risk reported for frozen or unknown channels {extra}")
    missing = sorted(active - reported)
    if missing:
        raise ContractError(f"no risk reported for active channels {missing}")

    p = state.config.patience
    q = list(state.q)
    r = list(state.r)
    freeze_now: list[int] = []
    improved_any = False
    for c in sorted(reported):
        risk = float(risks[c])
        if risk < r[c]:
            r[c] = risk
            q[c] = p
            improved_any = True
        else:
            q[c] -= 1
        if q[c] == 0:
            freeze_now.append(c)

    combined_best = state.combined_best
    if state.config.track_combined_best:
        combined = math.fsum(float(risks[c]) for c in reported) / len(reported) if reported else math.inf
        best_updated = combined < combined_best
        if best_updated:
            combined_best = combined
    else:
        best_updated = improved_any

    frozen = tuple(qc == 0 for qc in q)
    new_state = StoppingState(
        config=state.config,
        q=tuple(q),
        r=tuple(r),
        t=t,
        t_star=t if best_updated else state.t_star,
        best_checkpoint=checkpoint_token if best_updated else state.best_checkpoint,
        frozen=frozen,
        stopped=all(frozen),
        combined_best=combined_best,
    )
    decision = Decision(
        freeze_now=tuple(freeze_now),
        best_updated=best_updated,
        t_star=new_state.t_star,
        stopped=new_state.stopped,
    )
    return new_state, decision


def should_evaluate(state: StoppingState, t: int, config: ControllerConfig) -> bool:
    """True on steps where a LOO evaluation is due (multiples of n*T, pre-stop)."""
    stride = config.eval_interval * config.eval_period
    return (not state.stopped) and t > 0 and t % stride == 0
