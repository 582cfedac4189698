"""Replay of the full book trajectory from an (X, Y) stream.

Given the state after some event and the following (x, y) pairs, each step
is classified by a three-way case analysis per side:

* depletion: the order wipes out the best queue, the price moves away one
  tick and y supplies the re-initialized queue behind it;
* narrowing: x and y share a sign with ``|y| <= |x|``, which happens
  exactly when a new limit order lands inside the spread (requires spread
  of at least two ticks); the order becomes the new best queue;
* otherwise the price stands still and the queue absorbs x, in which case
  y must equal the updated queue size.

Replaying the stream extracted from any valid log reproduces that log's
prices and queues exactly, in integer arithmetic.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .core import BookState, EventBookError, FlowDelta, XYEvent


class InconsistentY(EventBookError):
    """y does not match the queue implied by a price-preserving update."""


class NarrowAtMinSpread(EventBookError):
    """Same-sign |y| <= |x| event (inside-spread order) while spread is one tick."""


class TransitionKind(enum.Enum):
    NO_MOVE = "NoMove"
    WIDEN_UP = "WidenUp"
    WIDEN_DOWN = "WidenDown"
    NARROW_ASK = "NarrowAsk"
    NARROW_BID = "NarrowBid"

    def __str__(self) -> str:
        return self.value


#: Sign of the mid-price change per transition kind (in half-ticks).
MID_DIRECTION = {
    TransitionKind.NO_MOVE: 0,
    TransitionKind.WIDEN_UP: +1,
    TransitionKind.NARROW_BID: +1,
    TransitionKind.WIDEN_DOWN: -1,
    TransitionKind.NARROW_ASK: -1,
}


@dataclass(frozen=True, slots=True)
class Transition:
    kind: TransitionKind
    state_after: BookState
    flow: FlowDelta


def step(state: BookState, ev: XYEvent) -> Transition:
    """Advance the book by one (x, y) event."""
    x, y = ev.x, ev.y
    if y > 0:  # ask event
        if 0 < y <= x:
            if state.spread_ticks < 2:
                raise NarrowAtMinSpread(
                    f"inside-spread ask event (x={x}, y={y}) at spread 1"
                )
            new = replace(state, s_a=state.s_a - 1, q_a=y)
            return Transition(TransitionKind.NARROW_ASK, new, FlowDelta(0, x))
        if state.q_a + x <= 0:
            new = replace(state, s_a=state.s_a + 1, q_a=y)
            return Transition(TransitionKind.WIDEN_UP, new, FlowDelta(0, -state.q_a))
        q_a = state.q_a + x
        if q_a != y:
            raise InconsistentY(
                f"ask queue {state.q_a}{x:+d} = {q_a} but y = {y}"
            )
        return Transition(TransitionKind.NO_MOVE, replace(state, q_a=q_a), FlowDelta(0, x))

    # bid event: v_b = -x
    if x <= y < 0:
        if state.spread_ticks < 2:
            raise NarrowAtMinSpread(
                f"inside-spread bid event (x={x}, y={y}) at spread 1"
            )
        new = replace(state, s_b=state.s_b + 1, q_b=-y)
        return Transition(TransitionKind.NARROW_BID, new, FlowDelta(-x, 0))
    if state.q_b - x <= 0:
        new = replace(state, s_b=state.s_b - 1, q_b=-y)
        return Transition(TransitionKind.WIDEN_DOWN, new, FlowDelta(-state.q_b, 0))
    q_b = state.q_b - x
    if q_b != -y:
        raise InconsistentY(
            f"bid queue {state.q_b}{-x:+d} = {q_b} but y = {y}"
        )
    return Transition(TransitionKind.NO_MOVE, replace(state, q_b=q_b), FlowDelta(-x, 0))


def reconstruct_stream(
    initial: BookState, xs: Iterable[XYEvent]
) -> list[Transition]:
    """Fold ``step`` over a stream, failing fast with the offending position."""
    out: list[Transition] = []
    state = initial
    for i, ev in enumerate(xs):
        try:
            tr = step(state, ev)
        except EventBookError as exc:
            raise type(exc)(f"stream position {i}: {exc}") from exc
        out.append(tr)
        state = tr.state_after
    return out


def trajectory_states(initial: BookState, xs: Sequence[XYEvent]) -> list[BookState]:
    """Convenience: the post-event states, without the transition metadata."""
    return [tr.state_after for tr in reconstruct_stream(initial, xs)]
