"""Reduced-form order book state in event time.

The book is tracked only at the best levels: best bid/ask price and the
size of the two best queues, indexed by an integer event counter.  Every
event touches exactly one side.  The per-event queue change (``FlowDelta``)
and the pair of signed event size / signed post-event queue (``XYEvent``)
are derived here; together they are sufficient to replay the whole book
(see ``reconstruct``).

Prices are stored as integer tick counts (price = ticks * delta) and
quantities as integers, so replaying a stream reproduces the original
book exactly, with no floating-point drift.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation


class EventBookError(Exception):
    """Base class for all errors raised by this package."""


class AssumptionViolation(EventBookError):
    """A best price moved by more than one tick between consecutive events."""


class SideConflict(EventBookError):
    """Event touches both sides at once, or neither, or contradicts its label."""


class Side(enum.Enum):
    BID = "B"
    ASK = "A"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, slots=True)
class Tick:
    """Price grid increment. All session prices must be integer multiples."""

    delta: Decimal

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError(f"tick must be positive, got {self.delta}")

    @classmethod
    def parse(cls, text: str) -> "Tick":
        try:
            return cls(Decimal(text))
        except InvalidOperation as exc:
            raise ValueError(f"bad tick value {text!r}") from exc

    def to_ticks(self, price: Decimal) -> int:
        """Convert a price to a tick count, requiring it to sit on the grid."""
        q = price / self.delta
        n = q.to_integral_value()
        if q != n:
            raise ValueError(f"price {price} is not a multiple of tick {self.delta}")
        return int(n)

    def to_price(self, ticks: int) -> Decimal:
        return self.delta * ticks


@dataclass(frozen=True, slots=True)
class BookEvent:
    """Post-event snapshot of the best levels.

    ``best_bid``/``best_ask`` are integer tick counts; ``side`` is the side
    the event touched.  Queues at the best levels are nonempty by definition
    of best bid/ask.
    """

    index: int
    side: Side
    best_bid: int
    best_ask: int
    bid_qty: int
    ask_qty: int

    def validate(self) -> None:
        if self.index < 0:
            raise ValueError(f"event {self.index}: index must be >= 0")
        if self.best_ask - self.best_bid < 1:
            raise ValueError(
                f"event {self.index}: spread must be >= 1 tick "
                f"(bid={self.best_bid}, ask={self.best_ask})"
            )
        if self.bid_qty <= 0 or self.ask_qty <= 0:
            raise ValueError(
                f"event {self.index}: best queues must be positive "
                f"(bid_qty={self.bid_qty}, ask_qty={self.ask_qty})"
            )

    @property
    def spread_ticks(self) -> int:
        return self.best_ask - self.best_bid


@dataclass(frozen=True, slots=True)
class BookState:
    """Current reduced-form state (prices in ticks, positive queue sizes)."""

    s_b: int
    s_a: int
    q_b: int
    q_a: int
    tick: Tick

    def __post_init__(self) -> None:
        if self.s_a - self.s_b < 1:
            raise ValueError(f"spread must be >= 1 tick (s_b={self.s_b}, s_a={self.s_a})")
        if self.q_b <= 0 or self.q_a <= 0:
            raise ValueError(f"queues must be positive (q_b={self.q_b}, q_a={self.q_a})")

    @property
    def spread_ticks(self) -> int:
        return self.s_a - self.s_b

    @property
    def mid_ticks(self) -> float:
        return 0.5 * (self.s_b + self.s_a)


@dataclass(frozen=True, slots=True)
class FlowDelta:
    """Signed change of the best queues at one event.

    One event cannot change the queues on both sides, so at most one
    component is nonzero.
    """

    v_b: int
    v_a: int

    def __post_init__(self) -> None:
        if self.v_b != 0 and self.v_a != 0:
            raise SideConflict(f"flow touches both sides (v_b={self.v_b}, v_a={self.v_a})")


@dataclass(frozen=True, slots=True)
class XYEvent:
    """Signed event size ``x`` and signed post-event best-queue size ``y``.

    ``y > 0`` marks an ask event, ``y < 0`` a bid event; ``y = 0`` cannot
    occur because the best queues are nonempty by definition.
    """

    x: int
    y: int

    def __post_init__(self) -> None:
        if self.y == 0:
            raise ValueError("y must be nonzero")

    @property
    def side(self) -> Side:
        return Side.ASK if self.y > 0 else Side.BID


def derive_flow(prev: BookEvent, curr: BookEvent) -> FlowDelta:
    """Queue changes between two consecutive post-event snapshots.

    Three cases per side: plain queue difference while the price stands
    still; the full previous queue is consumed when the price moves away
    (bid down / ask up); the full new queue appears when the price moves
    toward the spread (bid up / ask down).

    Raises AssumptionViolation if either best price moved by more than one
    tick, and SideConflict if the resulting flow would touch both sides or
    neither (an event must change the book at the best levels).
    """
    if curr.index != prev.index + 1:
        raise ValueError(
            f"events must be consecutive (got indices {prev.index}, {curr.index})"
        )
    db = curr.best_bid - prev.best_bid
    da = curr.best_ask - prev.best_ask
    if abs(db) > 1 or abs(da) > 1:
        raise AssumptionViolation(
            f"event {curr.index}: best price moved more than one tick "
            f"(bid {db:+d}, ask {da:+d} ticks)"
        )

    if db == 0:
        v_b = curr.bid_qty - prev.bid_qty
    elif db < 0:
        v_b = -prev.bid_qty
    else:
        v_b = curr.bid_qty

    if da == 0:
        v_a = curr.ask_qty - prev.ask_qty
    elif da > 0:
        v_a = -prev.ask_qty
    else:
        v_a = curr.ask_qty

    if v_b != 0 and v_a != 0:
        raise SideConflict(
            f"event {curr.index}: both queues changed (v_b={v_b}, v_a={v_a})"
        )
    if v_b == 0 and v_a == 0:
        raise SideConflict(
            f"event {curr.index}: nothing changed at the best levels"
        )
    return FlowDelta(v_b=v_b, v_a=v_a)


def derive_xy(curr: BookEvent, flow: FlowDelta) -> XYEvent:
    """Map a post-event snapshot and its flow to the (x, y) pair.

    x = v_a on an ask event, -v_b on a bid event; y is the signed size of
    the touched best queue after the event.
    """
    if flow.v_a != 0:
        event_side = Side.ASK
    elif flow.v_b != 0:
        event_side = Side.BID
    else:
        raise SideConflict(f"event {curr.index}: flow is empty")
    if curr.side is not event_side:
        raise SideConflict(
            f"event {curr.index}: labeled side {curr.side} but the "
            f"{event_side} queue changed"
        )
    if event_side is Side.ASK:
        return XYEvent(x=flow.v_a, y=curr.ask_qty)
    return XYEvent(x=-flow.v_b, y=-curr.bid_qty)
