"""Synthetic event-log generator for testing and demos.

Simulates the reduced-form book directly (one side touched per event,
best prices moving at most one tick) so the emitted logs satisfy every
invariant the ingest pipeline checks.  ``plant_jumps`` then damages a log
in a controlled way, producing exactly one one-tick-assumption violation
per planted position.
"""
from __future__ import annotations

from decimal import Decimal

import numpy as np

from .core import BookEvent, Side, Tick

DEFAULT_TICK = Tick(Decimal("0.01"))


def random_book_log(
    rng: np.random.Generator,
    n_events: int,
    tick: Tick = DEFAULT_TICK,
    start_price: int = 10_000,
    start_qty: int = 20,
    max_order: int = 8,
    p_cancel: float = 0.42,
    p_deplete: float = 0.08,
    p_narrow: float = 0.35,
) -> list[BookEvent]:
    """Generate a valid book-event log of length ``n_events``.

    Event mix per step: add liquidity, cancel part of a queue, deplete a
    queue (price moves away one tick), or place an order inside the spread
    (price moves in one tick; only possible at spread >= 2).  Queues stay
    strictly positive and the spread stays >= 1 tick throughout.
    """
    s_b, s_a = start_price, start_price + 1
    q_b, q_a = start_qty, start_qty
    events: list[BookEvent] = []
    for j in range(n_events):
        ask = rng.random() < 0.5
        qty = q_a if ask else q_b
        spread = s_a - s_b

        u = rng.random()
        if spread >= 2 and u < p_narrow:
            action = "narrow"
        elif u < p_narrow + p_deplete:
            action = "deplete"
        elif u < p_narrow + p_deplete + p_cancel and qty >= 2:
            action = "cancel"
        else:
            action = "add"

        if action == "add":
            qty += int(rng.integers(1, max_order + 1))
        elif action == "cancel":
            qty -= int(rng.integers(1, qty))
        elif action == "deplete":
            qty = int(rng.integers(1, max_order + 1))
            if ask:
                s_a += 1
            else:
                s_b -= 1
        else:
            qty = int(rng.integers(1, max_order + 1))
            if ask:
                s_a -= 1
            else:
                s_b += 1

        if ask:
            q_a = qty
        else:
            q_b = qty
        events.append(
            BookEvent(
                index=j,
                side=Side.ASK if ask else Side.BID,
                best_bid=s_b,
                best_ask=s_a,
                bid_qty=q_b,
                ask_qty=q_a,
            )
        )
    return events


def plant_jumps(
    events: list[BookEvent], positions: list[int], jump_ticks: int = 2
) -> list[BookEvent]:
    """Shift both best prices by ``jump_ticks`` from each position onward.

    Each position j >= 1 makes exactly the transition (j-1, j) violate the
    one-tick assumption while leaving every row individually valid and all
    later transitions consistent (the shift applies to the whole suffix).
    """
    for p in positions:
        if not 1 <= p < len(events):
            raise ValueError(f"plant position {p} outside (0, {len(events)})")
    shift = [0] * len(events)
    for p in positions:
        for j in range(p, len(events)):
            shift[j] += jump_ticks
    return [
        BookEvent(
            index=ev.index,
            side=ev.side,
            best_bid=ev.best_bid + s,
            best_ask=ev.best_ask + s,
            bid_qty=ev.bid_qty,
            ask_qty=ev.ask_qty,
        )
        for ev, s in zip(events, shift)
    ]
