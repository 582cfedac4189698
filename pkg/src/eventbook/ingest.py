"""Event-log parsing, validation and (X,Y) extraction.

The input format is a UTF-8 CSV with header
``index,side,best_bid,best_ask,bid_qty,ask_qty`` holding post-event
snapshots of the best levels; prices are decimal strings on the tick grid
and ``side`` is ``B`` or ``A``.  ``extract_xy`` maps consecutive snapshot
pairs to (x, y) events, dropping and counting transitions that violate
the one-tick price-move assumption, and reports a spread histogram plus
the drop counters.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .core import (
    AssumptionViolation,
    BookEvent,
    BookState,
    EventBookError,
    Side,
    Tick,
    XYEvent,
    derive_flow,
    derive_xy,
)
from . import jsonio

CSV_HEADER = ["index", "side", "best_bid", "best_ask", "bid_qty", "ask_qty"]
XY_SCHEMA = "eventbook-xy-v1"
REPORT_SCHEMA = "eventbook-ingest-report-v1"


class ParseError(EventBookError):
    """Malformed or invariant-violating row; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TickMismatch(ParseError):
    """A price in the file does not sit on the configured tick grid."""


class EmptyStream(EventBookError):
    """Fewer than two events: no transition to extract."""


@dataclass(frozen=True, slots=True)
class LogFormat:
    """Input dialect: currently just the tick that defines the price grid."""

    tick: Tick


@dataclass
class IngestReport:
    """Data-quality summary of one extraction pass.

    ``spread_histogram`` counts post-event spreads (in ticks) over all
    events that made it into the stream, so its counts sum to
    ``total_events - a2_violations - zero_y_dropped``.
    """

    total_events: int = 0
    a2_violations: int = 0
    zero_y_dropped: int = 0
    side_splits: int = 0
    spread_histogram: dict[int, int] = field(default_factory=dict)

    @property
    def a2_violation_rate(self) -> float:
        return self.a2_violations / self.total_events if self.total_events else 0.0

    @property
    def dropped(self) -> int:
        return self.a2_violations + self.zero_y_dropped

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "total_events": self.total_events,
            "a2_violations": self.a2_violations,
            "a2_violation_rate": self.a2_violation_rate,
            "zero_y_dropped": self.zero_y_dropped,
            "side_splits": self.side_splits,
            "spread_histogram": {str(k): v for k, v in sorted(self.spread_histogram.items())},
        }


def _open_text(source) -> TextIO:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.RawIOBase) or isinstance(source, io.BufferedIOBase):
        return io.TextIOWrapper(source, encoding="utf-8", newline="")
    return source  # already a text stream


def parse_log(source, fmt: LogFormat) -> list[BookEvent]:
    """Parse and validate a book-event CSV into a BookEvent sequence.

    Raises ParseError (with the offending line number) on malformed rows or
    rows violating the book invariants, and TickMismatch for off-grid
    prices.  The index column must be strictly increasing.
    """
    tick = fmt.tick
    events: list[BookEvent] = []
    fh = _open_text(source)
    reader = csv.reader(fh)
    try:
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file, header required", 1)
        if [h.strip() for h in header[: len(CSV_HEADER)]] != CSV_HEADER:
            raise ParseError(f"bad header {header!r}, expected {','.join(CSV_HEADER)}", 1)
        n_cols = len(header)  # trailing columns (e.g. simulate's kind) are ignored
        last_index = None
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_cols:
                raise ParseError(f"expected {n_cols} fields, got {len(row)}", line_no)
            try:
                index = int(row[0])
                side = Side(row[1].strip())
                bid_px = Decimal(row[2])
                ask_px = Decimal(row[3])
                bid_qty = int(row[4])
                ask_qty = int(row[5])
            except (ValueError, InvalidOperation) as exc:
                raise ParseError(f"malformed row {row!r}: {exc}", line_no) from None
            try:
                bid_ticks = tick.to_ticks(bid_px)
                ask_ticks = tick.to_ticks(ask_px)
            except ValueError as exc:
                raise TickMismatch(str(exc), line_no) from None
            ev = BookEvent(
                index=index,
                side=side,
                best_bid=bid_ticks,
                best_ask=ask_ticks,
                bid_qty=bid_qty,
                ask_qty=ask_qty,
            )
            try:
                ev.validate()
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from None
            if last_index is not None and index <= last_index:
                raise ParseError(f"index {index} not strictly increasing", line_no)
            last_index = index
            events.append(ev)
    finally:
        if isinstance(source, (str, Path, bytes)):
            fh.close()
    return events


def write_log(events: Sequence[BookEvent], tick: Tick, dest) -> None:
    """Write events in the ingest CSV schema (canonical price rendering)."""
    own = isinstance(dest, (str, Path))
    fh = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for ev in events:
            writer.writerow(
                [
                    ev.index,
                    ev.side.value,
                    tick.to_price(ev.best_bid),
                    tick.to_price(ev.best_ask),
                    ev.bid_qty,
                    ev.ask_qty,
                ]
            )
    finally:
        if own:
            fh.close()


def _renumber(events: Sequence[BookEvent]) -> Sequence[BookEvent]:
    """Re-enumerate so consecutive list positions have consecutive indices."""
    if all(ev.index == i for i, ev in enumerate(events)):
        return events
    return [replace(ev, index=i) for i, ev in enumerate(events)]


def _split_pair(prev: BookEvent, curr: BookEvent) -> tuple[BookEvent, BookEvent]:
    """Split a both-sides transition into two single-side events.

    The row's declared side is applied second when possible (the label is
    taken to mark the triggering event); the other order is provably valid
    whenever that one breaches the minimum spread.
    """
    def _mid(first: Side) -> BookEvent:
        if first is Side.ASK:
            return BookEvent(
                index=prev.index + 1,
                side=Side.ASK,
                best_bid=prev.best_bid,
                best_ask=curr.best_ask,
                bid_qty=prev.bid_qty,
                ask_qty=curr.ask_qty,
            )
        return BookEvent(
            index=prev.index + 1,
            side=Side.BID,
            best_bid=curr.best_bid,
            best_ask=prev.best_ask,
            bid_qty=curr.bid_qty,
            ask_qty=prev.ask_qty,
        )

    first = Side.BID if curr.side is Side.ASK else Side.ASK
    mid = _mid(first)
    if mid.best_ask - mid.best_bid < 1:
        mid = _mid(curr.side)
        assert mid.best_ask - mid.best_bid >= 1, "unsplittable both-side transition"
    second_side = Side.ASK if mid.side is Side.BID else Side.BID
    tail = replace(curr, index=prev.index + 2, side=second_side)
    return mid, tail


def extract_xy(events: Sequence[BookEvent]) -> tuple[list[XYEvent], IngestReport]:
    """Map consecutive event pairs to the (X, Y) stream.

    Transitions where a best price jumps more than one tick are counted in
    ``a2_violations`` and skipped (the stream continues from the offending
    event).  Transitions that change nothing at the best levels have no
    event side, i.e. y would be 0, and are dropped into ``zero_y_dropped``.
    Rows that touch both sides at once are split into two consecutive
    single-side events and counted in ``side_splits``.
    """
    if len(events) < 2:
        raise EmptyStream(f"need at least 2 events, got {len(events)}")
    events = _renumber(events)
    report = IngestReport(total_events=len(events))
    hist = report.spread_histogram
    hist[events[0].spread_ticks] = hist.get(events[0].spread_ticks, 0) + 1

    out: list[XYEvent] = []
    prev = events[0]
    for curr in events[1:]:
        db = curr.best_bid - prev.best_bid
        da = curr.best_ask - prev.best_ask
        if abs(db) > 1 or abs(da) > 1:
            report.a2_violations += 1
            prev = curr
            continue
        bid_changed = db != 0 or curr.bid_qty != prev.bid_qty
        ask_changed = da != 0 or curr.ask_qty != prev.ask_qty
        if not bid_changed and not ask_changed:
            report.zero_y_dropped += 1
            prev = curr
            continue
        if bid_changed and ask_changed:
            mid, tail = _split_pair(prev, curr)
            base = replace(prev, index=mid.index - 1)
            out.append(derive_xy(mid, derive_flow(base, mid)))
            out.append(derive_xy(tail, derive_flow(mid, tail)))
            report.side_splits += 1
        else:
            out.append(derive_xy(curr, derive_flow(prev, curr)))
        hist[curr.spread_ticks] = hist.get(curr.spread_ticks, 0) + 1
        prev = curr
    return out, report


def initial_state(event: BookEvent, tick: Tick) -> BookState:
    """Book state as of one post-event snapshot."""
    return BookState(
        s_b=event.best_bid,
        s_a=event.best_ask,
        q_b=event.bid_qty,
        q_a=event.ask_qty,
        tick=tick,
    )


def write_xy_file(
    path: str | Path,
    xs: Iterable[XYEvent],
    state: BookState,
    extra: dict | None = None,
) -> None:
    """Serialize an (X,Y) stream with the state it continues from."""
    doc = {
        "schema": XY_SCHEMA,
        "tick": str(state.tick.delta),
        "initial_state": {
            "s_b": state.s_b,
            "s_a": state.s_a,
            "q_b": state.q_b,
            "q_a": state.q_a,
        },
        "events": [[ev.x, ev.y] for ev in xs],
    }
    if extra:
        doc.update(extra)
    jsonio.dump(doc, path)


def read_xy_file(path: str | Path) -> tuple[list[XYEvent], BookState]:
    doc = jsonio.load(path)
    if doc.get("schema") != XY_SCHEMA:
        raise EventBookError(f"{path}: expected schema {XY_SCHEMA}, got {doc.get('schema')!r}")
    tick = Tick.parse(doc["tick"])
    st = doc["initial_state"]
    state = BookState(s_b=st["s_b"], s_a=st["s_a"], q_b=st["q_b"], q_a=st["q_a"], tick=tick)
    xs = [XYEvent(x=int(x), y=int(y)) for x, y in doc["events"]]
    return xs, state
