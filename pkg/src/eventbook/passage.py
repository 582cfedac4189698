"""First-passage machinery and Monte Carlo price-move prediction.

At spread one, the next mid-price move happens when a best queue is
depleted: the first index where the cumulative signed flow on one side
crosses minus the current queue size.  At wider spreads an order landing
inside the spread (same-signed x and y with |y| <= |x|) also moves a
price.  The probability that the next move is up (p_up) is estimated by
simulating (x, y) continuations from a fitted model conditioned on the
lag history and racing the stopping indices path by path.

Sweeps over queue sizes reuse the same simulated paths (common random
numbers): per path the hitting index is a non-decreasing function of the
queue threshold, so estimated p_up is monotone in q_a exactly, not just
statistically, and the critical queue size q* has a unique crossing per
seed.  Paths that resolve nothing within the horizon are counted as
censored, never imputed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import BookState, EventBookError, FlowDelta, XYEvent
from .models import (
    BatchSimulator,
    K_NARROW_ASK,
    K_NARROW_BID,
    LagBuffer,
    XYModel,
)

PREDICT_SCHEMA = "eventbook-passage-v1"


class BracketFailure(EventBookError):
    """p_up still exceeds p_down at the largest searched ask-queue size."""


class IndexOutOfPath(EventBookError):
    """Stopping index is censored or beyond the supplied path."""


@dataclass(frozen=True)
class StoppingIndices:
    """First-passage indices (1-based event counts; inf when censored).

    l_b / l_a: cumulative flow depletes the bid / ask queue.
    tilde_l_b / tilde_l_a: an order lands inside the spread on that side
    (only detectable when the spread is at least two ticks).
    """

    l_b: float
    l_a: float
    tilde_l_b: float = math.inf
    tilde_l_a: float = math.inf

    @property
    def tau0(self) -> float:
        return min(self.l_b, self.l_a)

    @property
    def tau1(self) -> float:
        return min(self.l_b, self.l_a, self.tilde_l_b, self.tilde_l_a)


@dataclass(frozen=True)
class PassageEstimate:
    """Monte Carlo estimate of the next price-move direction probabilities."""

    p_up: float
    p_down: float
    half_width: float
    n_paths: int
    horizon: int
    n_censored: int = 0

    def to_dict(self) -> dict:
        return {
            "schema": PREDICT_SCHEMA,
            "p_up": self.p_up,
            "p_down": self.p_down,
            "half_width": self.half_width,
            "n_paths": self.n_paths,
            "horizon": self.horizon,
            "n_censored": self.n_censored,
        }


@dataclass(frozen=True)
class MCParams:
    n_paths: int = 20_000
    horizon: int = 2_000
    seed: int = 0
    qa_cap: int = 4_096


def first_passage(
    q_b: int,
    q_a: int,
    flows: Sequence[FlowDelta],
    events: Sequence[XYEvent] | None = None,
    spread_ticks: int = 1,
) -> StoppingIndices:
    """Stopping indices of one flow sequence against queue thresholds.

    l_b is the first l with sum of v_b over the first l flows <= -q_b
    (l_a analogous).  When ``events`` is supplied and the spread leaves
    room, inside-spread submissions are detected by the same-sign rule on
    (x, y).  Censoring within the sequence is encoded as inf.
    """
    if q_b <= 0 or q_a <= 0:
        raise ValueError(f"queue sizes must be positive (q_b={q_b}, q_a={q_a})")
    if events is not None and len(events) != len(flows):
        raise ValueError("events must align one-to-one with flows")
    l_b = l_a = math.inf
    tilde_b = tilde_a = math.inf
    track_tilde = events is not None and spread_ticks >= 2
    cum_b = cum_a = 0
    for l, fd in enumerate(flows, start=1):
        cum_b += fd.v_b
        cum_a += fd.v_a
        if l_b is math.inf and cum_b <= -q_b:
            l_b = l
        if l_a is math.inf and cum_a <= -q_a:
            l_a = l
        if track_tilde:
            ev = events[l - 1]
            if tilde_a is math.inf and 0 < ev.y <= ev.x:
                tilde_a = l
            if tilde_b is math.inf and ev.x <= ev.y < 0:
                tilde_b = l
    return StoppingIndices(l_b=l_b, l_a=l_a, tilde_l_b=tilde_b, tilde_l_a=tilde_a)


def apply_reinit(
    state: BookState, indices: StoppingIndices, path: Sequence[XYEvent]
) -> BookState:
    """Book state right after the stopping event, by the re-init formulas.

    On a widening the moved side's queue becomes y at the stopping event
    and the surviving side keeps its order-flow value; on a narrowing the
    new queue is the submitted order's own size and the other side keeps
    its flow value.  Agrees with replaying the path through
    ``reconstruct.step`` up to the same index.
    """
    tau = indices.tau1
    if not math.isfinite(tau) or tau < 1 or tau > len(path):
        raise IndexOutOfPath(f"stopping index {tau} outside path of length {len(path)}")
    tau = int(tau)
    sum_a = sum(ev.x for ev in path[:tau] if ev.y > 0)
    sum_b = sum(-ev.x for ev in path[:tau] if ev.y < 0)
    ev = path[tau - 1]
    if tau == indices.l_a:
        return replace(state, s_a=state.s_a + 1, q_a=ev.y, q_b=state.q_b + sum_b)
    if tau == indices.l_b:
        return replace(state, s_b=state.s_b - 1, q_b=-ev.y, q_a=state.q_a + sum_a)
    if tau == indices.tilde_l_a:
        return replace(state, s_a=state.s_a - 1, q_a=ev.x, q_b=state.q_b + sum_b)
    if tau == indices.tilde_l_b:
        return replace(state, s_b=state.s_b + 1, q_b=-ev.x, q_a=state.q_a + sum_a)
    raise IndexOutOfPath(f"tau1={tau} does not match any stopping index")


# ---------------------------------------------------------------------------
# Monte Carlo engines
# ---------------------------------------------------------------------------

@dataclass
class _HitData:
    """Per-path hitting indices; sentinel = horizon + 1 means censored."""

    l_a: np.ndarray        # (n_paths, len(qa_grid)) int64
    l_b: np.ndarray        # (n_paths, len(qb_grid)) int64
    tilde_a: np.ndarray    # (n_paths,) int64
    tilde_b: np.ndarray
    horizon: int

    @property
    def sentinel(self) -> int:
        return self.horizon + 1


def _chunk_size(n_paths: int) -> int:
    return int(max(16, min(128, (1 << 22) // max(n_paths, 1))))


def _fast_iid_hits(
    model: XYModel,
    n_paths: int,
    horizon: int,
    seed: int,
    qa_grid: Sequence[int],
    qb_grid: Sequence[int],
    compact: bool = True,
) -> _HitData:
    """Chunked flow race for memoryless models at spread one.

    IID draws never condition on the book, so the flow stream is a pure
    function of the rng stream and the first-passage race can be run on
    cumulative running minima without simulating the book at all.
    Inside-spread events cannot precede the first move at spread one, so
    the tilde indices stay censored.

    ``compact`` drops paths whose outcome is already fixed (any index at
    the widest thresholds resolved).  Dropping reassigns subsequent rng
    draws among survivors, so callers racing several threshold sets
    against each other under common random numbers must disable it; a
    single estimate is unaffected.
    """
    qa = np.asarray(qa_grid, dtype=np.int64)
    qb = np.asarray(qb_grid, dtype=np.int64)
    sent = horizon + 1
    l_a = np.full((n_paths, len(qa)), sent, dtype=np.int64)
    l_b = np.full((n_paths, len(qb)), sent, dtype=np.int64)
    x_tab = model.iid_samples[:, 0]
    side_tab = model.iid_samples[:, 1]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    alive = np.arange(n_paths)
    carry_a = np.zeros(n_paths, dtype=np.int64)
    carry_b = np.zeros(n_paths, dtype=np.int64)
    chunk = _chunk_size(n_paths)
    done = 0
    while done < horizon and len(alive):
        c = min(chunk, horizon - done)
        idx = rng.integers(0, len(x_tab), size=(len(alive), c))
        x = x_tab[idx]
        ask = side_tab[idx] > 0
        cum_a = carry_a[:, None] + np.cumsum(np.where(ask, x, 0), axis=1)
        cum_b = carry_b[:, None] + np.cumsum(np.where(ask, 0, -x), axis=1)
        min_a = np.minimum.accumulate(cum_a, axis=1)
        min_b = np.minimum.accumulate(cum_b, axis=1)
        for cols, mins, grid in ((l_a, min_a, qa), (l_b, min_b, qb)):
            for qi, q in enumerate(grid):
                unresolved = cols[alive, qi] == sent
                # running min is non-increasing: entries <= -q form a suffix
                cnt = np.count_nonzero(mins <= -q, axis=1)
                upd = unresolved & (cnt > 0)
                cols[alive[upd], qi] = done + (c - cnt[upd]) + 1
        carry_a = cum_a[:, -1]
        carry_b = cum_b[:, -1]
        done += c
        # A path's outcome is fixed once any index at the widest thresholds
        # resolved: anything still open can only resolve later than it.
        fixed = (l_a[alive, -1] < sent) | (l_b[alive, -1] < sent)
        if fixed.all():
            break
        if compact:
            keep = ~fixed
            alive = alive[keep]
            carry_a = carry_a[keep]
            carry_b = carry_b[keep]
    tilde = np.full(n_paths, sent, dtype=np.int64)
    return _HitData(l_a=l_a, l_b=l_b, tilde_a=tilde, tilde_b=tilde.copy(), horizon=horizon)


def _batch_hits(
    model: XYModel,
    state: BookState,
    history: LagBuffer | None,
    n_paths: int,
    horizon: int,
    seed: int,
    qa_grid: Sequence[int],
    qb_grid: Sequence[int],
) -> _HitData:
    """General engine: vectorized book-aware simulation, one step at a time.

    Every step draws full-width randomness in a fixed order, so the
    realized paths depend only on (seed, n_paths) and never on the queue
    thresholds being raced; sweeping thresholds reuses identical paths.
    """
    qa = np.asarray(qa_grid, dtype=np.int64)
    qb = np.asarray(qb_grid, dtype=np.int64)
    sent = horizon + 1
    l_a = np.full((n_paths, len(qa)), sent, dtype=np.int64)
    l_b = np.full((n_paths, len(qb)), sent, dtype=np.int64)
    tilde_a = np.full(n_paths, sent, dtype=np.int64)
    tilde_b = np.full(n_paths, sent, dtype=np.int64)
    sim = BatchSimulator(model, n_paths, state, history)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    cum_a = np.zeros(n_paths, dtype=np.int64)
    cum_b = np.zeros(n_paths, dtype=np.int64)
    for step in range(1, horizon + 1):
        x, y, kind = sim.step(rng)
        ask = y > 0
        cum_a += np.where(ask, x, 0)
        cum_b += np.where(ask, 0, -x)
        for qi in range(len(qa)):
            upd = (l_a[:, qi] == sent) & (cum_a <= -qa[qi])
            l_a[upd, qi] = step
        for qi in range(len(qb)):
            upd = (l_b[:, qi] == sent) & (cum_b <= -qb[qi])
            l_b[upd, qi] = step
        na = (kind == K_NARROW_ASK) & (tilde_a == sent)
        nb = (kind == K_NARROW_BID) & (tilde_b == sent)
        tilde_a[na] = step
        tilde_b[nb] = step
        # Outcome per path is fixed once any index at the widest thresholds
        # resolved; unresolved ones can only land later.
        if (
            (l_a[:, -1] < sent)
            | (l_b[:, -1] < sent)
            | (tilde_a < sent)
            | (tilde_b < sent)
        ).all():
            break
    return _HitData(l_a=l_a, l_b=l_b, tilde_a=tilde_a, tilde_b=tilde_b, horizon=horizon)


def _simulate_hits(
    model: XYModel,
    state: BookState,
    history: LagBuffer | None,
    n_paths: int,
    horizon: int,
    seed: int,
    qa_grid: Sequence[int],
    qb_grid: Sequence[int],
    compact: bool = True,
) -> _HitData:
    model.validate()
    if n_paths < 1 or horizon < 1:
        raise ValueError("n_paths and horizon must be >= 1")
    if model.kind == "iid" and state.spread_ticks == 1:
        return _fast_iid_hits(model, n_paths, horizon, seed, qa_grid, qb_grid, compact)
    # The book-aware engine never compacts: its rng stream must stay a pure
    # function of the step index for threshold sweeps to share paths.
    return _batch_hits(model, state, history, n_paths, horizon, seed, qa_grid, qb_grid)


def _classify(hits: _HitData, qa_col: int, qb_col: int) -> tuple[int, int, int]:
    """(n_up, n_down, n_censored) for one threshold pair."""
    up_idx = np.minimum(hits.l_a[:, qa_col], hits.tilde_b)
    down_idx = np.minimum(hits.l_b[:, qb_col], hits.tilde_a)
    sent = hits.sentinel
    tie = (up_idx == down_idx) & (up_idx < sent)
    if tie.any():
        raise AssertionError("up and down stopping indices tied; one event per side")
    n_up = int(np.count_nonzero(up_idx < down_idx))
    n_down = int(np.count_nonzero(down_idx < up_idx))
    return n_up, n_down, hits.l_a.shape[0] - n_up - n_down


def estimate_p(
    state: BookState,
    model: XYModel,
    history: LagBuffer | None = None,
    n_paths: int = 20_000,
    horizon: int = 2_000,
    seed: int = 0,
) -> PassageEstimate:
    """Probability that the next mid-price move is up (and down).

    Simulates (x, y) continuations conditioned on the lag buffer, races
    the stopping indices per path against the state's queue sizes, and
    censors paths with no price move inside the horizon.  Deterministic
    given (seed, n_paths, horizon).
    """
    hits = _simulate_hits(
        model, state, history, n_paths, horizon, seed, [state.q_a], [state.q_b]
    )
    n_up, n_down, n_cens = _classify(hits, 0, 0)
    p_up = n_up / n_paths
    p_down = n_down / n_paths
    return PassageEstimate(
        p_up=p_up,
        p_down=p_down,
        half_width=1.96 * math.sqrt(p_up * (1.0 - p_up) / n_paths),
        n_paths=n_paths,
        horizon=horizon,
        n_censored=n_cens,
    )


def passage_curve(
    state: BookState,
    model: XYModel,
    history: LagBuffer | None,
    qa_values: Sequence[int],
    mc: MCParams,
) -> tuple[np.ndarray, np.ndarray]:
    """(p_up, p_down) over a grid of ask-queue sizes on common paths.

    Reusing one set of simulated paths makes p_up non-increasing in q_a
    pathwise-exactly, mirroring the monotonicity of the hitting index in
    the threshold.
    """
    hits = _simulate_hits(
        model,
        state,
        history,
        mc.n_paths,
        mc.horizon,
        mc.seed,
        list(qa_values),
        [state.q_b],
        compact=False,
    )
    ups = np.empty(len(qa_values))
    downs = np.empty(len(qa_values))
    for qi in range(len(qa_values)):
        n_up, n_down, _ = _classify(hits, qi, 0)
        ups[qi] = n_up / mc.n_paths
        downs[qi] = n_down / mc.n_paths
    return ups, downs


def critical_queue(
    state: BookState,
    model: XYModel,
    history: LagBuffer | None,
    q_b: int,
    mc: MCParams,
) -> int:
    """Smallest integer ask-queue size with p_up <= p_down, given q_b.

    Integer bisection under common random numbers: every evaluation
    reuses the same seed, so the simulated paths are identical across
    probes and the crossing is unique for the seed.  The upper bracket
    doubles until p_up(hi) <= p_down(hi), failing at ``mc.qa_cap``.
    A state below the returned size predicts a price increase.
    """
    if q_b <= 0:
        raise ValueError("q_b must be positive")
    probe_state = replace(state, q_b=q_b)

    def eval_at(qa: int) -> tuple[float, float]:
        hits = _simulate_hits(
            model,
            probe_state,
            history,
            mc.n_paths,
            mc.horizon,
            mc.seed,
            [qa],
            [q_b],
            compact=False,
        )
        n_up, n_down, _ = _classify(hits, 0, 0)
        return n_up / mc.n_paths, n_down / mc.n_paths

    up, down = eval_at(1)
    if up <= down:
        return 1
    hi = max(2 * q_b, 8)
    while True:
        hi = min(hi, mc.qa_cap)
        up, down = eval_at(hi)
        if up <= down:
            break
        if hi >= mc.qa_cap:
            raise BracketFailure(
                f"p_up ({up:.4f}) still exceeds p_down ({down:.4f}) at "
                f"q_a = {hi}; raise qa_cap or the horizon"
            )
        hi *= 2
    lo = 1  # p_up(lo) > p_down(lo), p_up(hi) <= p_down(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        up, down = eval_at(mid)
        if up <= down:
            hi = mid
        else:
            lo = mid
    return hi
