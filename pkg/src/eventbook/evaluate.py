"""Walk-forward predictability evaluation on a held-out segment.

Two questions, each scored against a minimal fair baseline with no
look-ahead anywhere:

* direction: at each price-moving event in the test segment, did the
  Monte Carlo first-passage prediction (made from the state and lag
  history just before the move) call the direction right?  Baselines:
  a fair coin and the larger-queue rule (predict up iff the ask queue is
  smaller than the bid queue).
* order flow: one-step-ahead mean squared error of the predicted signed
  event size against the realized one, versus predicting the training
  mean every time.

A label-shuffled direction hit rate is reported alongside as the
destroyed-signal control.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import BookState, EventBookError, XYEvent
from .models import LagBuffer, XYModel, conditional_mean_x
from .passage import estimate_p
from .reconstruct import MID_DIRECTION, TransitionKind, reconstruct_stream

METRICS_SCHEMA = "eventbook-metrics-v1"


class SplitTooSmall(EventBookError):
    """Test segment too short to evaluate (needs lags and price moves)."""


def _derive_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence((seed, tag)).generate_state(1)[0])


def evaluate(
    xs: Sequence[XYEvent],
    initial: BookState,
    model: XYModel,
    split: float = 0.5,
    n_paths: int = 128,
    horizon: int = 512,
    seed: int = 0,
    max_move_evals: int = 400,
) -> dict:
    """Score the model on the test fraction of an (X, Y) stream.

    ``split`` is the training fraction: events before the split index are
    available as history but never scored, so a model fitted on that
    prefix sees no test data.  Price-move evaluations are capped at
    ``max_move_evals`` (evenly strided) to bound the Monte Carlo cost.
    """
    n = len(xs)
    if not 0.0 < split < 1.0:
        raise ValueError(f"split must be inside (0, 1), got {split}")
    k = int(n * split)
    p = model.lag_order
    if n - k < max(p + 2, 10):
        raise SplitTooSmall(f"test segment has {n - k} events, need {max(p + 2, 10)}")
    if k < p + 1:
        raise SplitTooSmall(f"training segment has {k} events, need {p + 1} for the lags")

    transitions = reconstruct_stream(initial, xs)
    states = [initial] + [tr.state_after for tr in transitions]

    # --- direction at price-moving events -------------------------------
    move_idx = [
        j
        for j in range(max(k, p), n)
        if transitions[j].kind is not TransitionKind.NO_MOVE
    ]
    if not move_idx:
        raise SplitTooSmall("no price-moving events in the test segment")
    if len(move_idx) > max_move_evals:
        stride = len(move_idx) / max_move_evals
        move_idx = [move_idx[int(i * stride)] for i in range(max_move_evals)]

    hits = 0
    naive_hits = 0
    predictions = []
    realized = []
    for j in move_idx:
        before = states[j]
        history = LagBuffer.from_events(xs[:j], p) if p else None
        est = estimate_p(
            before,
            model,
            history,
            n_paths=n_paths,
            horizon=horizon,
            seed=_derive_seed(seed, j),
        )
        if est.p_up > est.p_down:
            pred = 1
        elif est.p_up < est.p_down:
            pred = -1
        else:
            pred = 1 if before.q_a < before.q_b else -1
        real = MID_DIRECTION[transitions[j].kind]
        naive = 1 if before.q_a < before.q_b else -1
        hits += pred == real
        naive_hits += naive == real
        predictions.append(pred)
        realized.append(real)

    n_eval = len(move_idx)
    hit_rate = hits / n_eval
    naive_rate = naive_hits / n_eval

    shuffle_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0)))
    shuffled = np.array(realized)
    shuffle_rng.shuffle(shuffled)
    shuffled_rate = float(np.mean(np.array(predictions) == shuffled))

    # --- one-step flow prediction ---------------------------------------
    z = np.array([(ev.x, ev.y) for ev in xs], dtype=float)
    cond = conditional_mean_x(model, z)
    # cond[i] predicts z[p + i] for the regression (p = 0 for iid)
    pred_x = cond[k:] if model.kind == "iid" else cond[k - p :]
    real_x = z[k:, 0]
    train_mean = float(z[:k, 0].mean())
    mse_model = float(np.mean((pred_x - real_x) ** 2))
    mse_base = float(np.mean((train_mean - real_x) ** 2))
    mse_lift = (mse_base - mse_model) / mse_base if mse_base > 0 else 0.0

    return {
        "schema": METRICS_SCHEMA,
        "n_events": n,
        "n_train": k,
        "n_test": n - k,
        "direction": {
            "n_evaluated": n_eval,
            "hit_rate": hit_rate,
            "naive_larger_queue_hit_rate": naive_rate,
            "coin_flip_hit_rate": 0.5,
            "lift_vs_coin": hit_rate - 0.5,
            "lift_vs_larger_queue": hit_rate - naive_rate,
            "shuffled_hit_rate": shuffled_rate,
            "shuffle_sigma": 0.5 / math.sqrt(n_eval),
        },
        "flow": {
            "n_evaluated": int(len(real_x)),
            "mse_model": mse_model,
            "mse_baseline": mse_base,
            "baseline_mean": train_mean,
            "mse_lift": mse_lift,
        },
        "mc": {"n_paths": n_paths, "horizon": horizon, "seed": seed},
    }
