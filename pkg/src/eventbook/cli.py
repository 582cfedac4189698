"""Command-line pipeline: ingest, calibrate, simulate, predict, diagnose, evaluate.

Every command is deterministic given its configuration and seed; outputs
are canonical JSON or CSV carrying a schema tag, the seed, and a hash of
the resolved configuration.  A config file (TOML or JSON) supplies
defaults; explicit flags win.  Stochastic commands refuse to run without
a seed.

Exit codes: 0 success, 1 usage or data errors, 2 ingest quality gate
(one-tick violation rate above the threshold).
"""
from __future__ import annotations

import argparse
import csv
import sys
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import calib, ingest, jsonio, models, passage, plots
from .core import BookState, EventBookError, Side, Tick
from .evaluate import evaluate as run_evaluate
from .models import BasisSpec, LagBuffer
from .reconstruct import reconstruct_stream

PROG = "eventbook"
STOCHASTIC_COMMANDS = {"simulate", "predict", "evaluate"}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise EventBookError(f"config file {path} does not exist")
    if p.suffix.lower() == ".json":
        return jsonio.load(p)
    try:
        import tomllib  # Python >= 3.11
    except ImportError:
        import tomli as tomllib
    with open(p, "rb") as fh:
        return tomllib.load(fh)


class _Resolver:
    """Flag > config-file > default resolution for one command invocation."""

    def __init__(self, ns: argparse.Namespace, config: dict):
        self.ns = ns
        self.config = config
        self.resolved: dict = {}

    def get(self, name: str, default=None, required: bool = False, hashed: bool = True):
        value = getattr(self.ns, name, None)
        if value is None:
            value = self.config.get(name, default)
        if value is None and required:
            raise EventBookError(f"missing required parameter --{name.replace('_', '-')}")
        if hashed:  # output destinations are excluded: they do not shape results
            self.resolved[name] = value if not isinstance(value, Path) else str(value)
        return value

    def seed(self) -> int:
        value = self.get("seed")
        if value is None:
            raise EventBookError("a --seed is mandatory for stochastic commands")
        return int(value)

    def hash(self) -> str:
        return jsonio.config_hash(self.resolved)


def _require_file(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise EventBookError(f"input file {p} does not exist")
    return p


def _emit(doc: dict, out: str | None) -> None:
    if out:
        jsonio.dump(doc, out)
    else:
        sys.stdout.write(jsonio.dumps_canonical(doc))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(ns: argparse.Namespace, config: dict) -> int:
    r = _Resolver(ns, config)
    log_path = _require_file(r.get("log", required=True))
    tick = Tick.parse(str(r.get("tick", required=True)))
    max_rate = float(r.get("max_violation_rate", 0.01))
    xy_out = r.get("xy_out", str(log_path.with_suffix(".xy.json")))
    report_out = r.get("report_out", str(log_path.with_suffix(".report.json")))
    figures = r.get("figures")

    events = ingest.parse_log(log_path, ingest.LogFormat(tick))
    xs, report = ingest.extract_xy(events)
    state = ingest.initial_state(events[0], tick)
    ingest.write_xy_file(xy_out, xs, state, extra={"source": str(log_path)})
    doc = report.to_dict()
    doc.update({"source": str(log_path), "tick": str(tick.delta), "config_hash": r.hash()})
    jsonio.dump(doc, report_out)
    if figures:
        plots.spread_histogram(report, figures)
    print(
        f"{len(events)} events -> {len(xs)} xy events; "
        f"violation rate {report.a2_violation_rate:.4%}; wrote {xy_out}, {report_out}"
    )
    if report.a2_violation_rate > max_rate:
        print(
            f"one-tick violation rate {report.a2_violation_rate:.4%} exceeds "
            f"threshold {max_rate:.4%}",
            file=sys.stderr,
        )
        return 2
    return 0


def cmd_calibrate(ns: argparse.Namespace, config: dict) -> int:
    r = _Resolver(ns, config)
    xy_path = _require_file(r.get("xy", required=True))
    model_out = r.get("model_out", str(xy_path.with_suffix(".model.json")))
    basis_names = str(r.get("basis", "identity")).split(",")
    lag_order = int(r.get("lag_order", 1))
    ridge = float(r.get("ridge", 0.0))
    residual = str(r.get("residual", "empirical"))
    method = str(r.get("method", "levinson"))
    split = float(r.get("split", 1.0))
    kind = str(r.get("kind", "semilinear"))

    xs, state = ingest.read_xy_file(xy_path)
    k = int(len(xs) * split) if split < 1.0 else len(xs)
    train = xs[:k]
    if kind == "iid":
        model = models.fit_iid(train, initial_state=state)
    else:
        basis = BasisSpec.parse([b.strip() for b in basis_names], lag_order)
        ridge_used = ridge
        model = None
        for delta in (ridge,) + tuple(d for d in calib.RIDGE_LADDER if d > ridge):
            try:
                model = models.fit(
                    train, basis, ridge=delta, residual_kind=residual,
                    method=method, initial_state=state,
                )
                ridge_used = delta
                break
            except models.SingularDesign:
                continue
        if model is None:
            raise EventBookError(
                f"design stayed singular up to ridge {calib.RIDGE_LADDER[-1]}"
            )
        model.meta["ridge_requested"] = ridge
        model.meta["ridge"] = ridge_used
    model.meta.update({"split": split, "train_events": len(train), "config_hash": r.hash()})
    models.save_model(model, model_out)
    rep = model.stability
    print(
        f"fitted {kind} model on {len(train)} events -> {model_out}; "
        f"verdict {rep.verdict} (radius {rep.spectral_radius:.3f}, "
        f"margin {rep.lipschitz_margin:.3f})"
    )
    return 0


def _initial_state_from_flags(r: _Resolver) -> tuple[BookState, LagBuffer | None]:
    init_from = r.get("init_from")
    if init_from:
        xs, state = ingest.read_xy_file(_require_file(init_from))
        return state, xs
    tick = Tick.parse(str(r.get("tick", "0.01")))
    q_b = int(r.get("qb", required=True))
    q_a = int(r.get("qa", required=True))
    spread = int(r.get("spread", 1))
    price = str(r.get("price", "100.00"))
    s_b = tick.to_ticks(Decimal(price))
    return BookState(s_b=s_b, s_a=s_b + spread, q_b=q_b, q_a=q_a, tick=tick), None


def cmd_simulate(ns: argparse.Namespace, config: dict) -> int:
    r = _Resolver(ns, config)
    model = models.load_model(_require_file(r.get("model", required=True)))
    n_events = int(r.get("events", 1000))
    seed = r.seed()
    out = r.get("out", "trajectory.csv")
    figures = r.get("figures")

    state, prior = _initial_state_from_flags(r)
    history = None
    if model.lag_order > 0:
        if prior:
            history = LagBuffer.from_events(prior, model.lag_order)
        if history is None or not history.ready():
            history = LagBuffer.zeros(model.lag_order)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    xs = models.simulate_events(model, state, n_events, rng, history)
    transitions = reconstruct_stream(state, xs)

    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ingest.CSV_HEADER + ["kind"])
        tick = state.tick
        for i, tr in enumerate(transitions):
            s = tr.state_after
            writer.writerow(
                [
                    i,
                    (Side.ASK if xs[i].y > 0 else Side.BID).value,
                    tick.to_price(s.s_b),
                    tick.to_price(s.s_a),
                    s.q_b,
                    s.q_a,
                    tr.kind.value,
                ]
            )
    if figures:
        plots.trajectory([state] + [tr.state_after for tr in transitions], figures)
    moves = sum(1 for tr in transitions if tr.kind.value != "NoMove")
    print(f"simulated {n_events} events ({moves} price moves) -> {out}")
    return 0


def cmd_predict(ns: argparse.Namespace, config: dict) -> int:
    r = _Resolver(ns, config)
    model = models.load_model(_require_file(r.get("model", required=True)))
    seed = r.seed()
    n_paths = int(r.get("paths", 20_000))
    horizon = int(r.get("horizon", 2_000))
    q_b = int(r.get("qb", required=True))
    q_a = int(r.get("qa", required=True))
    spread = int(r.get("spread", 1))
    tick = Tick.parse(str(r.get("tick", "0.01")))
    out = r.get("out")
    figures = r.get("figures")
    history_path = r.get("history")
    want_qstar = bool(r.get("qstar", False))

    state = BookState(s_b=10_000, s_a=10_000 + spread, q_b=q_b, q_a=q_a, tick=tick)
    history = None
    history_note = "none"
    if model.lag_order > 0:
        if history_path:
            xs, _ = ingest.read_xy_file(_require_file(history_path))
            history = LagBuffer.from_events(xs, model.lag_order)
            history_note = str(history_path)
        if history is None or not history.ready():
            history = LagBuffer.zeros(model.lag_order)
            history_note = "zero-filled"

    mc = passage.MCParams(n_paths=n_paths, horizon=horizon, seed=seed)
    if want_qstar:
        q_star = passage.critical_queue(state, model, history, q_b, mc)
        doc = {
            "schema": passage.PREDICT_SCHEMA,
            "q_star": q_star,
            "q_b": q_b,
            "q_a": q_a,
            "predicts_up": q_a < q_star,
            "n_paths": n_paths,
            "horizon": horizon,
            "seed": seed,
            "history": history_note,
            "config_hash": r.hash(),
        }
        if figures:
            hi = max(2 * q_star, q_a + 1, 8)
            grid = sorted(set(np.linspace(1, hi, num=min(hi, 40), dtype=int).tolist()))
            ups, downs = passage.passage_curve(state, model, history, grid, mc)
            plots.passage_curve(grid, ups, downs, q_star, figures)
    else:
        est = passage.estimate_p(
            state, model, history, n_paths=n_paths, horizon=horizon, seed=seed
        )
        doc = est.to_dict()
        doc.update(
            {
                "q_b": q_b,
                "q_a": q_a,
                "seed": seed,
                "history": history_note,
                "config_hash": r.hash(),
            }
        )
    _emit(doc, out)
    return 0


def cmd_diagnose(ns: argparse.Namespace, config: dict) -> int:
    r = _Resolver(ns, config)
    model = models.load_model(_require_file(r.get("model", required=True)))
    report = models.diagnose(model)
    doc = report.to_dict()
    doc.update({"schema": "eventbook-stability-v1", "kind": model.kind, "config_hash": r.hash()})
    _emit(doc, r.get("out"))
    return 0


def cmd_evaluate(ns: argparse.Namespace, config: dict) -> int:
    r = _Resolver(ns, config)
    xy_path = _require_file(r.get("xy", required=True))
    model = models.load_model(_require_file(r.get("model", required=True)))
    seed = r.seed()
    split = float(r.get("split", 0.5))
    n_paths = int(r.get("paths", 128))
    horizon = int(r.get("horizon", 512))
    max_moves = int(r.get("max_moves", 400))
    out = r.get("out", "metrics.json")
    figures = r.get("figures")

    xs, state = ingest.read_xy_file(xy_path)
    metrics = run_evaluate(
        xs,
        state,
        model,
        split=split,
        n_paths=n_paths,
        horizon=horizon,
        seed=seed,
        max_move_evals=max_moves,
    )
    metrics.update({"seed": seed, "source": str(xy_path), "config_hash": r.hash()})
    jsonio.dump(metrics, out)
    if figures:
        plots.evaluation(metrics, figures)
    d = metrics["direction"]
    f = metrics["flow"]
    print(
        f"direction hit rate {d['hit_rate']:.3f} "
        f"(larger-queue {d['naive_larger_queue_hit_rate']:.3f}, coin 0.5); "
        f"flow MSE lift {f['mse_lift']:.3f} -> {out}"
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Event-time reduced-form order book: extraction, calibration, prediction.",
    )
    parser.add_argument("--seed", type=int, default=None, help="rng seed (mandatory for stochastic commands)")
    parser.add_argument("--config", default=None, help="TOML or JSON file with defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an event-log CSV into an (x, y) stream + report")
    p.add_argument("log", help="event-log CSV file")
    p.add_argument("--tick", default=None, help="price grid increment, e.g. 0.01")
    p.add_argument("--xy-out", dest="xy_out", default=None)
    p.add_argument("--report-out", dest="report_out", default=None)
    p.add_argument("--max-violation-rate", dest="max_violation_rate", type=float, default=None)
    p.add_argument("--figures", default=None, help="directory for rendered figures")

    p = sub.add_parser("calibrate", help="fit an (x, y) model from an xy file")
    p.add_argument("--xy", default=None, help="xy JSON file from ingest")
    p.add_argument("--model-out", dest="model_out", default=None)
    p.add_argument("--kind", choices=["semilinear", "iid"], default=None)
    p.add_argument("--basis", default=None, help="comma list: identity,sign,abs,clip:<c>,tanh:<s>")
    p.add_argument("--lag-order", dest="lag_order", type=int, default=None)
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--residual", choices=["empirical", "gaussian"], default=None)
    p.add_argument("--method", choices=["levinson", "dense"], default=None)
    p.add_argument("--split", type=float, default=None, help="training fraction (rest held out)")

    p = sub.add_parser("simulate", help="simulate a trajectory from a fitted model")
    p.add_argument("--model", default=None)
    p.add_argument("--events", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--init-from", dest="init_from", default=None, help="xy JSON supplying state and history")
    p.add_argument("--qb", type=int, default=None)
    p.add_argument("--qa", type=int, default=None)
    p.add_argument("--spread", type=int, default=None)
    p.add_argument("--price", default=None)
    p.add_argument("--tick", default=None)
    p.add_argument("--figures", default=None)

    p = sub.add_parser("predict", help="Monte Carlo next-price-move probabilities")
    p.add_argument("--model", default=None)
    p.add_argument("--qb", type=int, default=None)
    p.add_argument("--qa", type=int, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--spread", type=int, default=None)
    p.add_argument("--tick", default=None)
    p.add_argument("--history", default=None, help="xy JSON supplying the lag history")
    p.add_argument("--qstar", action="store_true", default=None, help="search the critical queue size")
    p.add_argument("--out", default=None)
    p.add_argument("--figures", default=None)

    p = sub.add_parser("diagnose", help="stationarity/ergodicity report for a model")
    p.add_argument("--model", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("evaluate", help="walk-forward predictability metrics")
    p.add_argument("--xy", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--split", type=float, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--max-moves", dest="max_moves", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--figures", default=None)
    return parser


_HANDLERS = {
    "ingest": cmd_ingest,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "predict": cmd_predict,
    "diagnose": cmd_diagnose,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        config = _load_config(ns.config)
        return _HANDLERS[ns.command](ns, config)
    except EventBookError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
