"""Conditional generators for the (X, Y) event stream.

Three families share one interface: an IID bootstrap baseline, a linear
vector autoregression, and a semi-linear regression where lagged (x, y)
pairs pass through nonlinear scalar basis maps before the linear
coefficients.  High-frequency order flow is strongly autocorrelated, so
the lagged regression is the workhorse; the bootstrap exists as the
no-memory control.

Only the signed event size x (and the event side) needs a stochastic
model.  The post-event queue y is redundant given the book except at
price-moving events, so y is produced by a link rule: the updated queue
while the price stands still, the order's own size on a narrowing, and a
draw from the fitted re-initialization table on a widening.  Generated
events are therefore always consistent with the reconstruction case
analysis by construction.

Fitting goes through the block-Toeplitz normal equations of ``calib``;
stationarity diagnostics report a contraction certificate (iterated
random maps) and the spectral radius of the linearized companion matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import calib, jsonio
from .core import BookState, EventBookError, XYEvent
from .reconstruct import TransitionKind, reconstruct_stream

MODEL_SCHEMA = "eventbook-xy-model-v1"

# Transition codes used by the vectorized simulator.
K_NOMOVE, K_WIDEN_UP, K_WIDEN_DOWN, K_NARROW_ASK, K_NARROW_BID = range(5)
KIND_BY_CODE = {
    K_NOMOVE: TransitionKind.NO_MOVE,
    K_WIDEN_UP: TransitionKind.WIDEN_UP,
    K_WIDEN_DOWN: TransitionKind.WIDEN_DOWN,
    K_NARROW_ASK: TransitionKind.NARROW_ASK,
    K_NARROW_BID: TransitionKind.NARROW_BID,
}


class ModelNotFitted(EventBookError):
    """Model is missing pieces required for simulation."""


class InsufficientHistory(EventBookError):
    """Lag buffer holds fewer events than the model's lag order."""


class SingularDesign(EventBookError):
    """Normal equations are rank deficient; raise the ridge."""


# ---------------------------------------------------------------------------
# Basis functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisFunction:
    """Scalar map applied coordinatewise to lagged (x, y) values.

    ``lipschitz`` is None for maps that are bounded but not usable in a
    contraction certificate (sign); ``slope0`` is the map's linear part at
    the origin, used for the linearized companion matrix.
    """

    name: str
    lipschitz: float | None
    slope0: float

    def apply(self, v: np.ndarray) -> np.ndarray:
        kind, _, param = self.name.partition(":")
        if kind == "identity":
            return v
        if kind == "sign":
            return np.sign(v)
        if kind == "abs":
            return np.abs(v)
        if kind == "clip":
            c = float(param)
            return np.clip(v, -c, c)
        if kind == "tanh":
            s = float(param)
            return s * np.tanh(v)
        raise ValueError(f"unknown basis function {self.name!r}")


def make_basis_function(name: str) -> BasisFunction:
    """Parse a basis name: identity, sign, abs, clip:<c>, tanh:<s>."""
    kind, _, param = name.partition(":")
    if kind == "identity":
        return BasisFunction("identity", 1.0, 1.0)
    if kind == "sign":
        return BasisFunction("sign", None, 0.0)
    if kind == "abs":
        return BasisFunction("abs", 1.0, 0.0)
    if kind == "clip":
        c = float(param)
        if c <= 0:
            raise ValueError("clip bound must be positive")
        return BasisFunction(f"clip:{c:g}", 1.0, 1.0)
    if kind == "tanh":
        s = float(param)
        if s <= 0:
            raise ValueError("tanh scale must be positive")
        return BasisFunction(f"tanh:{s:g}", s, s)
    raise ValueError(f"unknown basis function {name!r}")


@dataclass(frozen=True)
class BasisSpec:
    """Ordered basis maps plus the lag order p."""

    functions: tuple[BasisFunction, ...]
    lag_order: int

    def __post_init__(self):
        if self.lag_order < 1:
            raise ValueError("lag_order must be >= 1")
        if not self.functions:
            raise ValueError("at least one basis function required")

    @classmethod
    def parse(cls, names: Sequence[str], lag_order: int) -> "BasisSpec":
        return cls(tuple(make_basis_function(n) for n in names), lag_order)

    @property
    def block_dim(self) -> int:
        """Features contributed per lag: 2 coordinates per function."""
        return 2 * len(self.functions)

    @property
    def feature_dim(self) -> int:
        return self.lag_order * self.block_dim

    def names(self) -> list[str]:
        return [f.name for f in self.functions]

    def expand_block(self, z: np.ndarray) -> np.ndarray:
        """Apply every map to (..., 2) values -> (..., 2*m) features."""
        cols = [f.apply(z) for f in self.functions]
        return np.stack(cols, axis=-2).reshape(*z.shape[:-1], self.block_dim)

    def expand_lags(self, lags: np.ndarray) -> np.ndarray:
        """(n, p, 2) lag stack (most recent first) -> (n, p*2m) features."""
        n = lags.shape[0]
        return self.expand_block(lags).reshape(n, self.feature_dim)


# ---------------------------------------------------------------------------
# Model components
# ---------------------------------------------------------------------------

@dataclass
class ResidualLaw:
    """Innovation law for the regression: empirical resampler or Gaussian."""

    kind: str  # "empirical" | "gaussian"
    samples: np.ndarray | None = None  # (n, 2)
    cov: np.ndarray | None = None      # (2, 2)

    def __post_init__(self):
        if self.kind == "empirical":
            if self.samples is None or len(self.samples) == 0:
                raise ValueError("empirical residual law needs samples")
            self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 2)
        elif self.kind == "gaussian":
            if self.cov is None:
                raise ValueError("gaussian residual law needs a covariance")
            self.cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        else:
            raise ValueError(f"unknown residual law {self.kind!r}")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "empirical":
            idx = rng.integers(0, len(self.samples), size=n)
            return self.samples[idx]
        sym = (self.cov + self.cov.T) / 2.0
        w, v = np.linalg.eigh(sym)
        root = v @ np.diag(np.sqrt(np.maximum(w, 0.0)))
        return rng.standard_normal((n, 2)) @ root.T


@dataclass
class SideModel:
    """Logistic model for the event side (ask vs bid) on the lag features."""

    weights: np.ndarray
    bias: float

    def prob_ask(self, features: np.ndarray) -> np.ndarray:
        z = features @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


@dataclass
class YLink:
    """Rule closing y from the book state and generated x.

    While the price stands still y is the updated queue; on a narrowing
    y equals x (the order becomes the new queue); on a widening the
    re-initialized queue is drawn from the per-side empirical table
    (``fallback`` covers sides never seen widening in the training data).
    Narrowing itself fires with the fitted per-side probability whenever
    the spread leaves room.
    """

    widen_ask: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    widen_bid: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    fallback: np.ndarray = field(default_factory=lambda: np.array([1], dtype=np.int64))
    narrow_prob_ask: float = 0.0
    narrow_prob_bid: float = 0.0

    def __post_init__(self):
        self.widen_ask = np.asarray(self.widen_ask, dtype=np.int64)
        self.widen_bid = np.asarray(self.widen_bid, dtype=np.int64)
        self.fallback = np.asarray(self.fallback, dtype=np.int64)
        if len(self.fallback) == 0:
            raise ValueError("fallback table must be nonempty")

    def table(self, ask: bool) -> np.ndarray:
        t = self.widen_ask if ask else self.widen_bid
        return t if len(t) else self.fallback


@dataclass
class StabilityReport:
    """Stationarity/ergodicity diagnostics for a fitted model.

    ``lipschitz_margin`` is the mean-contraction certificate for the
    iterated random map (sum over lags of the coefficient block spectral
    norm times the basis Lipschitz constant); below one the model is
    certified contractive.  ``spectral_radius`` is the weaker linearized
    companion-matrix check.  Both are sufficient conditions only.
    """

    spectral_radius: float
    lipschitz_margin: float
    verdict: str  # ContractiveCertified | LinearStable | Uncertified
    note: str = ""

    def to_dict(self) -> dict:
        # strict JSON has no Infinity; a voided certificate serializes as null
        margin = self.lipschitz_margin if math.isfinite(self.lipschitz_margin) else None
        return {
            "spectral_radius": self.spectral_radius,
            "lipschitz_margin": margin,
            "verdict": self.verdict,
            "note": self.note,
        }


class LagBuffer:
    """Most-recent-first window of the last p events, as conditioning state."""

    def __init__(self, lag_order: int, events: Iterable[XYEvent] = ()):
        self.lag_order = lag_order
        self._buf: list[tuple[float, float]] = []
        for ev in events:
            self.push(ev)

    @classmethod
    def from_events(cls, events: Sequence[XYEvent], lag_order: int) -> "LagBuffer":
        return cls(lag_order, events[-lag_order:] if lag_order else [])

    @classmethod
    def zeros(cls, lag_order: int) -> "LagBuffer":
        buf = cls(lag_order)
        buf._buf = [(0.0, 0.0)] * lag_order
        return buf

    def push(self, ev: XYEvent) -> None:
        self._buf.append((float(ev.x), float(ev.y)))
        if len(self._buf) > self.lag_order:
            self._buf = self._buf[-self.lag_order :]

    @property
    def count(self) -> int:
        return len(self._buf)

    def ready(self) -> bool:
        return len(self._buf) >= self.lag_order

    def as_array(self) -> np.ndarray:
        """(p, 2) array, row 0 = most recent event."""
        if not self.ready():
            raise InsufficientHistory(
                f"need {self.lag_order} lagged events, have {len(self._buf)}"
            )
        return np.array(self._buf[::-1], dtype=float)


# ---------------------------------------------------------------------------
# The model
# ---------------------------------------------------------------------------

@dataclass
class XYModel:
    """Fitted conditional generator for (x, y) events.

    kind "iid" resamples (x, side) pairs with no memory; kind
    "semilinear" draws x from the lagged basis regression plus the
    residual law and the side from the logistic side model.  Both close y
    through the same YLink rule.
    """

    kind: str
    y_link: YLink
    basis: BasisSpec | None = None
    intercept: np.ndarray | None = None
    coeffs: list[np.ndarray] = field(default_factory=list)
    residual: ResidualLaw | None = None
    side_model: SideModel | None = None
    iid_samples: np.ndarray | None = None  # (n, 2): signed x, side (+1 ask / -1 bid)
    stability: StabilityReport | None = None
    meta: dict = field(default_factory=dict)

    @property
    def lag_order(self) -> int:
        return self.basis.lag_order if self.basis is not None else 0

    def validate(self) -> None:
        if self.kind == "iid":
            if self.iid_samples is None or len(self.iid_samples) == 0:
                raise ModelNotFitted("iid model has no samples")
            if np.any(self.iid_samples[:, 0] == 0):
                raise ModelNotFitted("iid samples contain x = 0 (not an event)")
            return
        if self.kind == "semilinear":
            if self.basis is None or self.intercept is None or not self.coeffs:
                raise ModelNotFitted("semilinear model is missing basis or coefficients")
            if self.residual is None or self.side_model is None:
                raise ModelNotFitted("semilinear model is missing residual or side model")
            d = self.basis.block_dim
            if len(self.coeffs) != self.basis.lag_order or any(
                a.shape != (2, d) for a in self.coeffs
            ):
                raise ModelNotFitted("coefficient blocks do not match the basis")
            return
        raise ModelNotFitted(f"unknown model kind {self.kind!r}")

    @property
    def coeff_matrix(self) -> np.ndarray:
        """(2, p*d) concatenation of A_1..A_p."""
        return np.concatenate(self.coeffs, axis=1)


def _round_away(v: np.ndarray) -> np.ndarray:
    """Round to the integer size grid, away from zero, magnitude >= 1."""
    pos = np.floor(v + 0.5)
    neg = np.ceil(v - 0.5)
    out = np.where(v >= 0, np.maximum(pos, 1.0), np.minimum(neg, -1.0))
    return out.astype(np.int64)


class BatchSimulator:
    """Vectorized simulator advancing n independent (x, y) paths.

    Each path carries its own lag window and a virtual book (queues plus
    spread).  Per step, the full-width random draws happen in a fixed
    order regardless of any masking, so the stream consumed from ``rng``
    depends only on the step index; downstream consumers may stop reading
    paths early without perturbing the others.
    """

    def __init__(self, model: XYModel, n_paths: int, state: BookState, history: LagBuffer | None):
        model.validate()
        self.model = model
        self.n = n_paths
        p = model.lag_order
        if p > 0:
            if history is None:
                raise InsufficientHistory(f"model needs {p} lagged events")
            base = history.as_array()  # raises if not ready
            self.lag = np.broadcast_to(base, (n_paths, p, 2)).copy()
        else:
            self.lag = np.zeros((n_paths, 0, 2))
        self.q_b = np.full(n_paths, state.q_b, dtype=np.int64)
        self.q_a = np.full(n_paths, state.q_a, dtype=np.int64)
        self.spread = np.full(n_paths, state.spread_ticks, dtype=np.int64)

    def step(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Advance every path one event; returns (x, y, kind_code) arrays."""
        m = self.model
        n = self.n
        if m.kind == "iid":
            idx = rng.integers(0, len(m.iid_samples), size=n)
            x = m.iid_samples[idx, 0].astype(np.int64)
            ask = m.iid_samples[idx, 1] > 0
        else:
            feats = m.basis.expand_lags(self.lag)
            p_ask = m.side_model.prob_ask(feats)
            ask = rng.random(n) < p_ask
            pred = feats @ m.coeff_matrix.T + m.intercept
            eps = m.residual.draw(rng, n)
            x = _round_away(pred[:, 0] + eps[:, 0])

        u_narrow = rng.random(n)
        u_widen = rng.random(n)

        link = m.y_link
        q_own = np.where(ask, self.q_a, self.q_b)
        flow_own = np.where(ask, x, -x)  # signed change of the touched queue
        deplete = q_own + flow_own <= 0
        p_narrow = np.where(ask, link.narrow_prob_ask, link.narrow_prob_bid)
        narrow = (~deplete) & (self.spread >= 2) & (flow_own > 0) & (u_narrow < p_narrow)

        tab_a, tab_b = link.table(True), link.table(False)
        widen_size = np.where(
            ask,
            tab_a[(u_widen * len(tab_a)).astype(np.int64).clip(0, len(tab_a) - 1)],
            tab_b[(u_widen * len(tab_b)).astype(np.int64).clip(0, len(tab_b) - 1)],
        )

        new_q = np.where(deplete, widen_size, np.where(narrow, flow_own, q_own + flow_own))
        y = np.where(ask, new_q, -new_q)

        kind = np.zeros(n, dtype=np.int8)
        kind[deplete & ask] = K_WIDEN_UP
        kind[deplete & ~ask] = K_WIDEN_DOWN
        kind[narrow & ask] = K_NARROW_ASK
        kind[narrow & ~ask] = K_NARROW_BID

        self.q_a = np.where(ask, new_q, self.q_a)
        self.q_b = np.where(ask, self.q_b, new_q)
        self.spread = self.spread + deplete.astype(np.int64) - narrow.astype(np.int64)
        if m.lag_order > 0:
            self.lag = np.roll(self.lag, 1, axis=1)
            self.lag[:, 0, 0] = x
            self.lag[:, 0, 1] = y
        return x, y, kind


def simulate_next(
    model: XYModel, history: LagBuffer | None, state: BookState, rng: np.random.Generator
) -> XYEvent:
    """Draw the next event conditioned on the lag buffer and book state.

    The emitted event never violates the reconstruction preconditions: y
    is closed from the book by the link rule, so feeding the event to
    ``reconstruct.step`` always succeeds.
    """
    sim = BatchSimulator(model, 1, state, history)
    x, y, _ = sim.step(rng)
    return XYEvent(x=int(x[0]), y=int(y[0]))


def simulate_events(
    model: XYModel,
    state: BookState,
    n_events: int,
    rng: np.random.Generator,
    history: LagBuffer | None = None,
) -> list[XYEvent]:
    """Simulate a stream of n events forward from ``state``."""
    model.validate()
    if history is None and model.lag_order > 0:
        history = LagBuffer.zeros(model.lag_order)
    sim = BatchSimulator(model, 1, state, history)
    out = []
    for _ in range(n_events):
        x, y, _ = sim.step(rng)
        out.append(XYEvent(x=int(x[0]), y=int(y[0])))
    return out


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _lag_design(z: np.ndarray, p: int) -> np.ndarray:
    """(n-p, p, 2) lag stacks, most recent first, aligned with targets z[p:]."""
    n = len(z)
    return np.stack([z[p - 1 - i : n - 1 - i] for i in range(p)], axis=1)


def _fit_side_model(features: np.ndarray, ask: np.ndarray, ridge: float = 1e-6) -> SideModel:
    """Logistic regression by IRLS with a small ridge for stability."""
    n, dim = features.shape
    X = np.concatenate([features, np.ones((n, 1))], axis=1)
    w = np.zeros(dim + 1)
    t = ask.astype(float)
    for _ in range(25):
        z = np.clip(X @ w, -35.0, 35.0)
        mu = 1.0 / (1.0 + np.exp(-z))
        s = np.maximum(mu * (1.0 - mu), 1e-9)
        H = (X * s[:, None]).T @ X
        H[np.diag_indices(dim + 1)] += ridge * n
        g = X.T @ (t - mu) - ridge * n * w
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        w = w + step
        if np.linalg.norm(step) < 1e-10 * max(1.0, np.linalg.norm(w)):
            break
    return SideModel(weights=w[:dim], bias=float(w[dim]))


def _fit_y_link(
    xs: Sequence[XYEvent], initial_state: BookState | None
) -> YLink:
    """Widen re-init tables and narrow probabilities from the training stream.

    With an initial state the stream is replayed so every price-moving
    event is labeled exactly; otherwise only the signature-detectable
    narrowing statistics are available and widening falls back to the
    unconditional |y| table.
    """
    abs_y = np.array([abs(ev.y) for ev in xs], dtype=np.int64)
    fallback = abs_y if len(abs_y) else np.array([1], dtype=np.int64)
    widen_ask: list[int] = []
    widen_bid: list[int] = []
    narrow_counts = {True: 0, False: 0}
    eligible = {True: 0, False: 0}
    if initial_state is not None:
        transitions = reconstruct_stream(initial_state, xs)
        spread_before = initial_state.spread_ticks
        for ev, tr in zip(xs, transitions):
            ask = ev.y > 0
            if spread_before >= 2:
                eligible[ask] += 1
                if tr.kind in (TransitionKind.NARROW_ASK, TransitionKind.NARROW_BID):
                    narrow_counts[ask] += 1
            if tr.kind is TransitionKind.WIDEN_UP:
                widen_ask.append(abs(ev.y))
            elif tr.kind is TransitionKind.WIDEN_DOWN:
                widen_bid.append(abs(ev.y))
            spread_before = tr.state_after.spread_ticks
    return YLink(
        widen_ask=np.array(widen_ask, dtype=np.int64),
        widen_bid=np.array(widen_bid, dtype=np.int64),
        fallback=fallback,
        narrow_prob_ask=narrow_counts[True] / eligible[True] if eligible[True] else 0.0,
        narrow_prob_bid=narrow_counts[False] / eligible[False] if eligible[False] else 0.0,
    )


def fit(
    data: Sequence[XYEvent],
    basis: BasisSpec,
    ridge: float = 0.0,
    residual_kind: str = "empirical",
    method: str = "levinson",
    initial_state: BookState | None = None,
) -> XYModel:
    """Fit the semi-linear regression by block-Toeplitz least squares.

    The Gram matrix of the lagged basis features is block Toeplitz by lag
    stationarity, so the normal equations go through the block Levinson
    solver (or the dense oracle with method="dense").  Raises
    SingularDesign when the system is rank deficient at the given ridge.
    """
    p = basis.lag_order
    d = basis.block_dim
    z = np.array([(ev.x, ev.y) for ev in data], dtype=float)
    n = len(z)
    if n < max(2 * (p * d) + 2, p + 2):
        raise calib.InsufficientData(
            f"need at least {max(2 * (p * d) + 2, p + 2)} events for p={p}, d={d}; got {n}"
        )

    features = basis.expand_block(z)  # (n, d) feature series
    try:
        system, f_mean, z_mean = calib.build_normal_system(z, features, p, ridge)
        blocks, intercept = calib.solve_normal_equations(
            system, method=method, feature_mean=f_mean, target_mean=z_mean
        )
    except calib.NotPositiveDefinite as exc:
        raise SingularDesign(
            f"normal equations not positive definite at ridge={ridge} "
            f"(step {exc.step}); raise the ridge"
        ) from exc
    # blocks from solve_normal_equations are (2, d) per lag already
    coeffs = [np.asarray(b) for b in blocks]

    lagged = _lag_design(z, p)
    phi = basis.expand_lags(lagged)
    W = np.concatenate(coeffs, axis=1)
    pred = phi @ W.T + intercept
    resid = z[p:] - pred

    if residual_kind == "gaussian":
        residual = ResidualLaw(kind="gaussian", cov=np.cov(resid.T, bias=True).reshape(2, 2))
    else:
        residual = ResidualLaw(kind="empirical", samples=resid)

    side = _fit_side_model(phi, z[p:, 1] > 0)
    y_link = _fit_y_link(data, initial_state)

    model = XYModel(
        kind="semilinear",
        basis=basis,
        intercept=np.asarray(intercept, dtype=float),
        coeffs=coeffs,
        residual=residual,
        side_model=side,
        y_link=y_link,
        meta={"n_events": n, "ridge": ridge, "method": method},
    )
    model.stability = diagnose(model)
    return model


def fit_iid(data: Sequence[XYEvent], initial_state: BookState | None = None) -> XYModel:
    """No-memory bootstrap baseline resampling observed (x, side) pairs."""
    if not data:
        raise calib.InsufficientData("need at least one event")
    samples = np.array([(ev.x, 1 if ev.y > 0 else -1) for ev in data], dtype=np.int64)
    model = XYModel(
        kind="iid",
        y_link=_fit_y_link(data, initial_state),
        iid_samples=samples,
        meta={"n_events": len(data)},
    )
    model.stability = diagnose(model)
    return model


def iid_model_from_samples(
    samples: Sequence[tuple[int, int]], y_link: YLink | None = None
) -> XYModel:
    """Construct an IID model from explicit (x, side) pairs (side: +1 ask, -1 bid)."""
    arr = np.asarray(samples, dtype=np.int64).reshape(-1, 2)
    if y_link is None:
        y_link = YLink(fallback=np.unique(np.abs(arr[:, 0])))
    model = XYModel(kind="iid", y_link=y_link, iid_samples=arr)
    model.stability = diagnose(model)
    return model


def symmetric_iid_model() -> XYModel:
    """Unit-size fair-coin baseline: side fair, x = +/-1 equiprobable."""
    return iid_model_from_samples([(1, 1), (-1, 1), (1, -1), (-1, -1)])


def conditional_mean_x(model: XYModel, z: np.ndarray) -> np.ndarray:
    """One-step conditional mean of x for every target in a series.

    ``z`` is the (n, 2) event array; the return aligns with targets
    z[p:] (for the iid baseline, p = 0 and the unconditional sample mean
    is broadcast).  No Monte Carlo: this is the regression predictor plus
    the mean innovation, used for flow-prediction scoring.
    """
    model.validate()
    z = np.asarray(z, dtype=float)
    if model.kind == "iid":
        return np.full(len(z), float(model.iid_samples[:, 0].mean()))
    p = model.lag_order
    if len(z) <= p:
        return np.empty(0)
    phi = model.basis.expand_lags(_lag_design(z, p))
    pred = phi @ model.coeff_matrix.T + model.intercept
    eps_mean = (
        model.residual.samples.mean(axis=0)
        if model.residual.kind == "empirical"
        else np.zeros(2)
    )
    return pred[:, 0] + eps_mean[0]


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def diagnose(model: XYModel) -> StabilityReport:
    """Contraction certificate and linearized spectral radius.

    The margin sums ||A_i||_2 times the joint Lipschitz constant of the
    stacked basis (sqrt of the summed squared per-map constants); a sign
    map voids the certificate because it is bounded but not Lipschitz at
    the origin.  The spectral radius comes from the companion matrix of
    the linear part, each map contributing its slope at zero.
    """
    if model.kind == "iid" or not model.coeffs:
        return StabilityReport(
            spectral_radius=0.0,
            lipschitz_margin=0.0,
            verdict="ContractiveCertified",
            note="memoryless generator",
        )
    basis = model.basis
    p = basis.lag_order
    slopes = np.array([f.slope0 for f in basis.functions])

    linear_blocks = []
    for a in model.coeffs:
        L = np.zeros((2, 2))
        for k, s in enumerate(slopes):
            L += s * a[:, 2 * k : 2 * k + 2]
        linear_blocks.append(L)
    companion = np.zeros((2 * p, 2 * p))
    for i, L in enumerate(linear_blocks):
        companion[0:2, 2 * i : 2 * i + 2] = L
    if p > 1:
        companion[2:, :-2] = np.eye(2 * (p - 1))
    radius = float(np.max(np.abs(np.linalg.eigvals(companion))))

    has_sign = any(f.lipschitz is None for f in basis.functions)
    if has_sign:
        margin = math.inf
    else:
        lip = math.sqrt(sum(f.lipschitz**2 for f in basis.functions))
        margin = float(sum(np.linalg.norm(a, 2) for a in model.coeffs) * lip)

    if has_sign:
        verdict, note = "Uncertified", (
            "sign basis is bounded but not Lipschitz-certifiable; "
            "no contraction certificate available"
        )
    elif margin < 1.0:
        verdict, note = "ContractiveCertified", "mean-contraction condition holds"
    elif radius < 1.0:
        verdict, note = "LinearStable", (
            "linearized system is stable but the Lipschitz margin is not below one"
        )
    else:
        verdict, note = "Uncertified", "no sufficient stability condition holds"
    return StabilityReport(
        spectral_radius=radius, lipschitz_margin=margin, verdict=verdict, note=note
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: XYModel) -> dict:
    model.validate()
    doc: dict = {
        "schema": MODEL_SCHEMA,
        "kind": model.kind,
        "y_link": {
            "widen_ask": model.y_link.widen_ask.tolist(),
            "widen_bid": model.y_link.widen_bid.tolist(),
            "fallback": model.y_link.fallback.tolist(),
            "narrow_prob_ask": model.y_link.narrow_prob_ask,
            "narrow_prob_bid": model.y_link.narrow_prob_bid,
        },
        "meta": model.meta,
    }
    if model.stability is not None:
        doc["stability"] = model.stability.to_dict()
    if model.kind == "iid":
        doc["iid_samples"] = model.iid_samples.tolist()
        return doc
    doc["basis"] = {"functions": model.basis.names(), "lag_order": model.basis.lag_order}
    doc["intercept"] = model.intercept.tolist()
    doc["coeffs"] = [a.tolist() for a in model.coeffs]
    if model.residual.kind == "empirical":
        doc["residual"] = {"kind": "empirical", "samples": model.residual.samples.tolist()}
    else:
        doc["residual"] = {"kind": "gaussian", "cov": model.residual.cov.tolist()}
    doc["side_model"] = {
        "weights": model.side_model.weights.tolist(),
        "bias": model.side_model.bias,
    }
    return doc


def model_from_dict(doc: dict) -> XYModel:
    if doc.get("schema") != MODEL_SCHEMA:
        raise EventBookError(f"expected schema {MODEL_SCHEMA}, got {doc.get('schema')!r}")
    yl = doc["y_link"]
    y_link = YLink(
        widen_ask=np.array(yl["widen_ask"], dtype=np.int64),
        widen_bid=np.array(yl["widen_bid"], dtype=np.int64),
        fallback=np.array(yl["fallback"], dtype=np.int64),
        narrow_prob_ask=float(yl["narrow_prob_ask"]),
        narrow_prob_bid=float(yl["narrow_prob_bid"]),
    )
    stability = None
    if "stability" in doc:
        st = dict(doc["stability"])
        if st.get("lipschitz_margin") is None:
            st["lipschitz_margin"] = math.inf
        stability = StabilityReport(**st)
    if doc["kind"] == "iid":
        model = XYModel(
            kind="iid",
            y_link=y_link,
            iid_samples=np.array(doc["iid_samples"], dtype=np.int64),
            stability=stability,
            meta=doc.get("meta", {}),
        )
        model.validate()
        return model
    basis = BasisSpec.parse(doc["basis"]["functions"], doc["basis"]["lag_order"])
    res = doc["residual"]
    if res["kind"] == "empirical":
        residual = ResidualLaw(kind="empirical", samples=np.array(res["samples"], dtype=float))
    else:
        residual = ResidualLaw(kind="gaussian", cov=np.array(res["cov"], dtype=float))
    model = XYModel(
        kind="semilinear",
        y_link=y_link,
        basis=basis,
        intercept=np.array(doc["intercept"], dtype=float),
        coeffs=[np.array(a, dtype=float) for a in doc["coeffs"]],
        residual=residual,
        side_model=SideModel(
            weights=np.array(doc["side_model"]["weights"], dtype=float),
            bias=float(doc["side_model"]["bias"]),
        ),
        stability=stability,
        meta=doc.get("meta", {}),
    )
    model.validate()
    return model


def save_model(model: XYModel, path: str | Path) -> None:
    jsonio.dump(model_to_dict(model), path)


def load_model(path: str | Path) -> XYModel:
    return model_from_dict(jsonio.load(path))
