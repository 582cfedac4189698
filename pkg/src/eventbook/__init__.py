"""Event-time reduced-form order book modeling.

The book is reduced to the best bid/ask prices and queue sizes, indexed
by an event counter.  Under the one-tick price-move assumption the whole
dynamics collapses to the pair process (x, y) of signed event sizes and
signed post-event queues: this package extracts that pair from event
logs, reconstructs full trajectories from it, fits lagged (semi-linear)
regression models through a fast block-Toeplitz solver, and predicts
next-price-move probabilities by first-passage Monte Carlo.
"""
from .core import (
    AssumptionViolation,
    BookEvent,
    BookState,
    EventBookError,
    FlowDelta,
    Side,
    SideConflict,
    Tick,
    XYEvent,
    derive_flow,
    derive_xy,
)
from .ingest import (
    EmptyStream,
    IngestReport,
    LogFormat,
    ParseError,
    TickMismatch,
    extract_xy,
    initial_state,
    parse_log,
    read_xy_file,
    write_log,
    write_xy_file,
)
from .reconstruct import (
    InconsistentY,
    NarrowAtMinSpread,
    Transition,
    TransitionKind,
    reconstruct_stream,
    step,
)
from .passage import (
    BracketFailure,
    IndexOutOfPath,
    MCParams,
    PassageEstimate,
    StoppingIndices,
    apply_reinit,
    critical_queue,
    estimate_p,
    first_passage,
    passage_curve,
)
from .models import (
    BasisSpec,
    InsufficientHistory,
    LagBuffer,
    ModelNotFitted,
    ResidualLaw,
    SideModel,
    SingularDesign,
    StabilityReport,
    XYModel,
    YLink,
    diagnose,
    fit,
    fit_iid,
    iid_model_from_samples,
    load_model,
    save_model,
    simulate_events,
    simulate_next,
    symmetric_iid_model,
)
from .calib import (
    BlockToeplitzSystem,
    InsufficientData,
    NotPositiveDefinite,
    lag_moments,
    lagged_cross_moments,
    solve_block_levinson,
    solve_dense,
    solve_normal_equations,
)
from .evaluate import SplitTooSmall, evaluate

__version__ = "0.1.0"
