"""Block-Toeplitz least squares for lag-moment calibration.

Regressing a stationary series on its own lagged (basis-expanded) values
produces normal equations whose Gram matrix is symmetric block Toeplitz:
block (i, k) depends only on the lag difference i - k.  The block
Levinson recursion below solves such systems in O(p^2 d^3) against the
O(p^3 d^3) of a dense factorization, with a dense solver kept alongside
as the accuracy oracle.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


from .core import EventBookError

#: Escalation ladder used when a system is numerically singular.
RIDGE_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)

#: Accepted relative residual for any solve.
RESIDUAL_TOL = 1e-8


@njit(cache=True)
def _matvec_core(R, xb):  # pragma: no cover - compiled
    p, d, _ = R.shape
    q = xb.shape[2]
    y = np.zeros((p, d, q))
    for i in range(p):
        for k in range(p):
            m = i - k
            for a in range(d):
                for jj in range(d):
                    r = R[m, a, jj] if m >= 0 else R[-m, jj, a]
                    for l in range(q):
                        y[i, a, l] += r * xb[k, jj, l]
    return y


class NotPositiveDefinite(EventBookError):
    """Levinson recursion met a reflection block of norm >= 1 (step reported)."""

    def __init__(self, step: int, norm: float):
        super().__init__(
            f"system is not positive definite: reflection block norm "
            f"{norm:.6g} >= 1 at recursion step {step}"
        )
        self.step = step
        self.norm = norm


class InsufficientData(EventBookError):
    """Too few observations for the requested lag order."""


@dataclass(frozen=True)
class BlockToeplitzSystem:
    """Symmetric block-Toeplitz system T x = rhs.

    ``blocks[m]`` is the d x d cross-moment block at lag m; the system
    matrix is T[i, k] = blocks[i-k] for i >= k and blocks[k-i].T above the
    diagonal, plus ``ridge`` on the main diagonal.  ``rhs`` is a stacked
    (p*d,) vector or (p*d, q) matrix.
    """

    blocks: np.ndarray
    rhs: np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=float)
        if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2]:
            raise ValueError(f"blocks must be (p, d, d), got {blocks.shape}")
        object.__setattr__(self, "blocks", blocks)
        rhs = np.asarray(self.rhs, dtype=float)
        if rhs.shape[0] != blocks.shape[0] * blocks.shape[1]:
            raise ValueError(
                f"rhs length {rhs.shape[0]} != p*d = {blocks.shape[0] * blocks.shape[1]}"
            )
        object.__setattr__(self, "rhs", rhs)
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")

    @property
    def num_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_dim(self) -> int:
        return self.blocks.shape[1]

    def matrix(self) -> np.ndarray:
        """Materialize the dense (p*d, p*d) system matrix."""
        p, d = self.num_blocks, self.block_dim
        # Signed block table indexed by i-j+p-1, then one fancy-index gather.
        table = np.concatenate([self.blocks[:0:-1].transpose(0, 2, 1), self.blocks])
        i_idx = np.arange(p)
        T = table[i_idx[:, None] - i_idx[None, :] + p - 1]
        T = T.transpose(0, 2, 1, 3).reshape(p * d, p * d)
        if self.ridge:
            T[np.diag_indices_from(T)] += self.ridge
        return T

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """T @ x without materializing T."""
        p, d = self.num_blocks, self.block_dim
        xb = np.ascontiguousarray(x, dtype=float).reshape(p, d, -1)
        if HAVE_NUMBA:
            y = _matvec_core(self.blocks, xb)
        else:
            y = np.matmul(self.blocks[0], xb)
            for m in range(1, p):
                y[m:] += np.matmul(self.blocks[m], xb[:-m])
                y[:-m] += np.matmul(self.blocks[m].T, xb[m:])
        if self.ridge:
            y += self.ridge * xb
        return y.reshape(x.shape)


def lag_moments(features: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample cross-moment blocks R_k = (1/n) sum_j f_j f_{j-k}^T, k = 0..max_lag.

    The 1/n normalization (rather than 1/(n-k)) keeps the implied block
    Toeplitz matrix positive semi-definite.
    """
    f = np.asarray(features, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    n, d = f.shape
    if n <= max_lag:
        raise InsufficientData(f"need more than {max_lag} observations, got {n}")
    out = np.empty((max_lag + 1, d, d))
    for k in range(max_lag + 1):
        out[k] = f[k:].T @ f[: n - k] / n
    return out


def lagged_cross_moments(
    targets: np.ndarray, features: np.ndarray, max_lag: int
) -> np.ndarray:
    """C_k = (1/n) sum_j z_j f_{j-k}^T for k = 1..max_lag, shape (max_lag, q, d)."""
    z = np.asarray(targets, dtype=float)
    f = np.asarray(features, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if f.ndim == 1:
        f = f[:, None]
    n = f.shape[0]
    if n <= max_lag:
        raise InsufficientData(f"need more than {max_lag} observations, got {n}")
    out = np.empty((max_lag, z.shape[1], f.shape[1]))
    for k in range(1, max_lag + 1):
        out[k - 1] = z[k:].T @ f[: n - k] / n
    return out


def _check_residual(sys: BlockToeplitzSystem, x: np.ndarray) -> float:
    rhs_norm = np.linalg.norm(sys.rhs)
    if rhs_norm == 0.0:
        return 0.0
    rel = np.linalg.norm(sys.matvec(x) - sys.rhs) / rhs_norm
    if rel > RESIDUAL_TOL:
        raise NotPositiveDefinite(step=sys.num_blocks, norm=float(rel))
    return float(rel)


def solve_dense(sys: BlockToeplitzSystem, check_residual: bool = True) -> np.ndarray:
    """Oracle path: materialize T and solve by Cholesky."""
    T = sys.matrix()
    try:
        L = np.linalg.cholesky(T)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(step=0, norm=np.inf) from None
    rhs = sys.rhs
    one_d = rhs.ndim == 1
    b = rhs[:, None] if one_d else rhs
    x = np.linalg.solve(L.T, np.linalg.solve(L, b))
    x = x[:, 0] if one_d else x
    if check_residual:
        _check_residual(sys, x)
    return x


@njit(cache=True)
def _levinson_core(R, RT, b):  # pragma: no cover - compiled
    """Block Levinson recursion over prepared (p,d,d) blocks.

    Returns (X, fail_step, fail_norm); fail_step > 0 signals a reflection
    block of spectral norm >= 1 at that step (system not positive
    definite).  Explicit index loops keep the compiled code free of
    per-block dispatch overhead.
    """
    p, d, _ = R.shape
    q = b.shape[2]
    F = np.zeros((p, d, d))
    G = np.zeros((p, d, d))
    X = np.zeros((p, d, q))
    newF = np.zeros((p, d, d))
    newG = np.zeros((p, d, d))
    eye = np.eye(d)
    r0inv = np.linalg.solve(R[0], eye)
    F[0] = r0inv
    G[0] = r0inv
    for i in range(d):
        for l in range(q):
            acc = 0.0
            for j in range(d):
                acc += r0inv[i, j] * b[0, j, l]
            X[0, i, l] = acc

    delta_f = np.zeros((d, d))
    delta_g = np.zeros((d, d))
    eps = np.zeros((d, q))
    for n in range(1, p):
        # Last row of T_{n+1} applied to [F_n; 0]; first row to [0; G_n].
        delta_f[:] = 0.0
        delta_g[:] = 0.0
        for k in range(n):
            for i in range(d):
                for j in range(d):
                    rf = R[n - k, i, j]
                    rg = RT[k + 1, i, j]
                    for l in range(d):
                        delta_f[i, l] += rf * F[k, j, l]
                        delta_g[i, l] += rg * G[k, j, l]
        prod = delta_g @ delta_f
        frob = np.linalg.norm(prod)
        if frob >= 1.0 or not np.isfinite(frob):
            # Frobenius bounds the spectral norm from above; refine.
            sv2 = np.abs(np.linalg.eigvals(prod.T @ prod)).max()
            sv = np.sqrt(sv2.real)
            if sv >= 1.0 or not np.isfinite(sv):
                return X, n, sv
        alpha = np.linalg.solve(eye - prod, eye)
        gamma = np.linalg.solve(eye - delta_f @ delta_g, eye)
        beta = -delta_f @ alpha
        mu = -delta_g @ gamma

        # F_{n+1} = [F;0] alpha + [0;G] beta,  G_{n+1} = [0;G] gamma + [F;0] mu
        for k in range(n + 1):
            for i in range(d):
                for l in range(d):
                    af = 0.0
                    ag = 0.0
                    if k < n:
                        for j in range(d):
                            af += F[k, i, j] * alpha[j, l]
                            ag += F[k, i, j] * mu[j, l]
                    if k > 0:
                        for j in range(d):
                            af += G[k - 1, i, j] * beta[j, l]
                            ag += G[k - 1, i, j] * gamma[j, l]
                    newF[k, i, l] = af
                    newG[k, i, l] = ag
        F[: n + 1] = newF[: n + 1]
        G[: n + 1] = newG[: n + 1]

        eps[:] = 0.0
        for k in range(n):
            for i in range(d):
                for j in range(d):
                    rf = R[n - k, i, j]
                    for l in range(q):
                        eps[i, l] += rf * X[k, j, l]
        for i in range(d):
            for l in range(q):
                eps[i, l] -= b[n, i, l]
        X[n] = 0.0
        for k in range(n + 1):
            for i in range(d):
                for l in range(q):
                    acc = 0.0
                    for j in range(d):
                        acc += G[k, i, j] * eps[j, l]
                    X[k, i, l] -= acc
    return X, 0, 0.0


def _levinson_numpy(R, RT, b):
    """Vectorized fallback used when numba is unavailable."""
    p, d, _ = R.shape
    q = b.shape[2]
    eye = np.eye(d)
    F = np.zeros((p, d, d))
    G = np.zeros((p, d, d))
    X = np.zeros((p, d, q))
    r0inv = np.linalg.solve(R[0], eye)
    F[0] = r0inv
    G[0] = r0inv
    X[0] = r0inv @ b[0]
    for n in range(1, p):
        delta_f = np.einsum("kij,kjl->il", R[n:0:-1], F[:n])
        delta_g = np.einsum("kij,kjl->il", RT[1 : n + 1], G[:n])
        prod = delta_g @ delta_f
        norm = np.linalg.norm(prod, 2)
        if norm >= 1.0 or not np.isfinite(norm):
            return X, n, float(norm)
        alpha = np.linalg.solve(eye - prod, eye)
        gamma = np.linalg.solve(eye - delta_f @ delta_g, eye)
        newF = np.empty((n + 1, d, d))
        newF[:n] = F[:n] @ alpha
        newF[n] = 0.0
        newF[1:] += G[:n] @ (-delta_f @ alpha)
        newG = np.empty((n + 1, d, d))
        newG[1:] = G[:n] @ gamma
        newG[0] = 0.0
        newG[:n] += F[:n] @ (-delta_g @ gamma)
        F[: n + 1] = newF
        G[: n + 1] = newG
        eps = np.einsum("kij,kjl->il", R[n:0:-1], X[:n]) - b[n]
        X[n] = 0.0
        X[: n + 1] -= G[: n + 1] @ eps
    return X, 0, 0.0


def solve_block_levinson(sys: BlockToeplitzSystem, check_residual: bool = True) -> np.ndarray:
    """Solve T x = rhs by the block Levinson recursion.

    Grows the solved order one block at a time, maintaining forward and
    backward auxiliary solutions; each extension costs O(n d^3) for an
    O(p^2 d^3) total.  Raises NotPositiveDefinite as soon as a reflection
    block certifies an indefinite leading minor, reporting the step.
    """
    p, d = sys.num_blocks, sys.block_dim
    R = np.array(sys.blocks)
    if sys.ridge:
        R[0][np.diag_indices(d)] += sys.ridge
    if np.any(np.linalg.eigvalsh((R[0] + R[0].T) / 2.0) <= 0):
        raise NotPositiveDefinite(step=0, norm=np.inf)
    RT = np.ascontiguousarray(R.transpose(0, 2, 1))

    rhs = sys.rhs
    one_d = rhs.ndim == 1
    b = np.ascontiguousarray((rhs[:, None] if one_d else rhs).reshape(p, d, -1), dtype=float)

    core = _levinson_core if HAVE_NUMBA else _levinson_numpy
    try:
        X, fail_step, fail_norm = core(R, RT, b)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(step=0, norm=np.inf) from None
    if fail_step:
        raise NotPositiveDefinite(step=int(fail_step), norm=float(fail_norm))

    x = X.reshape(p * d, -1)
    x = x[:, 0] if one_d else x
    if check_residual:
        _check_residual(sys, x)
    return x


_SOLVERS = {"levinson": solve_block_levinson, "dense": solve_dense}


def solve(sys: BlockToeplitzSystem, method: str = "levinson") -> np.ndarray:
    try:
        fn = _SOLVERS[method.lower()]
    except KeyError:
        raise ValueError(f"unknown method {method!r}, expected levinson or dense") from None
    return fn(sys)


def solve_with_auto_ridge(
    sys: BlockToeplitzSystem, method: str = "levinson"
) -> tuple[np.ndarray, float]:
    """Solve, escalating the ridge along RIDGE_LADDER until the system accepts.

    Returns (solution, ridge actually used).  Ladder entries below the
    system's own ridge are skipped.
    """
    last: NotPositiveDefinite | None = None
    for delta in RIDGE_LADDER:
        ridge = max(delta, sys.ridge)
        try:
            x = solve(replace(sys, ridge=ridge), method)
            return x, ridge
        except NotPositiveDefinite as exc:
            last = exc
    raise NotPositiveDefinite(step=last.step if last else 0, norm=last.norm if last else np.inf)


def solve_normal_equations(
    sys: BlockToeplitzSystem,
    method: str = "levinson",
    feature_mean: np.ndarray | None = None,
    target_mean: np.ndarray | None = None,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Coefficient blocks A_1..A_p (and intercept) from a moment system.

    The rhs must stack the lagged target-feature cross moments C_k^T; the
    returned blocks satisfy z_j ~ intercept + sum_k A_k f_{j-k}.  The
    intercept comes from the feature/target means when the system was
    built on centered moments (zero otherwise).
    """
    x = solve(sys, method)
    p, d = sys.num_blocks, sys.block_dim
    xm = x[:, None] if x.ndim == 1 else x
    q = xm.shape[1]
    blocks = [xm[i * d : (i + 1) * d, :].T.copy() for i in range(p)]
    if target_mean is None:
        intercept = np.zeros(q)
    else:
        intercept = np.asarray(target_mean, dtype=float).copy()
        if feature_mean is not None:
            fm = np.asarray(feature_mean, dtype=float)
            for a in blocks:
                intercept -= a @ fm
    return blocks, intercept


def build_normal_system(
    targets: np.ndarray, features: np.ndarray, lag_order: int, ridge: float = 0.0
) -> tuple[BlockToeplitzSystem, np.ndarray, np.ndarray]:
    """Centered moment system for regressing targets on lagged features.

    Returns (system, feature_mean, target_mean); feed all three back into
    ``solve_normal_equations`` to recover the intercept.
    """
    z = np.asarray(targets, dtype=float)
    f = np.asarray(features, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if f.ndim == 1:
        f = f[:, None]
    f_mean = f.mean(axis=0)
    z_mean = z.mean(axis=0)
    fc = f - f_mean
    zc = z - z_mean
    R = lag_moments(fc, lag_order - 1)
    C = lagged_cross_moments(zc, fc, lag_order)
    rhs = np.concatenate([C[k].T for k in range(lag_order)], axis=0)
    return BlockToeplitzSystem(blocks=R, rhs=rhs, ridge=ridge), f_mean, z_mean


def random_spd_system(
    rng: np.random.Generator,
    num_blocks: int,
    block_dim: int,
    n_rhs: int = 1,
    strength: float | None = None,
) -> BlockToeplitzSystem:
    """Random well-posed SPD block-Toeplitz instance (for tests/benchmarks).

    Blocks are biased sample autocovariances of an AR(1)-filtered noise
    series, which makes the implied matrix positive semi-definite by
    construction; a small diagonal jitter keeps it safely definite.
    """
    d = block_dim
    n = max(2048, 8 * num_blocks)
    if strength is None:
        strength = float(rng.uniform(0.2, 0.9))
    A = rng.standard_normal((d, d))
    A *= strength / max(np.linalg.norm(A, 2), 1e-12)
    f = np.empty((n, d))
    f[0] = rng.standard_normal(d)
    innov = rng.standard_normal((n, d))
    for j in range(1, n):
        f[j] = A @ f[j - 1] + innov[j]
    R = lag_moments(f, num_blocks - 1)
    R[0][np.diag_indices(d)] += 1e-3 * np.trace(R[0]) / d
    rhs = rng.standard_normal((num_blocks * d, n_rhs))
    if n_rhs == 1:
        rhs = rhs[:, 0]
    return BlockToeplitzSystem(blocks=R, rhs=rhs)


def benchmark_solvers(
    p_values: list[int],
    block_dim: int = 2,
    repeats: int = 3,
    seed: int = 0,
) -> list[dict]:
    """Time Levinson vs dense on random SPD systems; one row per size."""
    rng = np.random.default_rng(seed)
    rows = []
    for p in p_values:
        sys = random_spd_system(rng, p, block_dim)
        times = {"levinson": [], "dense": []}
        for _ in range(repeats):
            for name in ("levinson", "dense"):
                t0 = time.perf_counter()
                solve(sys, name)
                times[name].append(time.perf_counter() - t0)
        lev = min(times["levinson"])
        den = min(times["dense"])
        rows.append(
            {
                "num_blocks": p,
                "block_dim": block_dim,
                "levinson_s": lev,
                "dense_s": den,
                "speedup": den / lev,
            }
        )
    return rows
