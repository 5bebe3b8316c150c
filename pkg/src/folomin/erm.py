"""Constrained empirical-risk fitting of the latent-variable model.

``erm_fit`` minimizes ``sum_ij l(a_j' z_i; Y_ij)`` over ``(Z, A)`` subject
to the identification constraints

* ``Z'Z / n = I`` (orthonormal latent scores),
* ``A'A / q`` diagonal,
* all row norms of ``Z`` and ``A`` at most ``M``,

by alternating projected gradient descent: a gradient step in ``Z``
followed by a polar retraction onto the orthonormality manifold, a
gradient step in ``A`` followed by an orthogonal co-rotation of both
blocks that restores diagonality without changing the fitted product,
and finally row-norm clipping. Each projection is exact, so the
constraint set is restored at every iteration (up to clipping, which is
inactive when ``M`` is chosen above the solution's row norms).

``oracle_fit_A`` / ``oracle_fit_Z`` solve the row-separable convex
problems obtained when the opposite block is known, by damped Newton
vectorized across rows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit

from .exceptions import DegenerateFitError, OracleFitError
from .model import ResponseFamily, ResponseMatrix, risk, risk_d1, risk_d2

__all__ = [
    "ParamPair",
    "FitConfig",
    "FitTrace",
    "FitResult",
    "erm_fit",
    "spectral_warm_start",
    "oracle_fit_A",
    "oracle_fit_Z",
]


@dataclass(frozen=True)
class ParamPair:
    """Latent scores ``Z`` (n x r) and representation matrix ``A`` (q x r).

    Treated as immutable; operations that transform a pair return a new
    one so fitted pairs can be shared across threads.
    """

    Z: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        A = np.asarray(self.A, dtype=float)
        if Z.ndim != 2 or A.ndim != 2 or Z.shape[1] != A.shape[1]:
            raise ValueError(f"incompatible shapes Z {Z.shape}, A {A.shape}")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def q(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.A.shape[1]

    def theta(self) -> np.ndarray:
        """Fitted natural parameters ``Z A'``."""
        return self.Z @ self.A.T

    def gram(self) -> np.ndarray:
        """Empirical latent Gram ``Z'Z / n``."""
        return self.Z.T @ self.Z / self.n

    def rotate(self, G: np.ndarray) -> "ParamPair":
        """Apply the rotation pairing ``(Z, A) -> (Z G', A G^{-1})``."""
        G = np.asarray(G, dtype=float)
        return ParamPair(self.Z @ G.T, self.A @ np.linalg.inv(G))


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings for :func:`erm_fit`.

    ``M`` caps all row norms; when None it defaults to twice the spectral
    warm start's largest row norm, which keeps the cap inactive at any
    reasonable solution. ``fixed_step`` switches off backtracking.
    """

    M: float | None = None
    max_iters: int = 1000
    tol: float = 1e-9
    step_shrink: float = 0.5
    armijo_c: float = 1e-4
    fixed_step: float | None = None
    seed: int = 0


@dataclass
class FitTrace:
    """Per-iteration objective values and final diagnostics."""

    objectives: list = field(default_factory=list)
    status: str = "converged"
    n_iters: int = 0
    gram_residual: float = math.nan
    diag_residual: float = math.nan
    max_row_norm: float = math.nan


@dataclass(frozen=True)
class FitResult:
    params: ParamPair
    trace: FitTrace


def _objective(values: np.ndarray, family: ResponseFamily, Z, A) -> float:
    return float(risk(family, Z @ A.T, values).sum())


def _polar_retract(Z: np.ndarray) -> np.ndarray:
    """Nearest matrix with ``Z'Z = n I`` (scaled polar factor)."""
    n = Z.shape[0]
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    if s[-1] < 1e-8 * math.sqrt(n):
        raise DegenerateFitError(
            f"rank collapse: smallest singular value {s[-1]:.3e} below threshold"
        )
    return math.sqrt(n) * (U @ Vt)


def _diagonalize(Z: np.ndarray, A: np.ndarray):
    """Co-rotate both blocks so ``A'A`` becomes diagonal.

    The rotation is orthogonal, leaving the fitted product, the latent
    Gram, and all row norms unchanged. Columns are ordered by decreasing
    eigenvalue with a deterministic sign convention.
    """
    w, V = np.linalg.eigh(A.T @ A)
    order = np.argsort(w)[::-1]
    V = V[:, order]
    anchor = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[anchor, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    V = V * signs
    return Z @ V, A @ V


def _clip_rows(X: np.ndarray, M: float) -> tuple[np.ndarray, bool]:
    norms = np.linalg.norm(X, axis=1)
    over = norms > M
    if not np.any(over):
        return X, False
    X = X.copy()
    X[over] *= (M / norms[over])[:, None]
    return X, True


def spectral_warm_start(data: ResponseMatrix, r: int) -> ParamPair:
    """Rank-``r`` spectral initializer on a family-specific transform.

    The transform maps each cell to a rough natural-parameter scale
    (identity for gaussian, logit of clipped values for bernoulli, log of
    clipped values for poisson); the thin SVD of the transformed matrix
    then provides a pair already satisfying both Gram constraints.
    """
    Y = data.values
    n = Y.shape[0]
    kind = data.family.kind
    if kind == "gaussian":
        X = Y
    elif kind == "bernoulli":
        X = logit(np.clip(Y, 0.1, 0.9))
    else:
        X = np.log(np.clip(Y, 0.25, None))
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    Z = math.sqrt(n) * U[:, :r]
    A = Vt[:r].T * (s[:r] / math.sqrt(n))
    return ParamPair(Z, A)


def erm_fit(
    data: ResponseMatrix,
    r: int,
    config: FitConfig | None = None,
    warm_start: ParamPair | None = None,
) -> FitResult:
    """Fit the constrained empirical risk minimizer.

    Returns the fitted pair together with a trace of objective values;
    the objective is nonincreasing along accepted steps. A warning status
    is recorded if ``max_iters`` is reached before the relative objective
    change drops below ``tol``.
    """
    config = config or FitConfig()
    Y = data.values
    n, q = Y.shape
    if n < r or q < r:
        raise ValueError(f"need n, q >= r; got n={n}, q={q}, r={r}")
    family = data.family

    if warm_start is None:
        start = spectral_warm_start(data, r)
    else:
        start = warm_start
    M = config.M
    if M is None:
        M = 2.0 * max(
            np.linalg.norm(start.Z, axis=1).max(),
            np.linalg.norm(start.A, axis=1).max(),
        )

    Z = _polar_retract(np.asarray(start.Z, dtype=float))
    A = np.asarray(start.A, dtype=float).copy()
    Z, A = _diagonalize(Z, A)
    A, _ = _clip_rows(A, M)
    Z, clipped = _clip_rows(Z, M)
    if clipped:
        Z = _polar_retract(Z)

    f = _objective(Y, family, Z, A)
    trace = FitTrace(objectives=[f])
    step_z = config.fixed_step or 1.0
    step_a = config.fixed_step or 1.0
    shrink, c_armijo = config.step_shrink, config.armijo_c

    for it in range(config.max_iters):
        # Z block: Riemannian gradient step with polar retraction; the
        # tangent projection avoids Armijo stalls at manifold-stationary
        # points where the normal gradient component dominates
        grad_z = risk_d1(family, Z @ A.T, Y) @ A
        S = Z.T @ grad_z
        grad_z = grad_z - Z @ ((S + S.T) / (2.0 * n))
        gz2 = float((grad_z**2).sum())
        if config.fixed_step is None:
            step_z *= 2.0
            accepted = False
            for _ in range(60):
                Z_c = _polar_retract(Z - step_z * grad_z)
                Z_c, clipped = _clip_rows(Z_c, M)
                if clipped:
                    Z_c = _polar_retract(Z_c)
                f_c = _objective(Y, family, Z_c, A)
                if f_c <= f - c_armijo * step_z * gz2:
                    accepted = True
                    break
                step_z *= shrink
            if accepted:
                Z, f = Z_c, f_c
        else:
            Z = _polar_retract(Z - step_z * grad_z)
            f = _objective(Y, family, Z, A)

        # A block: gradient step, then co-rotation to restore diagonality
        grad_a = risk_d1(family, Z @ A.T, Y).T @ Z
        ga2 = float((grad_a**2).sum())
        if config.fixed_step is None:
            step_a *= 2.0
            accepted = False
            for _ in range(60):
                A_c = A - step_a * grad_a
                A_c, _ = _clip_rows(A_c, M)
                f_c = _objective(Y, family, Z, A_c)
                if f_c <= f - c_armijo * step_a * ga2:
                    accepted = True
                    break
                step_a *= shrink
            if accepted:
                A, f = A_c, f_c
        else:
            A = A - step_a * grad_a
            f = _objective(Y, family, Z, A)
        Z, A = _diagonalize(Z, A)

        trace.objectives.append(f)
        prev = trace.objectives[-2]
        if abs(prev - f) <= config.tol * (1.0 + abs(prev)):
            trace.n_iters = it + 1
            break
    else:
        trace.status = "max_iters"
        trace.n_iters = config.max_iters
        warnings.warn(
            f"erm_fit reached max_iters={config.max_iters} with relative change "
            f"above tol={config.tol}; returning last iterate",
            RuntimeWarning,
        )

    if np.linalg.svd(A, compute_uv=False)[-1] < 1e-10 * math.sqrt(q):
        raise DegenerateFitError("fitted representation matrix is rank deficient")

    params = ParamPair(Z, A)
    gram = params.gram()
    trace.gram_residual = float(np.linalg.norm(gram - np.eye(r)))
    AtA = A.T @ A / q
    trace.diag_residual = float(np.abs(AtA - np.diag(np.diag(AtA))).max())
    trace.max_row_norm = float(
        max(np.linalg.norm(Z, axis=1).max(), np.linalg.norm(A, axis=1).max())
    )
    return FitResult(params, trace)


def _separable_fit(
    X: np.ndarray,
    targets: np.ndarray,
    family: ResponseFamily,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> np.ndarray:
    """Solve ``min_b sum_m l(x_m' b; y_mk)`` for every target column ``k``.

    Damped Newton vectorized across columns; rows of the output are the
    per-column solutions. Columns whose problem has no finite minimizer
    (separable binary data) are detected by a gradient that will not
    vanish and raise :class:`OracleFitError`.
    """
    X = np.asarray(X, dtype=float)
    m, r = X.shape
    k = targets.shape[1]
    if np.linalg.matrix_rank(X) < r:
        raise DegenerateFitError("design matrix is rank deficient")
    B = np.zeros((k, r))
    f = risk(family, X @ B.T, targets).sum(axis=0)

    for _ in range(max_iter):
        theta = X @ B.T
        g1 = risk_d1(family, theta, targets)
        grad = g1.T @ X  # (k, r)
        gnorm = np.linalg.norm(grad, axis=1)
        active = gnorm > tol
        if not active.any():
            break
        w = risk_d2(family, theta)
        H = np.einsum("mr,mk,ms->krs", X, w, X)
        H = H + 1e-12 * np.eye(r)
        d = -np.linalg.solve(H[active], grad[active][:, :, None])[:, :, 0]
        gd = (grad[active] * d).sum(axis=1)

        idx = np.flatnonzero(active)
        B_new = B.copy()
        # inside the quadratic basin the objective decrease falls below
        # float resolution; take pure Newton steps there instead of
        # stalling on the value-based line search
        pure = gnorm[idx] < 1e-4
        if pure.any():
            cand = B[idx[pure]] + d[pure]
            B_new[idx[pure]] = cand
            f[idx[pure]] = risk(family, X @ cand.T, targets[:, idx[pure]]).sum(axis=0)
        t = np.ones(idx.size)
        accepted = pure.copy()
        for _ in range(50):
            todo = ~accepted
            if not todo.any():
                break
            cand = B[idx[todo]] + t[todo, None] * d[todo]
            f_c = risk(family, X @ cand.T, targets[:, idx[todo]]).sum(axis=0)
            ok = f_c <= f[idx[todo]] + 1e-4 * t[todo] * gd[todo]
            sel = np.flatnonzero(todo)[ok]
            B_new[idx[sel]] = cand[ok]
            f[idx[sel]] = f_c[ok]
            accepted[sel] = True
            t[np.flatnonzero(todo)[~ok]] *= 0.5
        B = B_new

    theta = X @ B.T
    gnorm = np.linalg.norm((risk_d1(family, theta, targets).T @ X), axis=1)
    bad = np.flatnonzero((gnorm > tol) | (np.linalg.norm(B, axis=1) > 1e6))
    if bad.size:
        if r == 1:
            for j in bad:
                B[j, 0] = _bisect_scalar(X[:, 0], targets[:, j], family, tol)
        else:
            raise OracleFitError(
                f"per-row solve did not reach gradient tolerance for rows {bad.tolist()[:5]}"
            )
    if family.kind == "bernoulli":
        # the binary risk is nonnegative with zero attainable only in the
        # limit of a perfect fit, so a vanishing row risk means separation
        # and the minimizer sits at infinity
        f = risk(family, X @ B.T, targets).sum(axis=0)
        separated = np.flatnonzero(f < 1e-8)
        if separated.size:
            raise OracleFitError(
                f"rows {separated.tolist()[:5]} have no finite minimizer (separable data)"
            )
    return B


def _bisect_scalar(x: np.ndarray, y: np.ndarray, family: ResponseFamily, tol: float) -> float:
    """Bisection fallback for the one-dimensional row problem.

    The gradient ``g(b) = sum_m d1(x_m b; y_m) x_m`` is nondecreasing in
    ``b`` by convexity; a missing sign change over a huge bracket means
    the minimizer diverges (e.g. separable binary data).
    """

    def g(b):
        return float((risk_d1(family, x * b, y) * x).sum())

    lo, hi = -1.0, 1.0
    for _ in range(60):
        if g(lo) < 0 < g(hi) or g(lo) == 0 or g(hi) == 0:
            break
        lo *= 2.0
        hi *= 2.0
        if hi > 1e12:
            raise OracleFitError("row problem has no finite minimizer (separable data)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = g(mid)
        if abs(val) <= tol:
            return mid
        if val < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def oracle_fit_A(data: ResponseMatrix, Z_star: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Fit every row of ``A`` with the latent scores held fixed at ``Z_star``."""
    return _separable_fit(np.asarray(Z_star, dtype=float), data.values, data.family, tol=tol)


def oracle_fit_Z(data: ResponseMatrix, A_star: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Fit every row of ``Z`` with the representation held fixed at ``A_star``."""
    return _separable_fit(np.asarray(A_star, dtype=float), data.values.T, data.family, tol=tol)
