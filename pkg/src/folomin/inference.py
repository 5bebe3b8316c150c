"""Plug-in sandwich covariances, Wald intervals, and multiple testing.

Each row of the representation matrix (and of the latent scores) has an
asymptotic sandwich covariance: the inverse curvature of its separable
risk (bread) around the weighted score second moment (meat), both
evaluated at the fitted parameters. Intervals and two-sided z-tests
follow, with Benjamini-Hochberg or Bonferroni adjustment of the
resulting p-values. Column alignment utilities resolve the signed
permutation indeterminacy when comparing an estimate to a reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import ndtr, ndtri

from .erm import ParamPair
from .exceptions import DegenerateVarianceError, IllConditionedCovarianceError
from .model import ResponseMatrix, risk_d1, risk_d2

__all__ = [
    "RowCovariance",
    "InferenceReport",
    "plugin_covariance_A",
    "plugin_covariance_Z",
    "plugin_covariances_A_all",
    "plugin_covariances_Z_all",
    "wald_intervals",
    "bh_adjust",
    "bonferroni_adjust",
    "align",
    "build_report",
]


@dataclass(frozen=True)
class RowCovariance:
    """Sandwich covariance for one row: ``bread^{-1} meat bread^{-1}``.

    ``scale`` is the divisor turning the sandwich into the row
    estimator's variance (``n`` for representation rows, ``q`` for
    latent rows).
    """

    index: int
    bread: np.ndarray
    meat: np.ndarray
    sandwich: np.ndarray
    scale: int


def _sandwich_stack(X: np.ndarray, d1: np.ndarray, d2: np.ndarray, scale: int):
    """Stacked breads/meats/sandwiches for all columns of ``d1``/``d2``.

    ``X`` is the (m, r) design shared by all rows, ``d1``/``d2`` are
    (m, k) arrays of risk derivatives evaluated at the fit.
    """
    m = X.shape[0]
    breads = np.einsum("mr,mk,ms->krs", X, d2, X) / m
    meats = np.einsum("mr,mk,ms->krs", X, d1**2, X) / m
    conds = np.linalg.cond(breads)
    if np.any(conds > 1e10):
        j = int(np.argmax(conds))
        raise IllConditionedCovarianceError(
            f"bread matrix for row {j} has condition number {conds[j]:.3e} > 1e10"
        )
    inv = np.linalg.inv(breads)
    sands = inv @ meats @ inv
    sands = (sands + np.swapaxes(sands, 1, 2)) / 2.0
    return breads, meats, sands


def plugin_covariances_A_all(data: ResponseMatrix, params: ParamPair) -> list[RowCovariance]:
    """Sandwich covariances for every row of the representation matrix."""
    theta = params.theta()
    d1 = risk_d1(data.family, theta, data.values)
    d2 = risk_d2(data.family, theta)
    breads, meats, sands = _sandwich_stack(params.Z, d1, d2, params.n)
    return [
        RowCovariance(j, breads[j], meats[j], sands[j], params.n) for j in range(params.q)
    ]


def plugin_covariances_Z_all(data: ResponseMatrix, params: ParamPair) -> list[RowCovariance]:
    """Sandwich covariances for every row of the latent score matrix."""
    theta = params.theta()
    d1 = risk_d1(data.family, theta, data.values)
    d2 = risk_d2(data.family, theta)
    breads, meats, sands = _sandwich_stack(params.A, d1.T, d2.T, params.q)
    return [
        RowCovariance(i, breads[i], meats[i], sands[i], params.q) for i in range(params.n)
    ]


def plugin_covariance_A(data: ResponseMatrix, params: ParamPair, j: int) -> RowCovariance:
    """Sandwich covariance for row ``j`` of the representation matrix."""
    theta = params.Z @ params.A[j]
    d1 = risk_d1(data.family, theta, data.values[:, j])[:, None]
    d2 = risk_d2(data.family, theta)[:, None]
    breads, meats, sands = _sandwich_stack(params.Z, d1, d2, params.n)
    return RowCovariance(j, breads[0], meats[0], sands[0], params.n)


def plugin_covariance_Z(data: ResponseMatrix, params: ParamPair, i: int) -> RowCovariance:
    """Sandwich covariance for row ``i`` of the latent scores."""
    theta = params.A @ params.Z[i]
    d1 = risk_d1(data.family, theta, data.values[i])[:, None]
    d2 = risk_d2(data.family, theta)[:, None]
    breads, meats, sands = _sandwich_stack(params.A, d1, d2, params.q)
    return RowCovariance(i, breads[0], meats[0], sands[0], params.q)


def wald_intervals(
    estimates: np.ndarray, covariances: list[RowCovariance], level: float
):
    """Entrywise Wald intervals and z-scores.

    Entry ``(j, l)`` gets ``est +- z_level * sqrt(sandwich_ll / scale)``;
    z-scores standardize against the same standard error.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    estimates = np.asarray(estimates, dtype=float)
    variances = np.stack([c.sandwich.diagonal() / c.scale for c in covariances])
    if np.any(variances <= 0):
        j, l = np.argwhere(variances <= 0)[0]
        raise DegenerateVarianceError(f"nonpositive variance for entry ({j}, {l})")
    se = np.sqrt(variances)
    mult = float(ndtri((1.0 + level) / 2.0))
    lower = estimates - mult * se
    upper = estimates + mult * se
    z = estimates / se
    return lower, upper, z, se


def two_sided_p(z: np.ndarray) -> np.ndarray:
    """Two-sided normal p-values for z-scores."""
    return 2.0 * ndtr(-np.abs(np.asarray(z, dtype=float)))


def bh_adjust(p_values, alpha: float = 0.05):
    """Step-up false-discovery-rate adjustment.

    Returns monotone adjusted p-values (in the input order) and the
    rejection indicators at level ``alpha``.
    """
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise ValueError("p_values must be one-dimensional")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    adjusted_sorted = np.minimum(adjusted_sorted, 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    rejections = adjusted <= alpha
    return adjusted, rejections


def bonferroni_adjust(p_values, alpha: float = 0.05):
    """Bonferroni adjustment: ``min(1, m * p)`` with rejections at alpha."""
    p = np.asarray(p_values, dtype=float)
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    adjusted = np.minimum(1.0, p * p.size)
    return adjusted, adjusted <= alpha


def align(estimate: np.ndarray, truth: np.ndarray):
    """Best signed column permutation matching ``estimate`` to ``truth``.

    Minimizes the Frobenius distance over all signed permutations. The
    objective separates across matched column pairs, so the optimum is
    found exactly by resolving the best sign per pair and solving the
    assignment problem on the residual costs.

    Returns ``(perm, signs, aligned)`` where column ``l`` of ``aligned``
    is ``signs[l] * estimate[:, perm[l]]``.
    """
    E = np.asarray(estimate, dtype=float)
    T = np.asarray(truth, dtype=float)
    if E.shape != T.shape:
        raise ValueError(f"shape mismatch {E.shape} vs {T.shape}")
    r = E.shape[1]
    e2 = (E**2).sum(axis=0)
    t2 = (T**2).sum(axis=0)
    cross = E.T @ T  # cross[k, l] = e_k . t_l
    # cost of assigning estimate column k to truth column l at the best sign
    cost = e2[:, None] + t2[None, :] - 2.0 * np.abs(cross)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(r, dtype=int)
    signs = np.empty(r)
    for k, l in zip(rows, cols):
        perm[l] = k
        s = np.sign(cross[k, l])
        signs[l] = s if s != 0 else 1.0
    aligned = E[:, perm] * signs
    return perm, signs, aligned


def align_pair(params: ParamPair, truth_A: np.ndarray) -> ParamPair:
    """Apply the signed permutation aligning ``A`` to ``truth_A`` to both
    blocks, preserving the fitted product."""
    perm, signs, A_aligned = align(params.A, truth_A)
    Z_aligned = params.Z[:, perm] * signs
    return ParamPair(Z_aligned, A_aligned)


@dataclass(frozen=True)
class InferenceReport:
    """Entrywise inference for a fitted pair.

    Arrays for the representation matrix are ``q x r``; arrays for the
    latent scores are ``n x r``. Adjusted p-values refer to the
    representation matrix entries only (the testing target).
    """

    estimates: ParamPair
    cov_A: list[RowCovariance]
    cov_Z: list[RowCovariance]
    level: float
    lower_A: np.ndarray
    upper_A: np.ndarray
    z_A: np.ndarray
    se_A: np.ndarray
    p_A: np.ndarray
    adjusted_p_A: np.ndarray
    rejections_A: np.ndarray
    lower_Z: np.ndarray
    upper_Z: np.ndarray
    z_Z: np.ndarray
    se_Z: np.ndarray
    adjust_method: str
    per_column: bool


def build_report(
    data: ResponseMatrix,
    params: ParamPair,
    level: float = 0.95,
    alpha: float = 0.05,
    adjust: str = "bh",
    per_column: bool = True,
) -> InferenceReport:
    """Assemble the full inference report at the given parameters.

    ``per_column`` applies the multiplicity adjustment separately within
    each column of the representation matrix (one testing family per
    latent dimension); otherwise a single family covers all entries.
    """
    if adjust not in ("bh", "bonferroni"):
        raise ValueError(f"unknown adjustment {adjust!r}")
    cov_A = plugin_covariances_A_all(data, params)
    cov_Z = plugin_covariances_Z_all(data, params)
    lower_A, upper_A, z_A, se_A = wald_intervals(params.A, cov_A, level)
    lower_Z, upper_Z, z_Z, se_Z = wald_intervals(params.Z, cov_Z, level)
    p_A = two_sided_p(z_A)

    adjuster = bh_adjust if adjust == "bh" else bonferroni_adjust
    adjusted = np.empty_like(p_A)
    rejections = np.empty_like(p_A, dtype=bool)
    if per_column:
        for l in range(p_A.shape[1]):
            adjusted[:, l], rejections[:, l] = adjuster(p_A[:, l], alpha)
    else:
        flat_adj, flat_rej = adjuster(p_A.ravel(), alpha)
        adjusted = flat_adj.reshape(p_A.shape)
        rejections = flat_rej.reshape(p_A.shape)

    return InferenceReport(
        estimates=params,
        cov_A=cov_A,
        cov_Z=cov_Z,
        level=level,
        lower_A=lower_A,
        upper_A=upper_A,
        z_A=z_A,
        se_A=se_A,
        p_A=p_A,
        adjusted_p_A=adjusted,
        rejections_A=rejections,
        lower_Z=lower_Z,
        upper_Z=upper_Z,
        z_Z=z_Z,
        se_Z=se_Z,
        adjust_method=adjust,
        per_column=per_column,
    )
