"""End-to-end fitting pipeline: constrained fit, initial rotation, folded
rotation. Shared by the Monte Carlo harness and the command line."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criteria import FoldedLoss, folded_criterion
from .erm import FitConfig, FitResult, ParamPair, ResponseMatrix, erm_fit
from .exceptions import CollinearAxesError, InsufficientSimpleStructureError
from .inference import plugin_covariances_A_all
from .initialization import InitConfig, InitResult, init_rotation, similarity_matrix
from .lqa import LqaConfig, LqaResult, lqa_run

__all__ = ["PipelineResult", "suggest_gamma", "fit_pipeline", "make_loss", "auto_init"]

_LOSS_SHAPES = {"mcp": 3.0, "scad": 3.7, "tl1": 1.0}

AUTO_DELTA_PRIME_GRID = (0.02, 0.01, 0.005, 0.0025)


def make_loss(kind: str, gamma: float, a: float | None = None) -> FoldedLoss:
    """Construct a folded loss by name with its conventional shape default."""
    if kind == "mcp":
        return FoldedLoss.mcp(gamma, a if a is not None else 3.0)
    if kind == "scad":
        return FoldedLoss.scad(gamma, a if a is not None else 3.7)
    if kind == "tl1":
        return FoldedLoss.truncated_l1(gamma)
    raise ValueError(f"unknown loss kind {kind!r}")


def suggest_gamma(data: ResponseMatrix, params: ParamPair, a3: float) -> float:
    """Data-driven scale for the folded loss.

    The smallest loading magnitude that clears three plug-in standard
    errors, divided by ``a3 + 1`` so the loss plateau stays below the
    weakest credible signal; entries that cannot clear the significance
    margin are noise-dominated either way, so the margin itself supplies
    the safety headroom. Falls back to three times the median standard
    error when nothing is significant.
    """
    covs = plugin_covariances_A_all(data, params)
    se = np.stack([np.sqrt(c.sandwich.diagonal() / c.scale) for c in covs])
    mags = np.abs(params.A)
    significant = mags > 3.0 * se
    lam_hat = float(mags[significant].min()) if significant.any() else 3.0 * float(np.median(se))
    return lam_hat / (a3 + 1.0)


def auto_init(
    data: ResponseMatrix,
    params: ParamPair,
    delta: float = 0.01,
    grid: tuple = AUTO_DELTA_PRIME_GRID,
    min_set_size: int = 2,
    extra_sets: int = 2,
) -> InitResult:
    """Initial rotation with cluster slack and axis sets chosen by the
    criterion.

    No single cluster slack is safe in every sample: a loose one can
    merge a bundle of merely-similar dense rows into a fake axis, a
    tight one can fragment a true cluster below a fake bundle's size.
    Candidate rotations are therefore built over a small grid of slacks
    (reusing one similarity matrix), and at every slack over all ways of
    choosing the axes among the ``r + extra_sets`` largest disjoint
    clusters, so a true cluster pushed out of the top ``r`` by a fake
    bundle stays in play. Since the estimand is the rotation minimizing
    the folded criterion, the winner among candidates is picked the same
    way: smallest criterion value at a common conservative scale, with
    grid order breaking exact ties. A candidate whose axes are nearly
    collinear (two fragments of the same cluster) is discarded.
    """
    from itertools import combinations

    from .initialization import _select_disjoint, axes_from_sets

    r = params.r
    sims = similarity_matrix(params, delta)
    candidates: list[InitResult] = []
    found_max = 0
    for dp in grid:
        candidate_mask = sims > 1.0 - dp
        sets = [
            set(np.flatnonzero(candidate_mask[j]).tolist()) for j in range(params.q)
        ]
        try:
            top = _select_disjoint(sets, r, min_set_size, extra=extra_sets)
        except InsufficientSimpleStructureError as exc:
            found_max = max(found_max, exc.found)
            continue
        found_max = max(found_max, r)
        for combo in combinations(range(len(top)), r):
            try:
                candidates.append(axes_from_sets(params, [top[i] for i in combo]))
            except CollinearAxesError:
                continue
    if not candidates:
        raise InsufficientSimpleStructureError(
            found=found_max,
            needed=r,
            message=f"no slack in {grid} produced {r} disjoint clusters of size "
            f">= {min_set_size}; best attempt found {found_max}",
        )
    ref = candidates[0]
    gamma_cmp = suggest_gamma(data, ref.params, a3=3.0)
    loss_cmp = FoldedLoss.mcp(gamma_cmp, 3.0)
    return min(candidates, key=lambda c: folded_criterion(c.params.A, loss_cmp))


@dataclass(frozen=True)
class PipelineResult:
    fit: FitResult
    init: InitResult | None
    rotations: dict[str, LqaResult]
    gammas: dict[str, float]

    def params(self, loss_name: str) -> ParamPair:
        return self.rotations[loss_name].params


def fit_pipeline(
    data: ResponseMatrix,
    r: int,
    losses: dict[str, FoldedLoss | None] | None = None,
    fit_config: FitConfig | None = None,
    init_config: InitConfig | None = None,
    init_delta: float = 0.01,
    R: float = 1.0,
    eta: float = 0.05,
    T: int = 3,
    mode: str = "oblique",
    warm_start: ParamPair | None = None,
) -> PipelineResult:
    """Run the full estimation pipeline.

    ``losses`` maps a loss name (``mcp``, ``scad``, ``tl1``) to a fully
    specified :class:`FoldedLoss`, or to ``None`` to let
    :func:`suggest_gamma` pick the scale after the initial rotation.
    With ``init_config=None`` the cluster slack is selected
    automatically by :func:`auto_init` using ``init_delta`` as the norm
    floor; pass an explicit config to pin both thresholds.
    """
    losses = {"mcp": None} if losses is None else losses
    fit = erm_fit(data, r, config=fit_config, warm_start=warm_start)
    init = None
    if losses:
        if init_config is None:
            init = auto_init(data, fit.params, delta=init_delta)
        else:
            init = init_rotation(fit.params, init_config)

    rotations: dict[str, LqaResult] = {}
    gammas: dict[str, float] = {}
    for name, loss in losses.items():
        if loss is None:
            a3 = _LOSS_SHAPES[name]
            gamma = suggest_gamma(data, init.params, a3)
            loss = make_loss(name, gamma)
        gammas[name] = loss.gamma
        cfg = LqaConfig(loss=loss, R=R, eta=eta, T=T, mode=mode)
        rotations[name] = lqa_run(init.params, cfg)
    return PipelineResult(fit=fit, init=init, rotations=rotations, gammas=gammas)
