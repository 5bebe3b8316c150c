import itertools

import numpy as np
import pytest
from scipy.linalg import expm

from folomin import (
    VintageConfig,
    align,
    promax_rotate,
    varimax_criterion,
    varimax_rotate,
)

A_BLOCK = np.array(
    [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0], [0.5, 0.3]]
)


def _simple_loadings(rng, q=30, r=3, per_dim=10):
    A = np.zeros((q, r))
    for l in range(r):
        A[l * per_dim : (l + 1) * per_dim, l] = rng.uniform(1, 2, per_dim)
    return A


def _signed_perm_distance(G):
    r = G.shape[0]
    best = np.inf
    for p in itertools.permutations(range(r)):
        for s in itertools.product([-1.0, 1.0], repeat=r):
            P = np.zeros((r, r))
            for l in range(r):
                P[p[l], l] = s[l]
            best = min(best, np.linalg.norm(G @ P - np.eye(r)))
    return best


def test_perfectly_simple_is_fixed_point():
    rng = np.random.default_rng(0)
    A = _simple_loadings(rng)
    res = varimax_rotate(A, VintageConfig(seed=0))
    _, _, aligned = align(res.A_rot, A)
    assert np.abs(aligned - A).max() <= 1e-8
    assert np.linalg.norm(res.G.T @ res.G - np.eye(3)) <= 1e-10


def test_rank_one_returns_sign():
    A = np.arange(1.0, 6.0).reshape(5, 1)
    res = varimax_rotate(A)
    assert res.G.shape == (1, 1)
    assert abs(abs(res.G[0, 0]) - 1.0) <= 1e-12


def test_block_counterexample_moves_away_from_identity():
    res = varimax_rotate(A_BLOCK, VintageConfig(seed=1))
    assert _signed_perm_distance(res.G) > 0.01


def test_local_maximality_of_returned_rotation():
    # the ascent maximizes the row-normalized criterion; verify optimality
    # against a cloud of small orthogonal perturbations
    config = VintageConfig(seed=1)
    res = varimax_rotate(A_BLOCK, config)
    W = A_BLOCK / np.linalg.norm(A_BLOCK, axis=1)[:, None]
    f0 = varimax_criterion(W @ res.G)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        S = rng.standard_normal((2, 2))
        S = (S - S.T) / 2
        S *= 1e-3 / np.linalg.norm(S, 2)
        worst = max(worst, varimax_criterion(W @ res.G @ expm(S)) - f0)
    assert worst <= 1e-9


def test_raw_criterion_mode_local_maximality():
    config = VintageConfig(seed=1, kaiser_normalize=False)
    res = varimax_rotate(A_BLOCK, config)
    f0 = varimax_criterion(res.A_rot)
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        S = rng.standard_normal((2, 2))
        S = (S - S.T) / 2
        S *= 1e-3 / np.linalg.norm(S, 2)
        worst = max(worst, varimax_criterion(A_BLOCK @ res.G @ expm(S)) - f0)
    assert worst <= 1e-9


def test_varimax_requires_full_rank():
    with pytest.raises(ValueError):
        varimax_rotate(np.ones((5, 2)))


def test_ascent_trace_nondecreasing():
    rng = np.random.default_rng(9)
    A = _simple_loadings(rng) + 0.3 * rng.standard_normal((30, 3))
    res = varimax_rotate(A, VintageConfig(seed=0))
    trace = np.asarray(res.trace)
    assert trace.size >= 1
    assert np.all(np.diff(trace) >= -1e-12)


def test_product_preservation_through_pairing():
    rng = np.random.default_rng(2)
    A = _simple_loadings(rng) + 0.1 * rng.standard_normal((30, 3))
    Z = rng.standard_normal((50, 3))
    res = varimax_rotate(A, VintageConfig(seed=0))
    np.testing.assert_allclose((Z @ res.G) @ res.A_rot.T, Z @ A.T, atol=1e-10)
    pres = promax_rotate(A)
    np.testing.assert_allclose((Z @ pres.G.T) @ pres.A_rot.T, Z @ A.T, atol=1e-9)


def test_promax_perfectly_simple():
    rng = np.random.default_rng(3)
    A = _simple_loadings(rng)
    res = promax_rotate(A)
    _, _, aligned = align(res.A_rot, A)
    assert np.abs(aligned - A).max() <= 1e-6
    np.testing.assert_allclose(res.factor_correlation, np.eye(3), atol=1e-6)


def test_promax_correlation_structure():
    rng = np.random.default_rng(4)
    A = _simple_loadings(rng) + 0.2 * rng.standard_normal((30, 3))
    res = promax_rotate(A)
    phi = res.factor_correlation
    np.testing.assert_allclose(phi, phi.T, atol=1e-12)
    np.testing.assert_allclose(np.diag(phi), np.ones(3), atol=1e-12)


def test_promax_power_changes_rotation():
    rng = np.random.default_rng(5)
    A = _simple_loadings(rng) + 0.2 * rng.standard_normal((30, 3))
    res2 = promax_rotate(A, power=2)
    res4 = promax_rotate(A, power=4)
    assert np.linalg.norm(res2.G - res4.G) > 1e-6


def test_vintage_config_validation():
    with pytest.raises(ValueError):
        VintageConfig(method="quartimin")
    with pytest.raises(ValueError):
        VintageConfig(power=1)
