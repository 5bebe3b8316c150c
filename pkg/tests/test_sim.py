import numpy as np
import pytest
from scipy.special import ndtr

from folomin import (
    SimDesign,
    gen_A,
    gen_Z,
    infeasible_debias_varimax,
    is_sparse,
    run_replications,
    varimax_rotate,
)
from folomin.inference import align
from folomin.sim import StreamingMoments


def test_design_validation():
    with pytest.raises(ValueError):
        SimDesign(n=10, q=10, r=3, lambda_signal=0.2, simple_fraction=0.1)  # budget < 1
    with pytest.raises(ValueError):
        SimDesign(n=100, q=100, r=3, lambda_signal=0.0)
    with pytest.raises(ValueError):
        SimDesign(n=100, q=100, r=3, tau=1.0)


def test_gen_A_budget_and_domains():
    rng = np.random.default_rng(0)
    design = SimDesign(n=100, q=100, r=5, lambda_signal=0.1, tau=0.0)
    assert design.rows_per_dim == 2
    A = gen_A(design, rng)
    # 10 simple rows, 2 per dimension, in contiguous blocks
    for l in range(5):
        block = A[2 * l : 2 * (l + 1)]
        assert np.all(block[:, l] >= 1.0) and np.all(block[:, l] <= 2.0)
        off = np.delete(block, l, axis=1)
        assert np.all(off == 0.0)
    # every nonzero entry is in [lambda, 2.5] or [1, 2] by magnitude
    mags = np.abs(A[A != 0])
    assert np.all((mags >= 0.1) & (mags <= 2.5))


def test_gen_A_zero_fraction_matches_normal_mass():
    rng = np.random.default_rng(1)
    design = SimDesign(n=100, q=2000, r=5, lambda_signal=0.1, tau=0.0)
    A = gen_A(design, rng)
    tail = A[5 * design.rows_per_dim :]
    frac = (tail == 0.0).mean()
    expected = 2 * ndtr(0.1) - 1  # P(|N(0,1)| < 0.1) = 0.0797
    assert abs(frac - expected) <= 0.02


def test_gen_A_is_sparse():
    rng = np.random.default_rng(2)
    design = SimDesign(n=100, q=200, r=3, lambda_signal=0.5, tau=0.0)
    A = gen_A(design, rng)
    M = np.linalg.norm(A, axis=1).max()
    assert is_sparse(A, lam=0.5, epsilon=1e-6, M=M + 1e-9).ok


def test_gen_Z_gram_constraints():
    rng = np.random.default_rng(3)
    design = SimDesign(n=400, q=100, r=2, lambda_signal=0.2, tau=0.5)
    Z = gen_Z(design, rng)
    gram = Z.T @ Z / design.n
    np.testing.assert_allclose(np.diag(gram), np.ones(2), atol=1e-12)
    assert abs(gram[0, 1]) > 0.2  # correlation survives the rescale
    design0 = SimDesign(n=400, q=100, r=2, lambda_signal=0.2, tau=0.0)
    Z0 = gen_Z(design0, rng)
    np.testing.assert_allclose(Z0.T @ Z0 / design0.n, np.eye(2), atol=1e-12)


def test_sigma_tau_structure():
    # tau^{|l-h|} banded correlation target
    design = SimDesign(n=100_000, q=100, r=3, lambda_signal=0.2, tau=0.5, seed=0)
    rng = np.random.default_rng(4)
    Z = gen_Z(design, rng)
    gram = Z.T @ Z / design.n
    assert gram[0, 1] == pytest.approx(0.5, abs=0.02)
    assert gram[0, 2] == pytest.approx(0.25, abs=0.02)


def test_infeasible_debias_examples():
    rng = np.random.default_rng(5)
    A = np.zeros((30, 3))
    for l in range(3):
        A[l * 10 : (l + 1) * 10, l] = rng.uniform(1, 2, 10)
    # perfectly simple: the rotation offset is numerically zero
    debiased = infeasible_debias_varimax(A, A)
    assert np.abs(debiased - A).max() <= 1e-6
    # an estimate equal to the rotation optimum debiases exactly to the truth
    A_mixed = A.copy()
    A_mixed[29] = np.array([0.5, 0.3, 0.2])
    vres = varimax_rotate(A_mixed)
    _, _, v_aligned = align(vres.A_rot, A_mixed)
    debiased = infeasible_debias_varimax(A_mixed, v_aligned)
    np.testing.assert_allclose(debiased, A_mixed, atol=1e-8)


def test_streaming_moments_match_batch():
    rng = np.random.default_rng(6)
    xs = rng.standard_normal((25, 4, 2))
    mom = StreamingMoments()
    for x in xs:
        mom.add(x)
    np.testing.assert_allclose(mom.mean, xs.mean(axis=0), atol=1e-10)
    np.testing.assert_allclose(mom.variance, xs.var(axis=0, ddof=1), atol=1e-10)
    assert mom.count == 25


def _tiny_design(seed=7):
    return SimDesign(n=120, q=90, r=2, lambda_signal=0.4, tau=0.0, seed=seed)


def test_run_replications_determinism_and_structure():
    design = _tiny_design()
    kwargs = dict(methods=("oracle", "folomin_mcp"), n_reps=2, level=0.9)
    a = run_replications(design, **kwargs)
    b = run_replications(design, **kwargs)
    assert a.n_failed == 0
    np.testing.assert_array_equal(
        a.entry_mean_sq_err["folomin_mcp"], b.entry_mean_sq_err["folomin_mcp"]
    )
    np.testing.assert_array_equal(a.entry_coverage["oracle"], b.entry_coverage["oracle"])
    assert a.mean_coverage_A == b.mean_coverage_A
    # per-replication records carry per-entry metrics for every method
    rec = a.rep_results[0].per_method["folomin_mcp"]
    assert rec["cover_A"].shape == (design.q, design.r)
    assert rec["sq_err_A"].shape == (design.q, design.r)
    assert rec["cover_A"].dtype == bool


def test_run_replications_data_independent_of_methods():
    design = _tiny_design()
    a = run_replications(design, methods=("oracle",), n_reps=2)
    b = run_replications(design, methods=("oracle", "promax"), n_reps=2)
    np.testing.assert_array_equal(
        a.rep_results[0].A_star, b.rep_results[0].A_star
    )
    np.testing.assert_array_equal(
        a.entry_mean_sq_err["oracle"], b.entry_mean_sq_err["oracle"]
    )


def test_run_replications_workers_match_serial():
    design = _tiny_design()
    a = run_replications(design, methods=("oracle",), n_reps=3, workers=1)
    b = run_replications(design, methods=("oracle",), n_reps=3, workers=3)
    np.testing.assert_array_equal(a.entry_coverage["oracle"], b.entry_coverage["oracle"])


def test_run_replications_validation():
    design = _tiny_design()
    with pytest.raises(ValueError):
        run_replications(design, n_reps=0)
    with pytest.raises(ValueError):
        run_replications(design, methods=("oracle", "mystery"), n_reps=1)


def test_failures_are_recorded_not_silent():
    # a cluster slack below the noise level makes every candidate set a
    # singleton, so the initial rotation must fail on every replication
    design = SimDesign(n=40, q=30, r=2, lambda_signal=0.2, tau=0.0, seed=1, simple_fraction=0.14)
    summary = run_replications(design, methods=("folomin_mcp",), n_reps=2, delta_prime=1e-12)
    assert summary.n_failed == 2
    assert len(summary.failures) == 2
    assert all("rep" in f and "error" in f for f in summary.failures)
    assert summary.mean_coverage_A == {}
