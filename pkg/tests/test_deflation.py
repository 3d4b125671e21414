import numpy as np
import pytest

from spiked_deflation.deflation import (
    ConvergenceError,
    PowerIterOptions,
    best_rank1,
    deflate,
    summary_statistics,
)
from spiked_deflation.rmt_kernel import threshold
from spiked_deflation.spike_model import SpikeParams, ground_truth, sample_noise, sample_spiked_tensor
from spiked_deflation.symtensor import SymmetricTensor, contract, rank1, unit_vector

OPTS = PowerIterOptions(max_iters=5000)


def _orthogonal_pair(n, seed=0):
    Q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, 2)))
    return Q[:, 0], Q[:, 1]


def test_single_spike_noiseless():
    x = unit_vector(np.random.default_rng(1).standard_normal(20))
    fit = best_rank1(rank1(3.0, x, 3), OPTS)
    assert fit.lambda_hat == pytest.approx(3.0, abs=1e-8)
    assert min(np.linalg.norm(fit.u - x), np.linalg.norm(fit.u + x)) <= 1e-8
    assert fit.eig_residual <= 1e-8
    assert not fit.global_certified


def _circle_max(b1, b2, d=3):
    # brute force over the 2-D reduced objective on the unit circle
    th = np.linspace(0, 2 * np.pi, 200_001)
    vals = b1 * np.cos(th) ** d + b2 * np.sin(th) ** d
    k = np.argmax(vals)
    return vals[k], th[k]


def test_two_orthogonal_spikes_picks_strongest():
    x1, x2 = _orthogonal_pair(15)
    T = rank1(5.0, x1, 3) + rank1(2.0, x2, 3)
    best, angle = _circle_max(5.0, 2.0)
    fit = best_rank1(T, OPTS)
    assert fit.lambda_hat == pytest.approx(best, abs=1e-8)
    target = np.cos(angle) * x1 + np.sin(angle) * x2
    assert np.linalg.norm(fit.u - target) <= 1e-6


def test_odd_order_sign_convention():
    x = unit_vector(np.random.default_rng(4).standard_normal(10))
    fit = best_rank1(rank1(2.0, x, 3) * -1.0 + rank1(0.5, -x, 3) * -1.0, OPTS)
    # -2 x^3 + 0.5 x^3 = -1.5 x^3 = 1.5 (-x)^3
    assert fit.lambda_hat == pytest.approx(1.5, abs=1e-8)
    assert fit.u @ x == pytest.approx(-1.0, abs=1e-8)


def test_even_order_supported():
    x = unit_vector(np.random.default_rng(5).standard_normal(8))
    fit = best_rank1(rank1(2.0, x, 4), OPTS)
    assert fit.lambda_hat == pytest.approx(2.0, abs=1e-8)
    assert abs(fit.u @ x) == pytest.approx(1.0, abs=1e-8)


def test_convergence_error_carries_residual():
    T = SymmetricTensor(sample_noise(30, 3, 0).entries / np.sqrt(30))
    with pytest.raises(ConvergenceError) as info:
        best_rank1(T, PowerIterOptions(max_iters=2, restarts=3))
    assert np.isfinite(info.value.best_residual)


def test_options_validation():
    with pytest.raises(ValueError):
        PowerIterOptions(tol=0.0)
    with pytest.raises(ValueError):
        PowerIterOptions(restarts=0)


def test_restart_winner_is_deterministic():
    T = SymmetricTensor(sample_noise(25, 3, 1).entries / 5.0) + rank1(3.0, np.eye(25)[0], 3)
    a = best_rank1(T, PowerIterOptions(seed=3))
    b = best_rank1(T, PowerIterOptions(seed=3))
    assert np.array_equal(a.u, b.u) and a.lambda_hat == b.lambda_hat


def test_pure_noise_maximum_near_threshold():
    n = 100
    edge = threshold(3)
    lams = []
    for seed in range(20):
        T = SymmetricTensor(sample_noise(n, 3, seed).entries / np.sqrt(n))
        lams.append(best_rank1(T, PowerIterOptions(max_iters=5000, seed=seed)).lambda_hat)
    lams = np.array(lams)
    inside = (lams >= 0.8 * edge) & (lams <= 1.2 * edge)
    assert inside.mean() >= 0.9
    assert 0.8 * edge <= np.median(lams) <= 1.2 * edge


def test_deflate_noiseless_orthogonal():
    n = 30
    x1, x2 = _orthogonal_pair(n, 2)
    params = SpikeParams(n=n, d=3, beta=(5.0, 2.0), gram=np.eye(2), noise_scale=0.0)
    truth = ground_truth(params)
    S = sample_spiked_tensor(truth)
    result, stats = deflate(S, 2, truth, OPTS)
    np.testing.assert_allclose(stats.lambda_hat, [5.0, 2.0], atol=1e-8)
    assert abs(stats.rho_hat[0, 0]) == pytest.approx(1.0, abs=1e-8)
    assert abs(stats.rho_hat[1, 1]) == pytest.approx(1.0, abs=1e-8)
    assert abs(stats.eta_hat[0, 1]) <= 1e-8


def test_deflate_r1_matches_best_rank1():
    truth = ground_truth(SpikeParams(n=20, d=3, beta=(4.0,), gram=[[1.0]], seed=3))
    S = sample_spiked_tensor(truth)
    opts = PowerIterOptions(seed=11)
    result, _ = deflate(S, 1, truth, opts)
    fit = best_rank1(S, opts)
    assert np.array_equal(result.fits[0].u, fit.u)
    assert result.fits[0].lambda_hat == fit.lambda_hat


def test_deflation_identity_and_certificates():
    truth = ground_truth(SpikeParams.rank2(25, 3, 6.0, 4.0, 0.4, seed=8))
    S = sample_spiked_tensor(truth)
    result, stats = deflate(S, 2, truth, OPTS, keep_tensors=True)
    assert len(result.tensors) == 3
    expected = S.entries.copy()
    for f in result.fits:
        expected -= rank1(f.lambda_hat, f.u, 3).entries
    assert np.max(np.abs(result.tensors[-1].entries - expected)) <= 1e-10
    assert np.array_equal(result.reconstruct(S).entries, result.tensors[-1].entries)
    for T, f in zip(result.tensors, result.fits):
        assert f.eig_residual <= 10 * OPTS.tol
        assert f.matrix_residual <= 10 * OPTS.tol
        M = contract(T, f.u, 1).entries
        assert np.linalg.norm(M @ f.u - f.lambda_hat * f.u) <= 10 * OPTS.tol
        assert f.lambda_hat == pytest.approx(contract(T, f.u, 3), abs=1e-12)


def test_summary_statistics_invariants():
    truth = ground_truth(SpikeParams.rank2(40, 3, 7.0, 4.0, 0.4, seed=2))
    result, stats = deflate(sample_spiked_tensor(truth), 2, truth, OPTS)
    np.testing.assert_allclose(np.diag(stats.eta_hat), 1.0, atol=1e-10)
    np.testing.assert_allclose(stats.eta_hat, stats.eta_hat.T, atol=1e-15)
    assert np.all(np.abs(stats.rho_hat) <= 1 + 1e-10)
    again = summary_statistics(result.fits, truth)
    np.testing.assert_array_equal(again.rho_hat, stats.rho_hat)


def test_noiseless_r1_alignment():
    truth = ground_truth(SpikeParams(n=12, d=3, beta=(2.0,), gram=[[1.0]], noise_scale=0.0))
    _, stats = deflate(sample_spiked_tensor(truth), 1, truth, OPTS)
    assert abs(stats.rho_hat[0, 0]) == pytest.approx(1.0, abs=1e-10)


def test_first_step_follows_strongest_component():
    truth = ground_truth(SpikeParams.rank2(100, 3, 8.0, 5.0, 0.4, seed=21))
    _, stats = deflate(sample_spiked_tensor(truth), 2, truth, OPTS)
    assert stats.rho_hat[0, 0] > stats.rho_hat[0, 1]


def test_alignment_concentrates_over_seeds():
    rho11 = []
    for seed in range(20):
        truth = ground_truth(SpikeParams.rank2(100, 3, 8.0, 5.0, 0.4, seed=seed))
        _, stats = deflate(sample_spiked_tensor(truth), 2, truth,
                           PowerIterOptions(max_iters=5000, seed=seed))
        rho11.append(stats.rho_hat[0, 0])
    assert np.std(rho11, ddof=1) < 0.05


def test_objective_monotone_noiseless():
    x1, x2 = _orthogonal_pair(20, 6)
    for T in (rank1(3.0, x1, 3), rank1(5.0, x1, 3) + rank1(2.0, x2, 3)):
        assert best_rank1(T, OPTS).monotone


def test_monotone_flag_is_diagnostic_only():
    # an early dip along a random restart is flagged but does not invalidate the fit
    truth = ground_truth(SpikeParams.rank2(30, 3, 6.0, 3.0, 0.2, seed=4))
    fit = best_rank1(sample_spiked_tensor(truth), OPTS)
    assert isinstance(fit.monotone, bool)
    assert fit.eig_residual <= 10 * OPTS.tol


def test_convergence_error_annotated_with_step():
    truth = ground_truth(SpikeParams.rank2(30, 3, 6.0, 3.0, 0.2, seed=4))
    with pytest.raises(ConvergenceError) as info:
        deflate(sample_spiked_tensor(truth), 2, truth, PowerIterOptions(max_iters=1, restarts=2))
    assert info.value.step == 1
