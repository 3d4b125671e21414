import numpy as np
import pytest

from spiked_deflation.spike_model import (
    GroundTruth,
    ModelError,
    SpikeParams,
    correlated_unit_vectors,
    ground_truth,
    sample_noise,
    sample_spiked_tensor,
    stream_rng,
)
from spiked_deflation.symtensor import contract, unit_vector


@pytest.mark.parametrize("alpha", [0.4, -0.3, 0.0, 0.95])
def test_gram_reproduced(alpha):
    X = correlated_unit_vectors(50, [[1, alpha], [alpha, 1]], seed=7)
    np.testing.assert_allclose(X @ X.T, [[1, alpha], [alpha, 1]], atol=1e-10, rtol=0)


def test_general_gram_r3():
    gram = np.array([[1, 0.3, -0.2], [0.3, 1, 0.5], [-0.2, 0.5, 1]])
    X = correlated_unit_vectors(30, gram, seed=1)
    assert np.max(np.abs(X @ X.T - gram)) <= 1e-10


def test_singular_psd_gram_is_accepted():
    X = correlated_unit_vectors(10, [[1, 1], [1, 1]], seed=0)
    np.testing.assert_allclose(X[0], X[1], atol=1e-10)


def test_non_psd_gram_rejected():
    with pytest.raises(ModelError):
        correlated_unit_vectors(10, [[1, 1.5], [1.5, 1]], seed=0)


def test_too_many_components():
    with pytest.raises(ValueError):
        correlated_unit_vectors(2, np.eye(3), seed=0)


def test_params_validation():
    with pytest.raises(ModelError):
        SpikeParams.rank2(10, 3, -1.0, 5.0, 0.4)
    with pytest.raises(ModelError):
        SpikeParams(n=10, d=3, beta=(1.0,), gram=[[2.0]])
    with pytest.raises(ModelError):
        SpikeParams(n=10, d=1, beta=(1.0,), gram=[[1.0]])


def test_noise_is_deterministic():
    a = sample_noise(12, 3, seed=99)
    b = sample_noise(12, 3, seed=99)
    c = sample_noise(12, 3, seed=100)
    assert np.array_equal(a.entries, b.entries)
    assert not np.array_equal(a.entries, c.entries)
    assert a.is_symmetric()


def test_noise_mean_near_zero():
    W = sample_noise(50, 3, seed=3)
    assert W.entries.size >= 10**5
    assert abs(W.entries.mean()) < 0.01


def test_spiked_tensor_bitwise_reproducible():
    p = SpikeParams.rank2(20, 3, 3.0, 5.0, 0.4, seed=5)
    S1 = sample_spiked_tensor(ground_truth(p))
    S2 = sample_spiked_tensor(ground_truth(p))
    assert np.array_equal(S1.entries, S2.entries)


def test_noiseless_contractions():
    p = SpikeParams(n=15, d=3, beta=(4.0,), gram=[[1.0]], noise_scale=0.0, seed=1)
    tr = ground_truth(p)
    assert contract(sample_spiked_tensor(tr), tr.components[0], 3) == pytest.approx(4.0, abs=1e-12)

    alpha = 0.4
    p = SpikeParams.rank2(15, 3, 3.0, 5.0, alpha, noise_scale=0.0, seed=2)
    tr = ground_truth(p)
    S = sample_spiked_tensor(tr)
    assert contract(S, tr.components[0], 3) == pytest.approx(3.0 + 5.0 * alpha**3, abs=1e-12)


def test_noisy_contraction_concentrates():
    n, alpha = 100, 0.4
    dev = []
    for seed in range(20):
        tr = ground_truth(SpikeParams.rank2(n, 3, 3.0, 5.0, alpha, seed=seed))
        val = contract(sample_spiked_tensor(tr), tr.components[0], 3)
        dev.append(abs(val - (3.0 + 5.0 * alpha**3)))
    assert max(dev) <= 5 / np.sqrt(n)


def test_noise_isotropy():
    n, seeds = 10, 400
    rng = np.random.default_rng(0)
    u = unit_vector(rng.standard_normal(n))
    v = unit_vector(rng.standard_normal(n))
    su, sv = [], []
    for s in range(seeds):
        W = sample_noise(n, 3, seed=s)
        su.append(contract(W, u, 3))
        sv.append(contract(W, v, 3))
    ratio = np.var(su) / np.var(sv)
    assert 0.8 <= ratio <= 1.2


def test_frame_and_noise_streams_are_independent():
    a = stream_rng(1, 0).standard_normal(5)
    b = stream_rng(1, 1).standard_normal(5)
    assert not np.allclose(a, b)
