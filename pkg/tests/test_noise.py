"""Tests for the counter-based increment streams."""

import numpy as np
import pytest

from ergosde import noise
from ergosde.noise import NoiseStream, _philox4x32_10


def _words(ctr, key):
    u64 = np.uint64
    out = _philox4x32_10(u64(ctr[0]), u64(ctr[1]), u64(ctr[2]), u64(ctr[3]), key[0], key[1])
    return [int(w) for w in out]


def test_philox_known_answers():
    # Random123 kat_vectors, philox4x32-10: counter words, key words -> output.
    assert _words([0, 0, 0, 0], [0, 0]) == [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]
    assert _words([0xFFFFFFFF] * 4, [0xFFFFFFFF] * 2) == [
        0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD,
    ]
    assert _words(
        [0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344], [0xA4093822, 0x299F31D0]
    ) == [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]


def test_increment_is_deterministic():
    s = NoiseStream(seed=123, trajectory_id=7)
    a = noise.increment(s, 41, 3, 0.02)
    b = noise.increment(s, 41, 3, 0.02)
    assert np.array_equal(a, b)
    assert a.shape == (3,)


def test_increment_addressing_consistency():
    # Single-draw, bulk, and ensemble views of the same address agree bitwise.
    s = NoiseStream(seed=9, trajectory_id=3)
    one = noise.increment(s, 37, 2, 0.5)
    bulk = noise.increments(s, 30, 10, 2, 0.5)[7]
    blk = noise.step_block(9, np.array([1, 3, 5]), 30, 10, 2, 0.5)[7, 1]
    ens = noise.ensemble_increments(9, [0, 3], 37, 2, 0.5)[1]
    assert np.array_equal(one, bulk)
    assert np.array_equal(one, blk)
    assert np.array_equal(one, ens)


def test_distinct_addresses_differ():
    s = NoiseStream(seed=5, trajectory_id=0)
    base = noise.increment(s, 0, 4, 1.0)
    assert not np.array_equal(base, noise.increment(s, 1, 4, 1.0))
    assert not np.array_equal(base, noise.increment(NoiseStream(5, 1), 0, 4, 1.0))
    assert not np.array_equal(base, noise.increment(NoiseStream(6, 0), 0, 4, 1.0))


def test_invalid_tau_rejected():
    s = NoiseStream(seed=0)
    with pytest.raises(ValueError):
        noise.increment(s, 0, 1, 0.0)
    with pytest.raises(ValueError):
        noise.increment(s, 0, 1, -1.0)


def test_increment_moments():
    # CLT bound: with 1e6 draws at tau=0.01, each coordinate mean is within
    # 4 * sd/sqrt(n) = 4e-4 of zero, and the variance within 1% of tau.
    s = NoiseStream(seed=2024, trajectory_id=0)
    x = noise.increments(s, 0, 1_000_000, 2, 0.01)
    assert np.all(np.abs(x.mean(axis=0)) < 4 * 0.1 / 1000.0)
    assert np.all(np.abs(x.var(axis=0) - 0.01) < 1e-4)


def test_stream_independence_proxy():
    n = 1_000_000
    a = noise.increments(NoiseStream(0, 1), 0, n, 1, 1.0)[:, 0]
    b = noise.increments(NoiseStream(0, 2), 0, n, 1, 1.0)[:, 0]
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 4.0 / np.sqrt(n)


def test_refine_single_panel_is_identity():
    s = NoiseStream(seed=3, trajectory_id=2)
    r = noise.refine(s, 11, 1, 3, 0.25)
    assert np.array_equal(r[0], noise.increment(s, 11, 3, 0.25))


@pytest.mark.parametrize("n_sub", [2, 4, 7, 16])
def test_refine_sums_to_coarse(n_sub):
    s = NoiseStream(seed=42, trajectory_id=0)
    for k in range(5):
        coarse = noise.increment(s, k, 2, 0.25)
        fine = noise.refine(s, k, n_sub, 2, 0.25)
        assert fine.shape == (n_sub, 2)
        np.testing.assert_allclose(fine.sum(axis=0), coarse, rtol=0, atol=1e-15)


def test_refine_is_reproducible():
    s = NoiseStream(seed=8, trajectory_id=1)
    a = noise.refine(s, 3, 8, 2, 0.1)
    b = noise.refine(s, 3, 8, 2, 0.1)
    assert np.array_equal(a, b)


def test_refine_rejects_bad_n_sub():
    with pytest.raises(ValueError):
        noise.refine(NoiseStream(0), 0, 0, 1, 0.1)


def test_refined_increment_distribution():
    # Pooled refined increments have variance tau/n_sub within chi-square
    # concentration (relative sd sqrt(2/n) ~ 0.5% for n = 8e4 draws).
    tau, n_sub = 0.01, 4
    r = noise.ensemble_refine(7, np.arange(20_000), 3, n_sub, 1, tau)
    v = r.ravel().var()
    assert abs(v - tau / n_sub) < 0.01 * (tau / n_sub)


def test_ensemble_refine_matches_scalar_refine():
    ids = np.array([0, 5, 9])
    ens = noise.ensemble_refine(13, ids, 21, 6, 2, 0.3)
    for row, tid in enumerate(ids):
        one = noise.refine(NoiseStream(13, int(tid)), 21, 6, 2, 0.3)
        np.testing.assert_array_equal(ens[row], one)


def test_uniforms_channel_plumbing():
    u = noise.uniforms(99, 1, 1000)
    assert u.shape == (1000,)
    assert np.all((u > 0.0) & (u < 1.0))
    # offset slicing is consistent with one big draw
    assert np.array_equal(u[123:456], noise.uniforms(99, 1, 333, start=123))
    # channels do not collide
    assert not np.array_equal(u, noise.uniforms(99, 2, 1000))
    with pytest.raises(ValueError):
        noise.uniforms(99, 0, 10)


def test_trajectory_id_range_checked():
    with pytest.raises(ValueError):
        NoiseStream(seed=0, trajectory_id=-1)
    with pytest.raises(ValueError):
        NoiseStream(seed=0, trajectory_id=1 << 32)
