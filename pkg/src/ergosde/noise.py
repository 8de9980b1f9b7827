"""Reproducible Brownian-increment streams.

Increments are addressed, not generated sequentially: the value of the k-th
increment of trajectory ``i`` under seed ``s`` is a pure function of
``(s, i, k, substep, coordinate)``.  The mixing function is Philox-4x32 with
10 rounds (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3"),
evaluated directly on numpy integer arrays so that arbitrary batches of
addresses vectorize.  Distinct trajectory ids occupy distinct counter lanes,
which makes streams statistically independent without any shared state, and
results never depend on scheduling or worker count.

Address layout: each (seed, trajectory, channel:substep) triple owns an
infinite word sequence; word ``k*m + coord`` carries coordinate ``coord`` of
the step-``k`` increment.  Words are packed two per Philox block:
counter = (block_lo, trajectory, block_hi, substep | channel << 16) with
block = word_index >> 1.

Uniform-to-Gaussian conversion uses the inverse normal CDF
(``scipy.special.ndtri``, the Cephes double-precision polynomial), so streams
are reproducible across platforms to the accuracy of that polynomial rather
than to the whims of a rejection sampler.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "NoiseStream",
    "increment",
    "increments",
    "ensemble_increments",
    "step_block",
    "refine",
    "ensemble_refine",
    "uniforms",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53

# c3 layout: low 16 bits substep, high 16 bits channel.
_CHANNEL_SHIFT = 16
GAUSS_CHANNEL = 0


def _philox4x32_10(c0, c1, c2, c3, k0, k1):
    """Ten Philox-4x32 rounds; lanes are uint64 arrays holding 32-bit values.

    ``k0``/``k1`` are python ints.  Inputs are consumed as scratch space.
    """
    c0 = np.array(c0, dtype=np.uint64, copy=True)
    c1 = np.array(c1, dtype=np.uint64, copy=True)
    c2 = np.array(c2, dtype=np.uint64, copy=True)
    c3 = np.array(c3, dtype=np.uint64, copy=True)
    shape = np.broadcast_shapes(c0.shape, c1.shape, c2.shape, c3.shape)
    c0, c1, c2, c3 = (np.broadcast_to(a, shape).copy() for a in (c0, c1, c2, c3))
    p0 = np.empty(shape, dtype=np.uint64)
    p1 = np.empty(shape, dtype=np.uint64)
    t = np.empty(shape, dtype=np.uint64)
    thirtytwo = np.uint64(32)
    for r in range(10):
        kr0 = np.uint64((k0 + r * _W0) & 0xFFFFFFFF)
        kr1 = np.uint64((k1 + r * _W1) & 0xFFFFFFFF)
        np.multiply(c0, _M0, out=p0)
        np.multiply(c2, _M1, out=p1)
        # new c2 = hi(p0) ^ old c3 ^ key1; new c3 = lo(p0)
        np.right_shift(p0, thirtytwo, out=t)
        np.bitwise_xor(t, c3, out=t)
        np.bitwise_xor(t, kr1, out=t)
        np.bitwise_and(p0, _MASK32, out=c3)
        # new c0 = hi(p1) ^ old c1 ^ key0; new c1 = lo(p1)
        np.right_shift(p1, thirtytwo, out=p0)
        np.bitwise_xor(p0, c1, out=p0)
        np.bitwise_xor(p0, kr0, out=p0)
        np.bitwise_and(p1, _MASK32, out=c1)
        c0, p0 = p0, c0
        c2, t = t, c2
    return c0, c1, c2, c3


def _to_unit(hi, lo, out):
    """Two 32-bit words -> one double, uniform on (0, 1)."""
    np.multiply((hi >> np.uint64(5)).astype(np.float64), 67108864.0, out=out)
    out += (lo >> np.uint64(6)).astype(np.float64)
    out += 0.5
    out *= _INV_2_53
    return out


def _split_seed(seed):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


def _unit_words(seed, traj, sub_chan, w_start, n_words):
    """Uniform(0,1) words [w_start, w_start+n_words) for each trajectory.

    ``traj`` is a 1-d uint64 array; returns shape (len(traj), n_words).
    """
    k0, k1 = _split_seed(seed)
    w_start = int(w_start)
    b0 = w_start >> 1
    n_blocks = ((w_start + n_words - 1) >> 1) - b0 + 1
    blocks = b0 + np.arange(n_blocks, dtype=np.uint64)
    c0 = blocks & _MASK32
    c2 = blocks >> np.uint64(32)
    x0, x1, x2, x3 = _philox4x32_10(
        c0[None, :], traj[:, None], c2[None, :], np.uint64(sub_chan), k0, k1
    )
    u = np.empty((traj.shape[0], 2 * n_blocks), dtype=np.float64)
    _to_unit(x0, x1, u[:, 0::2])
    _to_unit(x2, x3, u[:, 1::2])
    lo = w_start - 2 * b0
    return u[:, lo : lo + n_words]


def _normals(seed, traj, sub_chan, w_start, n_words):
    return ndtri(_unit_words(seed, traj, sub_chan, w_start, n_words))


def _check_tau(tau):
    if not (np.isfinite(tau) and tau > 0.0):
        raise ValueError(f"step size tau must be positive, got {tau}")


def _as_ids(trajectory_ids):
    ids = np.asarray(trajectory_ids, dtype=np.uint64)
    if ids.ndim != 1:
        raise ValueError("trajectory_ids must be one-dimensional")
    return ids


@dataclass(frozen=True)
class NoiseStream:
    """Addressable Wiener-increment stream for one trajectory.

    ``(seed, trajectory_id, k)`` fully determines the k-th increment block;
    there is no mutable position, so any number of readers may consume the
    stream concurrently and in any order.
    """

    seed: int
    trajectory_id: int = 0

    def __post_init__(self):
        if not 0 <= self.trajectory_id < (1 << 32):
            raise ValueError("trajectory_id out of range [0, 2^32)")


def increment(stream: NoiseStream, k: int, m: int, tau: float) -> np.ndarray:
    """Brownian increment over [k*tau, (k+1)*tau): an m-vector ~ N(0, tau I)."""
    _check_tau(tau)
    ids = np.array([stream.trajectory_id], dtype=np.uint64)
    z = _normals(stream.seed, ids, 0, k * m, m)
    return np.sqrt(tau) * z[0]


def increments(stream: NoiseStream, k0: int, n_steps: int, m: int, tau: float) -> np.ndarray:
    """Increments for steps k0 .. k0+n_steps-1, shape (n_steps, m)."""
    _check_tau(tau)
    ids = np.array([stream.trajectory_id], dtype=np.uint64)
    z = _normals(stream.seed, ids, 0, k0 * m, n_steps * m)
    return np.sqrt(tau) * z.reshape(n_steps, m)


def ensemble_increments(seed: int, trajectory_ids, k: int, m: int, tau: float) -> np.ndarray:
    """Step-k increments for many trajectories at once, shape (n_traj, m)."""
    _check_tau(tau)
    ids = _as_ids(trajectory_ids)
    z = _normals(seed, ids, 0, k * m, m)
    return np.sqrt(tau) * z


def step_block(seed: int, trajectory_ids, k0: int, n_steps: int, m: int, tau: float) -> np.ndarray:
    """Increments for a block of steps across an ensemble: (n_steps, n_traj, m)."""
    _check_tau(tau)
    ids = _as_ids(trajectory_ids)
    z = _normals(seed, ids, 0, k0 * m, n_steps * m)
    z = z.reshape(ids.shape[0], n_steps, m)
    return np.sqrt(tau) * np.moveaxis(z, 0, 1)


def _sub_chan(substep, channel=GAUSS_CHANNEL):
    if not 0 <= substep < (1 << 16):
        raise ValueError("substep out of range [0, 65535]")
    return (channel << _CHANNEL_SHIFT) | substep


def _bridge(coarse, z, n_sub, tau):
    """Split a coarse increment into n_sub exact-sum fine increments.

    Sequential conditional (Brownian-bridge) construction: each fine increment
    is drawn conditionally on the remaining sum, which reproduces the
    unconditional law of n_sub iid N(0, tau/n_sub) increments whose total is
    the coarse increment.  The last increment is the running remainder, so the
    sum matches the coarse increment to rounding.
    """
    h = tau / n_sub
    out = np.empty(coarse.shape[:-1] + (n_sub,) + coarse.shape[-1:], dtype=np.float64)
    remaining = coarse.copy()
    for i in range(n_sub - 1):
        r = n_sub - i
        inc = remaining / r + np.sqrt(h * (r - 1) / r) * z[..., i, :]
        out[..., i, :] = inc
        remaining = remaining - inc
    out[..., n_sub - 1, :] = remaining
    return out


def refine(stream: NoiseStream, k: int, n_sub: int, m: int, tau: float) -> np.ndarray:
    """n_sub iid N(0, (tau/n_sub) I) increments summing exactly to increment(k).

    Shape (n_sub, m).  Reproducible: the refinement of a given coarse step is
    itself addressed by (seed, trajectory_id, k, substep).
    """
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    coarse = increment(stream, k, m, tau)
    if n_sub == 1:
        return coarse[None, :]
    ids = np.array([stream.trajectory_id], dtype=np.uint64)
    z = np.stack(
        [_normals(stream.seed, ids, _sub_chan(s), k * m, m)[0] for s in range(1, n_sub)],
        axis=0,
    )
    return _bridge(coarse, np.moveaxis(z, 0, -2), n_sub, tau)


def ensemble_refine(seed: int, trajectory_ids, k: int, n_sub: int, m: int, tau: float) -> np.ndarray:
    """Vectorized refine across trajectories: shape (n_traj, n_sub, m)."""
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    ids = _as_ids(trajectory_ids)
    coarse = ensemble_increments(seed, ids, k, m, tau)
    if n_sub == 1:
        return coarse[:, None, :]
    z = np.stack(
        [_normals(seed, ids, _sub_chan(s), k * m, m) for s in range(1, n_sub)],
        axis=1,
    )
    return _bridge(coarse, z, n_sub, tau)


def uniforms(seed: int, channel: int, n: int, start: int = 0) -> np.ndarray:
    """Uniform(0,1) draws for non-trajectory plumbing (sampler grids etc.).

    ``channel`` must be >= 1; channel 0 carries trajectory noise.  Draw i of a
    channel is a pure function of (seed, channel, start + i).
    """
    if channel < 1 or channel >= (1 << 16):
        raise ValueError("channel out of range [1, 65535]")
    if n < 0:
        raise ValueError("n must be >= 0")
    ids = np.array([0], dtype=np.uint64)
    return _unit_words(seed, ids, _sub_chan(0, channel), start, n)[0]
