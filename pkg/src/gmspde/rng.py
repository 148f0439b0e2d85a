"""Counter-based random number generation.

Every Gaussian draw used by the noise model is a pure function of a
5-tuple of integers (master_seed, path_index, stream, mode, step).  The
tuple is mapped through a vectorized Philox4x64-10 block cipher, so any
sub-table of draws can be regenerated in isolation: ensemble workers,
mode-count refinement and time-grid coupling all see the same numbers
regardless of evaluation order.

The block function is bit-identical to ``numpy.random.Philox`` (same
constants, same round structure); a regression test pins this so the
tables can be reproduced outside this package if ever needed.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

# uniform conversion: 53 mantissa bits, strictly inside (0, 1)
_U53 = 2.0 ** -53
_S11 = np.uint64(11)


def _mulhilo(a, b):
    """128-bit product of uint64 arrays, returned as (high, low) words."""
    lo = a * b
    ah, al = a >> _S32, a & _MASK32
    bh, bl = b >> _S32, b & _MASK32
    t = al * bl
    w = ah * bl + (t >> _S32)
    w2 = al * bh + (w & _MASK32)
    hi = ah * bh + (w >> _S32) + (w2 >> _S32)
    return hi, lo


def philox4x64(counter, key):
    """Philox4x64-10 block function, vectorized over leading axes.

    Parameters
    ----------
    counter : uint64 array, shape (..., 4)
    key : uint64 array, shape (..., 2), broadcastable against counter

    Returns
    -------
    uint64 array of shape (..., 4): the cipher output block.
    """
    counter = np.asarray(counter, dtype=np.uint64)
    key = np.asarray(key, dtype=np.uint64)
    c0 = counter[..., 0].copy()
    c1 = counter[..., 1].copy()
    c2 = counter[..., 2].copy()
    c3 = counter[..., 3].copy()
    k0 = np.broadcast_to(key[..., 0], c0.shape).copy()
    k1 = np.broadcast_to(key[..., 1], c0.shape).copy()
    with np.errstate(over="ignore"):
        for _ in range(10):
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return np.stack([c0, c1, c2, c3], axis=-1)


def _bits_to_uniform(bits):
    # top 53 bits, offset by half an ulp: result lies strictly in (0, 1)
    return ((bits >> _S11).astype(np.float64) + 0.5) * _U53


def normal_table(master_seed, path_index, stream, modes, steps):
    """Standard-normal draws for a (stream, mode, step) index box.

    Draw (k, n) is a pure function of (master_seed, path_index, stream,
    modes[k], steps[n]); the same indices always return the same value.

    Parameters
    ----------
    master_seed, path_index : nonnegative ints (< 2**64)
    stream : small nonnegative int distinguishing independent noise uses
    modes, steps : 1-d integer arrays of indices

    Returns
    -------
    float64 array of shape (len(modes), len(steps)).
    """
    modes = np.asarray(modes, dtype=np.uint64)
    steps = np.asarray(steps, dtype=np.uint64)
    km, kn = np.meshgrid(modes, steps, indexing="ij")
    counter = np.empty(km.shape + (4,), dtype=np.uint64)
    counter[..., 0] = kn
    counter[..., 1] = km
    counter[..., 2] = np.uint64(stream)
    counter[..., 3] = np.uint64(0)
    key = np.array([master_seed, path_index], dtype=np.uint64)
    blocks = philox4x64(counter, key)
    return ndtri(_bits_to_uniform(blocks[..., 0]))


def normal_batch(master_seed, path_indices, stream, mode, step):
    """One draw per path index, for vectorized moment checks.

    Returns the same numbers ``normal_table`` would produce one path at a
    time, in one call over ``path_indices``.
    """
    path_indices = np.asarray(path_indices, dtype=np.uint64)
    counter = np.empty(path_indices.shape + (4,), dtype=np.uint64)
    counter[..., 0] = np.uint64(step)
    counter[..., 1] = np.uint64(mode)
    counter[..., 2] = np.uint64(stream)
    counter[..., 3] = np.uint64(0)
    key = np.empty(path_indices.shape + (2,), dtype=np.uint64)
    key[..., 0] = np.uint64(master_seed)
    key[..., 1] = path_indices
    blocks = philox4x64(counter, key)
    return ndtri(_bits_to_uniform(blocks[..., 0]))
