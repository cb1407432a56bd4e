"""Counter-based normal variates.

Every Gaussian used by the samplers is a pure function of
``(seed, sample, step, stream, particle)``; nothing depends on the order in
which samples are processed or on how they are split across workers.
The bit source is Philox-4x32-10, vectorised over counters with numpy.
"""
from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def philox4x32(counter, key, rounds=10):
    """Philox-4x32 block function.

    Parameters
    ----------
    counter : array of shape (..., 4), integer words < 2**32
    key : pair of 32-bit words (broadcast against ``counter[..., 0]``)

    Returns
    -------
    ndarray of shape (..., 4), dtype uint64 holding 32-bit words
    """
    c = np.asarray(counter, dtype=np.uint64)
    c0, c1, c2, c3 = (c[..., i] & _MASK32 for i in range(4))
    k0 = np.asarray(key[0], dtype=np.uint64) & _MASK32
    k1 = np.asarray(key[1], dtype=np.uint64) & _MASK32
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _S32, p0 & _MASK32
        hi1, lo1 = p1 >> _S32, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return np.stack([c0, c1, c2, c3], axis=-1)


def _seed_key(seed):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


def standard_normals(seed, samples, step, stream, n):
    """Gaussian block of shape ``(len(samples), n)``.

    Row ``r`` depends only on ``(seed, samples[r], step, stream)``; column
    ``i`` is the variate of particle ``i``.  ``stream`` separates independent
    uses inside one step (the initial cluster, bisection refinements, ...).
    """
    samples = np.atleast_1d(np.asarray(samples, dtype=np.uint64))
    step = np.broadcast_to(np.asarray(step, dtype=np.uint64), samples.shape)
    stream = np.broadcast_to(np.asarray(stream, dtype=np.uint64), samples.shape)
    pairs = (n + 1) // 2
    ctr = np.empty(samples.shape + (pairs, 4), dtype=np.uint64)
    ctr[..., 0] = np.arange(pairs, dtype=np.uint64)
    ctr[..., 1] = (step & _MASK32)[:, None]
    ctr[..., 2] = (samples & _MASK32)[:, None]
    # high step bits share the last word with the stream id
    ctr[..., 3] = (((step >> _S32) << np.uint64(20)) ^ stream)[:, None] & _MASK32
    words = philox4x32(ctr, _seed_key(seed))
    # 53-bit uniforms in (0, 1]; the +1 keeps log() finite
    u1 = (((words[..., 0] >> np.uint64(5)) << np.uint64(26)) | (words[..., 1] >> np.uint64(6)))
    u2 = (((words[..., 2] >> np.uint64(5)) << np.uint64(26)) | (words[..., 3] >> np.uint64(6)))
    scale = 1.0 / 9007199254740992.0
    u1 = (u1.astype(np.float64) + 1.0) * scale
    u2 = u2.astype(np.float64) * scale
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(samples.shape + (2 * pairs,))
    z[..., 0::2] = r * np.cos(theta)
    z[..., 1::2] = r * np.sin(theta)
    return z[..., :n]
