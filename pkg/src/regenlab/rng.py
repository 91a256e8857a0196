"""Counter-based hashing used for every random draw in the package.

Every random quantity is a pure function of a 64-bit key and a counter, so
replicates can be generated in any order (or in parallel) and replayed
bit-for-bit.  The mixing function is the SplitMix64 finalizer.

The compiled kernel (``_kernels.pyx``) and the numpy fallback
(``_pykernels.py``) implement the same arithmetic; the scalar versions here
are the reference used for seed derivation and in tests.
"""

import zlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
TWO_POW_M53 = 1.0 / (1 << 53)

# Stream tags; stable integers so that derived seeds never change.
TAG_ENV = 1
TAG_SHIFT = 2
TAG_NOISE = 3
TAG_LAMBDA = 4
TAG_BRIDGE = 5
TAG_THIN = 6
TAG_PAIR = 7
TAG_PROBE = 8


def mix64(z):
    z &= MASK64
    z ^= z >> 30
    z = (z * _M1) & MASK64
    z ^= z >> 27
    z = (z * _M2) & MASK64
    z ^= z >> 31
    return z


def stream(key, ctr):
    """The ``ctr``-th 64-bit output of the stream keyed by ``key``."""
    return mix64((key + (ctr + 1) * GOLDEN) & MASK64)


def combine(h, v):
    """Fold an integer (possibly negative) into a running hash."""
    return mix64(h ^ mix64((v + GOLDEN) & MASK64))


def _tag_value(tag):
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag)


def derive_seed(master, *tags):
    """Derive an independent 64-bit key from a master seed and a tag path."""
    h = mix64(int(master) & MASK64)
    for t in tags:
        h = combine(h, _tag_value(t))
    return h


def uniform(key, ctr):
    """Uniform double in [0, 1)."""
    return (stream(key, ctr) >> 11) * TWO_POW_M53


# -- vectorized (numpy uint64) versions -------------------------------------

_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_UM1 = np.uint64(_M1)
_UM2 = np.uint64(_M2)
_UG = np.uint64(GOLDEN)


def mix64_np(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z ^ (z >> _U30)
        z = z * _UM1
        z = z ^ (z >> _U27)
        z = z * _UM2
        return z ^ (z >> _U31)


def stream_np(key, ctr):
    key = np.asarray(key, dtype=np.uint64)
    ctr = np.asarray(ctr, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_np(key + (ctr + np.uint64(1)) * _UG)


def combine_np(h, v):
    h = np.asarray(h, dtype=np.uint64)
    v = np.asarray(v, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        return mix64_np(h ^ mix64_np(v + _UG))


def uniform_np(key, ctr):
    return (stream_np(key, ctr) >> _U11).astype(np.float64) * TWO_POW_M53


def bernoulli_np(key, n, p):
    """``n`` Bernoulli(p) draws from the stream ``key`` as a uint8 array."""
    if n <= 0:
        return np.zeros(0, dtype=np.uint8)
    u = uniform_np(np.full(n, key, dtype=np.uint64), np.arange(n, dtype=np.uint64))
    return (u < p).astype(np.uint8)
