"""Counter-based normal deviates shared by the compiled and pure-Python kernels.

Every deviate is a pure function of ``(key, counter)``: a SplitMix64 finalizer
hashes ``key + GOLDEN * (counter + 1)`` and a 256-layer ziggurat turns the hash
into a standard normal. Rejections draw further hashes from sub-keys
``mix(key ^ (e * SUBKEY_MULT))`` for ``e = 1, 2, ...`` in a fixed order, so any
implementation that follows the same recipe produces the same stream.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX_MULT1 = 0xBF58476D1CE4E5B9
MIX_MULT2 = 0x94D049BB133111EB
SUBKEY_MULT = 0xD1B54A32D192ED03

ZIG_R = 3.6541528853610088
ZIG_V = 0.00492867323399
TWO_POW_M52 = 2.0**-52
TWO_POW_M53 = 2.0**-53


def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    x = np.empty(257)
    x[0] = ZIG_V / math.exp(-0.5 * ZIG_R * ZIG_R)
    x[1] = ZIG_R
    for i in range(1, 255):
        x[i + 1] = math.sqrt(-2.0 * math.log(ZIG_V / x[i] + math.exp(-0.5 * x[i] * x[i])))
    x[256] = 0.0
    ratio = x[1:] / x[:-1]
    return x, ratio


ZIG_X, ZIG_RATIO = _build_tables()


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_MULT1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_MULT2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(MIX_MULT1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(MIX_MULT2)
    return z ^ (z >> np.uint64(31))


def subkey(key: int, e: int) -> int:
    return mix64(key ^ ((e * SUBKEY_MULT) & MASK64))


def hash_at(key: int, counter: int) -> int:
    return mix64(key + GOLDEN * (counter + 1))


def uniform_open(h: int) -> float:
    """Uniform on (0, 1] from a 64-bit hash."""
    return ((h >> 11) + 1) * TWO_POW_M53


def normal_slow(key: int, counter: int, h: int) -> float:
    """Finish a ziggurat draw whose fast-path test failed on hash ``h``."""
    e = 1
    while True:
        i = h & 255
        u = ((h >> 11) + 0.5) * TWO_POW_M52 - 1.0
        if abs(u) < ZIG_RATIO[i]:
            return u * ZIG_X[i]
        if i == 0:
            while True:
                a = -math.log(uniform_open(hash_at(subkey(key, e), counter))) / ZIG_R
                b = -math.log(uniform_open(hash_at(subkey(key, e + 1), counter)))
                e += 2
                if 2.0 * b > a * a:
                    return -(ZIG_R + a) if u < 0.0 else ZIG_R + a
        xx = u * ZIG_X[i]
        f0 = math.exp(-0.5 * (ZIG_X[i] * ZIG_X[i] - xx * xx))
        f1 = math.exp(-0.5 * (ZIG_X[i + 1] * ZIG_X[i + 1] - xx * xx))
        w = uniform_open(hash_at(subkey(key, e), counter))
        e += 1
        if f1 + w * (f0 - f1) < 1.0:
            return xx
        h = hash_at(subkey(key, e), counter)
        e += 1


def normals(key: int, counter0: int, n: int) -> np.ndarray:
    """Standard normals for counters ``counter0 .. counter0 + n - 1``."""
    ctr = np.arange(counter0 + 1, counter0 + n + 1, dtype=np.uint64)
    h = mix64_array(np.uint64(key) + np.uint64(GOLDEN) * ctr)
    idx = (h & np.uint64(255)).astype(np.intp)
    u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) * TWO_POW_M52 - 1.0
    out = u * ZIG_X[idx]
    for j in np.nonzero(np.abs(u) >= ZIG_RATIO[idx])[0]:
        out[j] = normal_slow(key, counter0 + int(j), int(h[j]))
    return out


def uniforms(key: int, counter0: int, n: int) -> np.ndarray:
    """Uniforms on [0, 1) for counters ``counter0 .. counter0 + n - 1``."""
    ctr = np.arange(counter0 + 1, counter0 + n + 1, dtype=np.uint64)
    h = mix64_array(np.uint64(key) + np.uint64(GOLDEN) * ctr)
    return (h >> np.uint64(11)).astype(np.float64) * TWO_POW_M53
