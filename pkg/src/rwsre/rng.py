"""Counter-based random streams and scalar samplers.

Every random quantity in this package is a pure function of a 64-bit key and
a counter.  Keys are derived by hashing small integer tuples (seed, purpose,
index, ...), so replicas, environment blocks, and trajectories can be
regenerated in any order, on any worker, with bit-identical results.

The generator is splitmix64.  Output n of the stream keyed by ``key`` is
``finalize(key + (n+1)*GOLDEN)``, which is exactly what the sequential numba
helpers walk through, so vectorized and step-by-step consumers of the same
key see the same numbers.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_MASK = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_B = np.uint64(0xBF58476D1CE4E5B9)
_MIX_C = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)

_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# Largest population a branching kernel will accept before raising the
# overflow guard; comfortably below 2**63 so downstream int64 sums stay safe.
OVERFLOW_LIMIT = 1 << 62
_OVERFLOW_F = float(OVERFLOW_LIMIT)

# Purpose tags for key derivation.  Distinct tags keep streams for different
# uses disjoint even when seed and index coincide.
ENV_XI = 1
ENV_LAMBDA = 2
WALK = 3
BRANCH = 4
POTENTIAL_XI = 5
POTENTIAL_LAMBDA = 6
BESSEL = 7
EPOCH = 8
GENERIC = 9


def derive_key(*parts: int) -> int:
    """Hash a tuple of integers into a 64-bit stream key.

    Each part is absorbed and the state passed through the splitmix64
    finalizer, so (a, b) and (b, a) give unrelated keys.
    """
    h = 0x243F6A8885A308D3
    for p in parts:
        h = (h + (int(p) & _MASK)) & _MASK
        h ^= h >> 30
        h = (h * 0xBF58476D1CE4E5B9) & _MASK
        h ^= h >> 27
        h = (h * 0x94D049BB133111EB) & _MASK
        h ^= h >> 31
    return h


def stream_u64(key: int, counters) -> np.ndarray:
    """Raw 64-bit outputs of the stream at the given counters (vectorized)."""
    c = np.atleast_1d(np.asarray(counters, dtype=np.uint64))
    z = np.uint64(key & _MASK) + (c + _ONE) * _GOLDEN
    z = (z ^ (z >> _S30)) * _MIX_B
    z = (z ^ (z >> _S27)) * _MIX_C
    return z ^ (z >> _S31)


def stream_uniforms(key: int, counters) -> np.ndarray:
    """Uniforms in (0, 1] at the given counters, 53-bit resolution."""
    return ((stream_u64(key, counters) >> _S11) + _ONE) * _INV53


def stream_normals(key: int, counters) -> np.ndarray:
    """Standard normals, one per counter, via Box-Muller on counters 2c, 2c+1."""
    c = np.atleast_1d(np.asarray(counters, dtype=np.uint64))
    u1 = stream_uniforms(key, c * _TWO)
    u2 = stream_uniforms(key, c * _TWO + _ONE)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


# ===================================================================
# numba scalar samplers
#
# All take and return an explicit uint64 state so kernels can thread a
# stream through arbitrary control flow.  Seed a kernel with
# np.uint64(derive_key(...)).  These are meant to be called from other
# jitted code; from Python, prefer the stream_* functions or the batch
# helpers at the bottom (state boxed back to Python may not fit int64,
# so re-entering the dispatcher with it can overflow).
# ===================================================================


@njit(cache=True)
def unit_from(state):
    """Advance one step; return (u, state) with u in (0, 1]."""
    # Cast guards against int64-typed states leaking in across the Python
    # boundary (numba boxes uint64 returns as plain ints).
    state = np.uint64(state) + _GOLDEN
    z = state
    z = (z ^ (z >> _S30)) * _MIX_B
    z = (z ^ (z >> _S27)) * _MIX_C
    z = z ^ (z >> _S31)
    return ((z >> _S11) + _ONE) * _INV53, state


@njit(cache=True)
def geometric_from(state, p):
    """Geo(p) on {0,1,2,...}: P[G=m] = p(1-p)^m."""
    u, state = unit_from(state)
    if p >= 1.0:
        return 0, state
    return int(math.log(u) / math.log1p(-p)), state


@njit(cache=True)
def normal_from(state):
    u1, state = unit_from(state)
    u2, state = unit_from(state)
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(6.283185307179586 * u2), state


@njit(cache=True)
def gamma_from(state, shape):
    """Gamma(shape, 1) for shape >= 1 by squeeze-and-accept on a cubed normal."""
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x, state = normal_from(state)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u, state = unit_from(state)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v, state
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v, state


@njit(cache=True)
def poisson_from(state, lam):
    """Poisson(lam): product method below 10, transformed rejection above."""
    if lam <= 0.0:
        return 0, state
    if lam < 10.0:
        limit = math.exp(-lam)
        k = 0
        prod = 1.0
        while True:
            u, state = unit_from(state)
            prod *= u
            if prod <= limit:
                return k, state
            k += 1
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u, state = unit_from(state)
        u -= 0.5
        v, state = unit_from(state)
        us = 0.5 - abs(u)
        k = int(math.floor((2.0 * a / us + b) * u + lam + 0.43))
        if us >= 0.07 and v <= v_r:
            return k, state
        if k < 0:
            continue
        if us < 0.013 and v > us:
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)
                <= k * math.log(lam) - lam - math.lgamma(k + 1.0)):
            return k, state


@njit(cache=True)
def negbin_from(state, r, p):
    """Sum of r i.i.d. Geo(p) on {0,1,...} in O(1) expected time.

    Small r sums geometrics directly; larger r uses the gamma-Poisson
    mixture NB(r, p) = Poisson(Gamma(r) * (1-p)/p).  Returns -1 instead of
    a count when the mixture mean would endanger 64-bit arithmetic.
    """
    if r <= 0:
        return 0, state
    if r < 16:
        total = 0
        lq = math.log1p(-p)
        for _ in range(r):
            u, state = unit_from(state)
            total += int(math.log(u) / lq)
        return total, state
    g, state = gamma_from(state, float(r))
    lam = g * (1.0 - p) / p
    if lam > _OVERFLOW_F:
        return -1, state
    return poisson_from(state, lam)


# ===================================================================
# batch helpers: one key, n draws, all state threading kept inside numba
# ===================================================================


@njit(cache=True)
def batch_geometric(key, p, n):
    out = np.empty(n, dtype=np.int64)
    state = np.uint64(key)
    for i in range(n):
        out[i], state = geometric_from(state, p)
    return out


@njit(cache=True)
def batch_poisson(key, lam, n):
    out = np.empty(n, dtype=np.int64)
    state = np.uint64(key)
    for i in range(n):
        out[i], state = poisson_from(state, lam)
    return out


@njit(cache=True)
def batch_gamma(key, shape, n):
    out = np.empty(n, dtype=np.float64)
    state = np.uint64(key)
    for i in range(n):
        out[i], state = gamma_from(state, shape)
    return out


@njit(cache=True)
def batch_negbin(key, r, p, n):
    out = np.empty(n, dtype=np.int64)
    state = np.uint64(key)
    for i in range(n):
        out[i], state = negbin_from(state, r, p)
    return out
