"""Functionals of the environment seen from a marked point.

Three objects drive the limit laws: the perpetuity ``rbar`` (the series
1 + rho_1 + rho_1 rho_2 + ...), the running maximum ``m_psi`` of the
per-block weight max(2*[xi > 1], 1 + rho) against the products
rho_1...rho_n, and the planar Bessel functional pairing a squared
two-dimensional Brownian modulus with an independent m_psi.  All
samplers draw block values from keyed counter streams, so any sample
can be recomputed in isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .env import EnvSpec, analyze_regime, sample_block_values
from .errors import (RegimeMismatchError, SeriesDivergenceError,
                     SpecValidationError)

_SAMPLE_STRIDE = 1 << 32  # counter = block * stride + sample index


def pi_product(rhos, first: int, last: int) -> float:
    """Product of rhos[first..last] (1-indexed, inclusive); empty -> 1.

    Falls back to a log-space evaluation whenever a partial product
    leaves [1e-300, 1e300], so long stretches neither overflow nor
    degrade to 0 prematurely.
    """
    seg = _segment(rhos, first, last)
    if seg.size == 0:
        return 1.0
    partial = np.cumsum(np.log(seg))
    if np.all(np.abs(partial) < 690.0):  # plain product stays in range
        return float(np.prod(seg))
    total = math.fsum(np.log(seg))
    if total > 709.0:
        return math.inf
    if total < -745.0:
        return 0.0
    return math.exp(total)


def pi_product_log(rhos, first: int, last: int) -> float:
    """log of the product of rhos[first..last]; exact-rounded summation."""
    seg = _segment(rhos, first, last)
    if seg.size == 0:
        return 0.0
    return math.fsum(np.log(seg))


def _segment(rhos, first: int, last: int) -> np.ndarray:
    arr = np.asarray(rhos, dtype=np.float64)
    if arr.ndim != 1:
        raise SpecValidationError("rhos must be a one-dimensional sequence")
    if first < 1 or last > arr.size:
        raise SpecValidationError(
            f"indices [{first}, {last}] outside 1..{arr.size}")
    if last < first:
        return np.empty(0)
    seg = arr[first - 1:last]
    if np.any(seg <= 0.0):
        raise SpecValidationError("rhos must be positive")
    return seg


# ===================================================================
# joint perpetuity / weight-maximum sampling
# ===================================================================


@dataclass
class PotentialTable:
    """Per-sample functionals of independently drawn environments.

    ``rbar[i]`` is the truncated perpetuity, ``m_psi[i]`` the weight
    maximum, split into its boundary term (the first block alone) and
    interior term (blocks two onward, damped by the products).
    ``residual_bound`` is the stopping diagnostic tol * window plus the
    final product: once that many consecutive products sit below tol,
    the discarded tail is of that order.
    """

    rbar: np.ndarray
    m_psi: np.ndarray
    boundary_term: np.ndarray
    interior_term: np.ndarray
    terms_used: np.ndarray
    residual_bound: np.ndarray

    def __len__(self) -> int:
        return self.rbar.size

    def row(self, i: int) -> "PotentialSample":
        return PotentialSample(
            rbar=float(self.rbar[i]), m_psi=float(self.m_psi[i]),
            terms_used=int(self.terms_used[i]),
            residual_bound=float(self.residual_bound[i]))


@dataclass(frozen=True)
class PotentialSample:
    rbar: float
    m_psi: float
    terms_used: int
    residual_bound: float


def _potential_batch(spec: EnvSpec, seed: int, n_samples: int, tol: float,
                     window: int, max_terms: int, start_block: int,
                     exact_terms: int | None) -> PotentialTable:
    if n_samples < 1:
        raise SpecValidationError("n_samples must be at least 1")
    if not tol > 0.0:
        raise SpecValidationError("tol must be positive")
    if window < 1 or max_terms < window:
        raise SpecValidationError("need window >= 1 and max_terms >= window")
    block_seed = rng.derive_key(seed, rng.POTENTIAL_XI)

    idx = np.arange(n_samples, dtype=np.int64)
    rbar = np.ones(n_samples)
    prod = np.ones(n_samples)
    boundary = np.zeros(n_samples)
    interior = np.zeros(n_samples)
    below = np.zeros(n_samples, dtype=np.int64)
    terms = np.zeros(n_samples, dtype=np.int64)
    last_prod = np.zeros(n_samples)
    active = np.ones(n_samples, dtype=bool)

    k = 0
    while np.any(active):
        k += 1
        if k > max_terms:
            raise SeriesDivergenceError(
                f"{int(active.sum())} samples still above tol after "
                f"{max_terms} blocks; spec is likely not contracting")
        rows = idx[active]
        codes = (start_block - 1 + k) * _SAMPLE_STRIDE + rows
        xi, lam = sample_block_values(spec, block_seed, codes)
        rho = (1.0 - lam) / lam
        weight = np.maximum(2.0 * (xi > 1), 1.0 + rho)
        if k == 1:
            boundary[rows] = weight
        else:
            interior[rows] = np.maximum(interior[rows], weight * prod[rows])
        prod[rows] *= rho
        rbar[rows] += prod[rows]
        below[rows] = np.where(prod[rows] < tol, below[rows] + 1, 0)
        if exact_terms is not None:
            finished = np.full(rows.size, k >= exact_terms)
        else:
            finished = below[rows] >= window
        if np.any(finished):
            stop = rows[finished]
            terms[stop] = k
            last_prod[stop] = prod[stop]
            active[stop] = False
    return PotentialTable(
        rbar=rbar, m_psi=np.maximum(boundary, interior),
        boundary_term=boundary, interior_term=interior, terms_used=terms,
        residual_bound=tol * window + last_prod)


def sample_rbar(spec: EnvSpec, seed: int, n_samples: int, tol: float = 1e-12,
                window: int = 20, max_terms: int = 10 ** 6,
                start_block: int = 1,
                exact_terms: int | None = None) -> PotentialTable:
    """Sample the perpetuity 1 + rho_1 + rho_1 rho_2 + ... per environment.

    Truncates once ``window`` consecutive products fall below ``tol``
    (or after exactly ``exact_terms`` blocks when given).  Block k of
    sample i is a pure function of (seed, start_block - 1 + k, i), so
    ``start_block=2`` reuses the same environments shifted one block.
    """
    return _potential_batch(spec, seed, n_samples, tol, window, max_terms,
                            start_block, exact_terms)


def sample_m_psi(spec: EnvSpec, seed: int, n_samples: int, tol: float = 1e-12,
                 window: int = 20, max_terms: int = 10 ** 6,
                 start_block: int = 1,
                 exact_terms: int | None = None) -> PotentialTable:
    """Sample max over n >= 0 of max(2*[xi_{n+1} > 1], 1 + rho_{n+1}) Pi_n.

    Drawn jointly with the perpetuity on the same environments; see
    sample_rbar for the stream layout and truncation rule.
    """
    return _potential_batch(spec, seed, n_samples, tol, window, max_terms,
                            start_block, exact_terms)


# ===================================================================
# planar Bessel functional
# ===================================================================


@dataclass
class MInfinityTable:
    """Squared-Bessel path maxima joined with independent weight maxima."""

    m_b: np.ndarray      # sup over [0, 1] of |W(t)|^2, W planar Brownian
    b1: np.ndarray       # |W(1)|^2
    m_psi: np.ndarray
    m_inf: np.ndarray    # max(m_b, b1 * m_psi / 2)
    bessel_steps: int

    def __len__(self) -> int:
        return self.m_b.size


def _bessel_batch(seed: int, n_samples: int, steps: int,
                  chunk: int = 128) -> tuple[np.ndarray, np.ndarray]:
    """Euler grid of |W|^2 on [0, 1]: returns (running max, endpoint)."""
    key = rng.derive_key(seed, rng.BESSEL)
    dt = 1.0 / steps
    m_b = np.empty(n_samples)
    b1 = np.empty(n_samples)
    for lo in range(0, n_samples, chunk):
        hi = min(lo + chunk, n_samples)
        counters = (np.arange(lo, hi, dtype=np.uint64)[:, None] * np.uint64(2 * steps)
                    + np.arange(2 * steps, dtype=np.uint64)[None, :])
        z = rng.stream_normals(key, counters) * math.sqrt(dt)
        w1 = np.cumsum(z[:, :steps], axis=1)
        w2 = np.cumsum(z[:, steps:], axis=1)
        sq = w1 * w1 + w2 * w2
        m_b[lo:hi] = sq.max(axis=1)
        b1[lo:hi] = sq[:, -1]
    return m_b, b1


def sample_bessel_extrema(seed: int, n_samples: int,
                          steps: int = 1 << 14) -> tuple[np.ndarray, np.ndarray]:
    """Running maximum and endpoint of a squared planar Brownian modulus.

    The pair (sup |W|^2, |W(1)|^2) on an Euler grid with the given step
    count; the marginals are the continuum limits of the scaled local
    time profile of a symmetric walk (maximum and value at the origin).
    """
    if steps < 2:
        raise SpecValidationError("steps must be at least 2")
    return _bessel_batch(seed, n_samples, steps)


def sample_m_infinity(spec: EnvSpec, seed: int, n_samples: int,
                      bessel_steps: int = 1 << 14, tol: float = 1e-12,
                      window: int = 20, max_terms: int = 10 ** 6) -> MInfinityTable:
    """Couple the Bessel maximum with an independent weight maximum.

    The limit variable is max(M_B, B(1) * m_psi / 2) where (M_B, B(1))
    are the running maximum and endpoint of a squared planar Brownian
    modulus on [0, 1].  Bessel and environment streams are independent
    by construction.
    """
    if bessel_steps < 2:
        raise SpecValidationError("bessel_steps must be at least 2")
    pot = _potential_batch(spec, seed, n_samples, tol, window, max_terms, 1, None)
    m_b, b1 = _bessel_batch(seed, n_samples, bessel_steps)
    m_inf = np.maximum(m_b, b1 * pot.m_psi / 2.0)
    return MInfinityTable(m_b=m_b, b1=b1, m_psi=pot.m_psi, m_inf=m_inf,
                          bessel_steps=bessel_steps)


# ===================================================================
# tail constant of the weight maximum
# ===================================================================


@dataclass(frozen=True)
class CPsiEstimate:
    value: float
    se: float
    ci95_halfwidth: float
    n_samples: int
    alpha: float

    def to_json_dict(self) -> dict:
        return {
            "value": self.value, "se": self.se,
            "ci95_halfwidth": self.ci95_halfwidth,
            "n_samples": self.n_samples, "alpha": self.alpha,
        }


def estimate_c_psi(spec: EnvSpec, seed: int, n_samples: int,
                   tol: float = 1e-12, window: int = 20,
                   max_terms: int = 10 ** 6,
                   alpha: float | None = None) -> CPsiEstimate:
    """Monte Carlo estimate of the weight-maximum tail constant.

    The constant is E[(eta_0^alpha - sup_{n>=1} (eta_n Pi_n)^alpha)_+]
    with eta_n the per-block weight.  By default alpha is the root of
    the rho moment equation, so the spec must sit in the contracting
    drift regime; passing ``alpha`` explicitly skips that requirement
    (useful against closed-form references).
    """
    if alpha is None:
        report = analyze_regime(spec)
        if report.regime != "A" or report.alpha_hat is None:
            raise RegimeMismatchError(
                f"tail-constant estimation needs regime A, got {report.regime}")
        alpha = report.alpha_hat
    pot = _potential_batch(spec, seed, n_samples, tol, window, max_terms, 1, None)
    vals = np.clip(pot.boundary_term ** alpha - pot.interior_term ** alpha,
                   0.0, None)
    value = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return CPsiEstimate(value=value, se=se, ci95_halfwidth=1.96 * se,
                        n_samples=n_samples, alpha=alpha)
