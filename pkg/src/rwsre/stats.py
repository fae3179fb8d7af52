"""Estimators for heavy-tailed samples and distribution comparison.

Nothing here knows about walks or branching; inputs are plain arrays.
The Frechet fit works on the log sample (where the family becomes
Gumbel) with a monotone Newton iteration, falling back to quantile
matching when the likelihood misbehaves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import EstimatorError

# asymptotic variance of the Gumbel-scale MLE is 6/pi^2 * (1 - 6/pi^2 *
# (1 - gamma)^2)^-1 ... the familiar constant below is Var(sigma_hat)*n/sigma^2
_GUMBEL_SCALE_AVAR = 0.6079


def ecdf(sample) -> tuple[np.ndarray, np.ndarray]:
    """Sorted support points and right-continuous empirical cdf values."""
    x = np.sort(np.asarray(sample, dtype=np.float64))
    if x.size == 0:
        raise EstimatorError("empty sample")
    xs, counts = np.unique(x, return_counts=True)
    return xs, np.cumsum(counts) / x.size


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov distance and asymptotic p-value.

    Ties are fine (the sup runs over the pooled support); for integer
    samples the p-value is conservative.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise EstimatorError("empty sample")
    grid = np.union1d(a, b)
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.abs(fa - fb).max())
    n_eff = a.size * b.size / (a.size + b.size)
    p = float(special.kolmogorov(math.sqrt(n_eff) * d))
    return d, p


def ks_one_sample(sample, cdf) -> tuple[float, float]:
    """KS distance of a sample against a fully specified continuous cdf."""
    x = np.sort(np.asarray(sample, dtype=np.float64))
    if x.size == 0:
        raise EstimatorError("empty sample")
    n = x.size
    f = np.asarray(cdf(x), dtype=np.float64)
    if f.min() < -1e-12 or f.max() > 1 + 1e-12:
        raise EstimatorError("cdf values must lie in [0, 1]")
    hi = (np.arange(1, n + 1) / n - f).max()
    lo = (f - np.arange(0, n) / n).max()
    d = float(max(hi, lo))
    # Stephens' small-sample adjustment
    p = float(special.kolmogorov((math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * d))
    return d, p


def chi2_discrete(sample, pmf, min_expected: float = 5.0,
                  support_hint: tuple[int, int] | None = None
                  ) -> tuple[float, int, float]:
    """Pearson chi-square of an integer sample against a pmf callable.

    Bins run over the observed integer range plus open tails on both
    sides; adjacent bins are pooled left to right until each expects at
    least ``min_expected``.  Returns (statistic, dof, p).
    """
    x = np.asarray(sample)
    if x.size == 0:
        raise EstimatorError("empty sample")
    if not np.issubdtype(x.dtype, np.integer):
        raise EstimatorError("chi-square comparison expects integer samples")
    lo, hi = int(x.min()), int(x.max())
    if support_hint is not None:
        lo, hi = min(lo, support_hint[0]), max(hi, support_hint[1])
    values = np.arange(lo, hi + 1)
    probs = np.array([float(pmf(int(v))) for v in values])
    if probs.min() < 0:
        raise EstimatorError("pmf returned a negative mass")
    counts = np.bincount((x - lo).astype(np.int64), minlength=values.size)
    # open tails catch mass outside the observed range
    left_tail = max(0.0, float(sum(float(pmf(int(v))) for v in range(lo - 64, lo))))
    right_tail = max(0.0, 1.0 - probs.sum() - left_tail)
    probs = np.concatenate([[left_tail], probs, [right_tail]])
    counts = np.concatenate([[0], counts, [0]])

    n = x.size
    pooled_obs, pooled_exp = [], []
    acc_o, acc_e = 0.0, 0.0
    for o, pr in zip(counts, probs):
        acc_o += o
        acc_e += n * pr
        if acc_e >= min_expected:
            pooled_obs.append(acc_o)
            pooled_exp.append(acc_e)
            acc_o, acc_e = 0.0, 0.0
    if acc_e > 0 or acc_o > 0:
        if not pooled_obs:
            raise EstimatorError("sample too small for the requested pooling")
        pooled_obs[-1] += acc_o
        pooled_exp[-1] += acc_e
    if len(pooled_obs) < 2:
        raise EstimatorError("fewer than two bins after pooling")
    obs = np.array(pooled_obs)
    exp = np.array(pooled_exp)
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = len(obs) - 1
    return stat, dof, float(special.chdtrc(dof, stat))


# ===================================================================
# tail index estimation
# ===================================================================


@dataclass(frozen=True)
class HillEstimate:
    index: float
    se: float
    k_top: int
    threshold: float

    def to_json_dict(self) -> dict:
        return {"index": self.index, "se": self.se, "k_top": self.k_top,
                "threshold": self.threshold}


def hill_estimator(sample, k_top: int | None = None) -> HillEstimate:
    """Hill tail-index estimate from the k_top largest order statistics.

    Defaults to k_top = ceil(n^0.6).  Requires the reference order
    statistic to be positive.
    """
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = x.size
    if n < 10:
        raise EstimatorError("need at least 10 observations")
    if k_top is None:
        k_top = int(math.ceil(n ** 0.6))
    if not 1 <= k_top < n:
        raise EstimatorError(f"k_top must lie in [1, {n - 1}]")
    xmin = x[n - k_top - 1]
    if xmin <= 0:
        raise EstimatorError("reference order statistic must be positive")
    logs = np.log(x[n - k_top:]) - math.log(xmin)
    mean_excess = float(logs.mean())
    if mean_excess <= 0:
        raise EstimatorError("degenerate top order statistics")
    index = 1.0 / mean_excess
    return HillEstimate(index=index, se=index / math.sqrt(k_top),
                        k_top=k_top, threshold=float(xmin))


def hill_profile(sample, k_grid=None) -> list[HillEstimate]:
    """Hill estimates along a grid of k_top values (default n^0.4..n^0.8)."""
    x = np.asarray(sample, dtype=np.float64)
    n = x.size
    if k_grid is None:
        lo = max(5, int(n ** 0.4))
        hi = min(n - 1, int(n ** 0.8))
        k_grid = np.unique(np.geomspace(lo, hi, 9).astype(int))
    return [hill_estimator(x, int(k)) for k in k_grid]


# ===================================================================
# Frechet fitting
# ===================================================================


@dataclass(frozen=True)
class FrechetFit:
    shape: float
    scale: float
    se_shape: float
    n: int
    method: str       # "mle" or "quantile"
    converged: bool

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-((x[pos] / self.scale) ** -self.shape))
        return out

    def quantile(self, p: float) -> float:
        if not 0 < p < 1:
            raise EstimatorError("p must lie in (0, 1)")
        return self.scale * (-math.log(p)) ** (-1.0 / self.shape)

    def to_json_dict(self) -> dict:
        return {"shape": self.shape, "scale": self.scale,
                "se_shape": self.se_shape, "n": self.n,
                "method": self.method, "converged": self.converged}


def frechet_cdf(x, shape: float, scale: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-((x[pos] / scale) ** -shape))
    return out


def _quantile_fit(x: np.ndarray) -> tuple[float, float]:
    q25, q75 = np.quantile(x, [0.25, 0.75])
    if q75 <= q25:
        raise EstimatorError("sample too degenerate for a quantile fit")
    # quantile ratio of the unit Frechet: (log 4 / log(4/3))^(1/shape)
    shape = math.log(math.log(4.0) / math.log(4.0 / 3.0)) / math.log(q75 / q25)
    if shape <= 0:
        raise EstimatorError("quantile fit produced a nonpositive shape")
    scale = q75 / (-math.log(0.75)) ** (-1.0 / shape)
    return shape, scale


def fit_frechet(sample, max_iter: int = 200, tol: float = 1e-12) -> FrechetFit:
    """Fit a two-parameter Frechet law by maximum likelihood.

    Works on the log sample where the family is Gumbel; the profile
    equation for the Gumbel scale has derivative >= 1, so the Newton
    iteration is monotone and safe.  Falls back to quantile matching if
    the iteration fails to converge.
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.size < 10:
        raise EstimatorError("need at least 10 observations")
    if np.any(x <= 0):
        raise EstimatorError("sample must be positive")
    y = np.log(x)
    n = y.size
    y_min = float(y.min())
    y_shift = y - y_min
    y_bar = float(y.mean())
    if float(y_shift.max()) < 1e-14:
        raise EstimatorError("degenerate sample (all values equal)")

    sigma = max(1e-12, math.sqrt(6.0) * float(y.std()) / math.pi)
    converged = False
    for _ in range(max_iter):
        w = np.exp(-y_shift / sigma)
        sw = float(w.sum())
        syw = float((y_shift * w).sum())
        b = syw / sw
        f = sigma - y_bar + y_min + b
        var_w = float((y_shift * y_shift * w).sum()) / sw - b * b
        fprime = 1.0 + var_w / (sigma * sigma)
        step = f / fprime
        new_sigma = sigma - step
        if new_sigma <= 0:
            new_sigma = sigma / 2.0
        if abs(new_sigma - sigma) <= tol * max(1.0, sigma):
            sigma = new_sigma
            converged = True
            break
        sigma = new_sigma

    if converged and math.isfinite(sigma) and sigma > 0:
        w = np.exp(-y_shift / sigma)
        mu = y_min - sigma * math.log(float(w.mean()))
        shape = 1.0 / sigma
        scale = math.exp(mu)
        method = "mle"
    else:
        shape, scale = _quantile_fit(x)
        method = "quantile"
    se_shape = shape * math.sqrt(_GUMBEL_SCALE_AVAR / n)
    return FrechetFit(shape=shape, scale=scale, se_shape=se_shape, n=n,
                      method=method, converged=converged)
