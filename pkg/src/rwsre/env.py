"""Sparse random environments.

An environment is an i.i.d. sequence of blocks ``(xi_k, lambda_k)`` indexed
by all integers.  Marked sites ``S_n = xi_1 + ... + xi_n`` (``S_0 = 0``,
negative index sums running left) carry right-step probability
``lambda_{n+1}``; every other site is symmetric.  This module defines the
distribution families for the block variables, realizes environments lazily
on both sides, and classifies a specification as drift-dominated (regime A),
sparsity-dominated (regime B), or neither.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import rng
from .errors import OutOfSpanError, SpecValidationError, UnsupportedFamilyError

_INF = math.inf


def rho(lam: float) -> float:
    """Drift variable (1-lambda)/lambda of a right-step probability."""
    if not 0.0 < lam < 1.0:
        raise SpecValidationError(f"lambda must lie in (0,1), got {lam}")
    return (1.0 - lam) / lam


# ===================================================================
# distribution families
# ===================================================================


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise SpecValidationError("Constant value must be finite")

    def sample_integer(self, u: np.ndarray) -> np.ndarray:
        return np.full(u.shape, int(self.value), dtype=np.int64)

    def sample_prob(self, u: np.ndarray) -> np.ndarray:
        return np.full(u.shape, float(self.value))

    def power_moment(self, s: float) -> float:
        return float(self.value) ** s

    def mean_log(self) -> float:
        return math.log(self.value)

    def tail(self, x: float) -> float:
        return 1.0 if x < self.value else 0.0


@dataclass(frozen=True)
class TwoPoint:
    value_lo: float
    value_hi: float
    prob_hi: float

    def __post_init__(self):
        if not 0.0 <= self.prob_hi <= 1.0:
            raise SpecValidationError("prob_hi must lie in [0,1]")
        if self.value_lo == self.value_hi:
            raise SpecValidationError("TwoPoint values must differ")
        if self.value_lo > self.value_hi:
            raise SpecValidationError("TwoPoint requires value_lo < value_hi")

    def sample_integer(self, u: np.ndarray) -> np.ndarray:
        return np.where(u <= self.prob_hi, int(self.value_hi),
                        int(self.value_lo)).astype(np.int64)

    def sample_prob(self, u: np.ndarray) -> np.ndarray:
        return np.where(u <= self.prob_hi, float(self.value_hi),
                        float(self.value_lo))

    def power_moment(self, s: float) -> float:
        return (self.prob_hi * self.value_hi ** s
                + (1.0 - self.prob_hi) * self.value_lo ** s)

    def mean_log(self) -> float:
        return (self.prob_hi * math.log(self.value_hi)
                + (1.0 - self.prob_hi) * math.log(self.value_lo))

    def tail(self, x: float) -> float:
        t = 0.0
        if x < self.value_hi:
            t += self.prob_hi
        if x < self.value_lo:
            t += 1.0 - self.prob_hi
        return t


@dataclass(frozen=True)
class ShiftedGeometric:
    """Support {1,2,3,...} with P[V=k] = p (1-p)^(k-1)."""

    success_prob: float

    def __post_init__(self):
        if not 0.0 < self.success_prob <= 1.0:
            raise SpecValidationError("success_prob must lie in (0,1]")

    def sample_integer(self, u: np.ndarray) -> np.ndarray:
        if self.success_prob >= 1.0:
            return np.ones(u.shape, dtype=np.int64)
        return 1 + np.floor(np.log(u) / math.log1p(-self.success_prob)).astype(np.int64)

    def power_moment(self, s: float) -> float:
        p, q = self.success_prob, 1.0 - self.success_prob
        if q == 0.0:
            return 1.0
        total, k, qk = 0.0, 1, 1.0  # qk = q^(k-1)
        while True:
            term = k ** s * p * qk
            total += term
            if term < 1e-18 * total and k > 8:
                return total
            k += 1
            qk *= q
            if k > 10_000_000:  # unreachable for p bounded away from 0
                return total

    def mean_log(self) -> float:
        p, q = self.success_prob, 1.0 - self.success_prob
        if q == 0.0:
            return 0.0
        total, k, qk = 0.0, 2, q
        while True:
            term = math.log(k) * p * qk
            total += term
            if term < 1e-18 * max(total, 1e-300) and k > 8:
                return total
            k += 1
            qk *= q

    def tail(self, x: float) -> float:
        # P[V > x] = (1-p)^floor(x) for x >= 0
        if x < 1.0:
            return 1.0 if x < 1.0 else 1.0 - self.success_prob
        return (1.0 - self.success_prob) ** math.floor(x)


@dataclass(frozen=True)
class DiscretePareto:
    """Integer family with P[V > x] = floor(x)^(-index) for x >= 1.

    The support is {2,3,...}: P[V > 1] = 1.  Sampling inverts the tail,
    V = floor(u^(-1/index)) + 1 for u uniform in (0,1].
    """

    index: float

    _SERIES_TERMS = 1 << 20

    def __post_init__(self):
        if not self.index > 0.0:
            raise SpecValidationError("tail index must be positive")

    def sample_integer(self, u: np.ndarray) -> np.ndarray:
        v = np.floor(u ** (-1.0 / self.index)) + 1.0
        return np.minimum(v, float(rng.OVERFLOW_LIMIT)).astype(np.int64)

    def power_moment(self, s: float) -> float:
        beta = self.index
        if s <= 0.0:
            return 1.0 if s == 0.0 else self._neg_power_moment(s)
        if s >= beta:
            return _INF
        # E V^s = 1 + sum_{k>=1} ((k+1)^s - k^s) k^(-beta), tail by midpoint rule
        if s == 1.0:
            return 1.0 + float(special.zeta(beta, 1.0))
        k = np.arange(1.0, self._SERIES_TERMS + 1.0)
        total = 1.0 + float(np.sum(((k + 1.0) ** s - k ** s) * k ** (-beta)))
        big = self._SERIES_TERMS + 0.5
        return total + s * big ** (s - beta) / (beta - s)

    def _neg_power_moment(self, s: float) -> float:
        k = np.arange(2.0, self._SERIES_TERMS + 2.0)
        pmf = (k - 1.0) ** (-self.index) - k ** (-self.index)
        return float(np.sum(k ** s * pmf))

    def mean_log(self) -> float:
        beta = self.index
        k = np.arange(1.0, self._SERIES_TERMS + 1.0)
        total = float(np.sum(np.log1p(1.0 / k) * k ** (-beta)))
        big = self._SERIES_TERMS + 0.5
        return total + big ** (-beta) / beta

    def tail(self, x: float) -> float:
        if x < 1.0:
            return 1.0
        return math.floor(x) ** (-self.index)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise SpecValidationError("Beta parameters must be positive")

    def sample_prob(self, u: np.ndarray) -> np.ndarray:
        # shift (0,1] into the open interval so lambda never hits 0 or 1
        return special.betaincinv(self.a, self.b, u - 0.5 ** 54)

    def power_moment(self, s: float) -> float:
        if self.a + s <= 0.0:
            return _INF
        return math.exp(special.gammaln(self.a + s) - special.gammaln(self.a)
                        + special.gammaln(self.a + self.b)
                        - special.gammaln(self.a + self.b + s))

    def mean_log(self) -> float:
        return float(special.digamma(self.a) - special.digamma(self.a + self.b))


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 < self.lo < self.hi < 1.0:
            raise SpecValidationError("Uniform requires 0 < lo < hi < 1")

    def sample_prob(self, u: np.ndarray) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * u

    def power_moment(self, s: float) -> float:
        val, _ = integrate.quad(lambda x: x ** s, self.lo, self.hi)
        return val / (self.hi - self.lo)

    def mean_log(self) -> float:
        val, _ = integrate.quad(math.log, self.lo, self.hi)
        return val / (self.hi - self.lo)


_INTEGER_FAMILIES = (Constant, TwoPoint, ShiftedGeometric, DiscretePareto)
_PROB_FAMILIES = (Constant, TwoPoint, Beta, Uniform)

_FAMILY_TAGS = {
    Constant: "constant",
    TwoPoint: "two_point",
    ShiftedGeometric: "shifted_geometric",
    DiscretePareto: "discrete_pareto",
    Beta: "beta",
    Uniform: "uniform",
}
_TAG_FAMILIES = {v: k for k, v in _FAMILY_TAGS.items()}


def family_to_json(dist) -> dict:
    tag = _FAMILY_TAGS.get(type(dist))
    if tag is None:
        raise SpecValidationError(f"unknown family {type(dist).__name__}")
    d = {"family": tag}
    d.update({k: getattr(dist, k) for k in dist.__dataclass_fields__})
    return d


def family_from_json(d: dict):
    try:
        cls = _TAG_FAMILIES[d["family"]]
    except KeyError:
        raise SpecValidationError(f"unknown family tag {d.get('family')!r}") from None
    kwargs = {k: v for k, v in d.items() if k != "family"}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise SpecValidationError(f"bad parameters for {d['family']}: {exc}") from None


def _check_integer_role(dist) -> None:
    if not isinstance(dist, _INTEGER_FAMILIES):
        raise SpecValidationError(
            f"{type(dist).__name__} cannot serve as a block-length family")
    if isinstance(dist, Constant):
        v = dist.value
        if v != int(v) or v < 1:
            raise SpecValidationError("block length must be an integer >= 1")
    if isinstance(dist, TwoPoint):
        for v in (dist.value_lo, dist.value_hi):
            if v != int(v) or v < 1:
                raise SpecValidationError("block lengths must be integers >= 1")


def _check_prob_role(dist) -> None:
    if not isinstance(dist, _PROB_FAMILIES):
        raise SpecValidationError(
            f"{type(dist).__name__} cannot serve as a probability family")
    if isinstance(dist, Constant) and not 0.0 < dist.value < 1.0:
        raise SpecValidationError("probability value must lie strictly in (0,1)")
    if isinstance(dist, TwoPoint):
        for v in (dist.value_lo, dist.value_hi):
            if not 0.0 < v < 1.0:
                raise SpecValidationError("probability values must lie strictly in (0,1)")


# ===================================================================
# environment specification
# ===================================================================


@dataclass(frozen=True)
class EnvSpec:
    """Block-variable specification.

    ``dependence`` is either the string ``"independent"`` (sample xi and
    lambda from their own families) or a tuple of ``(xi, lam, prob)`` rows
    describing the joint law of one block; in the joint case the family
    fields must be None.
    """

    xi_dist: object = None
    lambda_dist: object = None
    dependence: object = "independent"

    def __post_init__(self):
        if isinstance(self.dependence, list):
            object.__setattr__(self, "dependence",
                               tuple(tuple(row) for row in self.dependence))
        if self.dependence == "independent":
            if self.xi_dist is None or self.lambda_dist is None:
                raise SpecValidationError("independent spec needs both families")
            _check_integer_role(self.xi_dist)
            _check_prob_role(self.lambda_dist)
        elif isinstance(self.dependence, tuple):
            if self.xi_dist is not None or self.lambda_dist is not None:
                raise SpecValidationError(
                    "joint-table spec must leave the marginal families unset")
            self._check_table(self.dependence)
        else:
            raise SpecValidationError(
                "dependence must be 'independent' or a table of (xi, lam, p) rows")

    @staticmethod
    def _check_table(rows) -> None:
        if not rows:
            raise SpecValidationError("joint table is empty")
        total = 0.0
        for row in rows:
            if len(row) != 3:
                raise SpecValidationError("joint table rows must be (xi, lam, p)")
            x, lam, p = row
            if x != int(x) or x < 1:
                raise SpecValidationError("table block lengths must be integers >= 1")
            if not 0.0 < lam < 1.0:
                raise SpecValidationError("table probabilities lambda must lie in (0,1)")
            if p < 0.0:
                raise SpecValidationError("table weights must be nonnegative")
            total += p
        if abs(total - 1.0) > 1e-12:
            raise SpecValidationError(f"table weights sum to {total}, not 1")

    @property
    def independent(self) -> bool:
        return self.dependence == "independent"

    def table_arrays(self):
        rows = np.asarray(self.dependence, dtype=np.float64)
        return rows[:, 0].astype(np.int64), rows[:, 1], rows[:, 2]

    def to_json_dict(self) -> dict:
        return {
            "xi": None if self.xi_dist is None else family_to_json(self.xi_dist),
            "lambda": (None if self.lambda_dist is None
                       else family_to_json(self.lambda_dist)),
            "dependence": ("independent" if self.independent
                           else [list(r) for r in self.dependence]),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, d: dict) -> "EnvSpec":
        dep = d.get("dependence", "independent")
        xi = d.get("xi")
        lam = d.get("lambda")
        return cls(
            xi_dist=None if xi is None else family_from_json(xi),
            lambda_dist=None if lam is None else family_from_json(lam),
            dependence=dep,
        )

    @classmethod
    def from_json(cls, text: str) -> "EnvSpec":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecValidationError(f"spec is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise SpecValidationError("spec JSON must be an object")
        return cls.from_json_dict(d)


def sample_block_values(spec: EnvSpec, seed: int, codes: np.ndarray):
    """Block values for the given block codes, as (xi, lam) arrays.

    Values are pure functions of (seed, code) so environments extend
    deterministically in any order.
    """
    u_xi = rng.stream_uniforms(rng.derive_key(seed, rng.ENV_XI), codes)
    if spec.independent:
        u_lam = rng.stream_uniforms(rng.derive_key(seed, rng.ENV_LAMBDA), codes)
        return spec.xi_dist.sample_integer(u_xi), spec.lambda_dist.sample_prob(u_lam)
    xi_vals, lam_vals, probs = spec.table_arrays()
    cum = np.cumsum(probs)
    idx = np.minimum(np.searchsorted(cum, u_xi, side="left"), len(cum) - 1)
    return xi_vals[idx], lam_vals[idx]


def _block_code(k: int) -> int:
    # blocks k >= 1 map to even codes, k <= 0 to odd ones
    return 2 * k if k >= 1 else 1 - 2 * k


def _block_codes(lo: int, hi: int) -> np.ndarray:
    ks = np.arange(lo, hi + 1, dtype=np.int64)
    return np.where(ks >= 1, 2 * ks, 1 - 2 * ks).astype(np.uint64)


# ===================================================================
# realized environments
# ===================================================================


class SparseEnvironment:
    """Lazily realized two-sided environment.

    Blocks ``1..n_pos`` sit right of the origin, blocks ``0, -1, ...``
    (``n_neg`` of them) to the left.  All block values are pure functions
    of ``(seed, block index)``; extending in either direction never changes
    existing values.
    """

    def __init__(self, spec: EnvSpec, seed: int, n_pos: int = 0, n_neg: int = 0):
        if n_pos < 0 or n_neg < 0:
            raise SpecValidationError("block counts must be nonnegative")
        self.spec = spec
        self.seed = int(seed)
        self._xi_pos = np.empty(0, dtype=np.int64)
        self._lam_pos = np.empty(0, dtype=np.float64)
        self._s_pos = np.zeros(1, dtype=np.int64)
        self._xi_neg = np.empty(0, dtype=np.int64)
        self._lam_neg = np.empty(0, dtype=np.float64)
        self._s_neg = np.zeros(1, dtype=np.int64)
        self.ensure_pos(n_pos)
        self.ensure_neg(n_neg)

    @classmethod
    def from_blocks(cls, xi_pos, lam_pos, xi_neg=(), lam_neg=(),
                    spec: EnvSpec | None = None, seed: int = 0):
        """Environment with explicitly pinned block values.

        ``xi_pos``/``lam_pos`` give blocks 1..n in order, ``xi_neg`` and
        ``lam_neg`` blocks 0, -1, ... in that order.  With a spec the
        environment extends past the pinned blocks as usual; without one
        any extension raises OutOfSpanError.
        """
        if len(xi_pos) != len(lam_pos) or len(xi_neg) != len(lam_neg):
            raise SpecValidationError("length and lambda lists must pair up")
        env = cls.__new__(cls)
        env.spec = spec
        env.seed = int(seed)
        for name, xi, lam in (("pos", xi_pos, lam_pos), ("neg", xi_neg, lam_neg)):
            xi = np.asarray(xi, dtype=np.int64).reshape(-1)
            lam = np.asarray(lam, dtype=np.float64).reshape(-1)
            if xi.size and (xi < 1).any():
                raise SpecValidationError("block lengths must be at least 1")
            if lam.size and ((lam <= 0.0) | (lam >= 1.0)).any():
                raise SpecValidationError("lambda values must lie in (0, 1)")
            sign = 1 if name == "pos" else -1
            setattr(env, f"_xi_{name}", xi)
            setattr(env, f"_lam_{name}", lam)
            setattr(env, f"_s_{name}", np.concatenate(
                [np.zeros(1, dtype=np.int64), sign * np.cumsum(xi)]))
        return env

    @property
    def n_pos(self) -> int:
        return len(self._xi_pos)

    @property
    def n_neg(self) -> int:
        return len(self._xi_neg)

    def ensure_pos(self, n: int) -> None:
        """Realize blocks 1..n (no-op if already present)."""
        have = self.n_pos
        if n <= have:
            return
        if self.spec is None:
            raise OutOfSpanError(
                f"fixed environment holds {have} right blocks; cannot extend")
        xi, lam = sample_block_values(self.spec, self.seed,
                                      _block_codes(have + 1, n))
        self._xi_pos = np.concatenate([self._xi_pos, xi])
        self._lam_pos = np.concatenate([self._lam_pos, lam])
        self._s_pos = np.concatenate([
            self._s_pos, self._s_pos[-1] + np.cumsum(xi)])

    def ensure_neg(self, n: int) -> None:
        """Realize blocks 0, -1, ..., -(n-1) (no-op if already present)."""
        have = self.n_neg
        if n <= have:
            return
        if self.spec is None:
            raise OutOfSpanError(
                f"fixed environment holds {have} left blocks; cannot extend")
        xi, lam = sample_block_values(self.spec, self.seed,
                                      _block_codes(-(n - 1), -have)[::-1])
        self._xi_neg = np.concatenate([self._xi_neg, xi])
        self._lam_neg = np.concatenate([self._lam_neg, lam])
        self._s_neg = np.concatenate([
            self._s_neg, self._s_neg[-1] - np.cumsum(xi)])

    # -- block-level accessors ------------------------------------------

    def xi(self, k: int) -> int:
        """Length of block k (k >= 1 right of origin, k <= 0 left)."""
        if k >= 1:
            if k > self.n_pos:
                raise OutOfSpanError(f"block {k} not realized")
            return int(self._xi_pos[k - 1])
        if -k >= self.n_neg:
            raise OutOfSpanError(f"block {k} not realized")
        return int(self._xi_neg[-k])

    def lam(self, k: int) -> float:
        if k >= 1:
            if k > self.n_pos:
                raise OutOfSpanError(f"block {k} not realized")
            return float(self._lam_pos[k - 1])
        if -k >= self.n_neg:
            raise OutOfSpanError(f"block {k} not realized")
        return float(self._lam_neg[-k])

    def rho(self, k: int) -> float:
        return rho(self.lam(k))

    def S(self, n: int) -> int:
        """Marked site S_n; valid for -n_neg <= n <= n_pos."""
        if n >= 0:
            if n > self.n_pos:
                raise OutOfSpanError(f"S_{n} not realized")
            return int(self._s_pos[n])
        if -n > self.n_neg:
            raise OutOfSpanError(f"S_{n} not realized")
        return int(self._s_neg[-n])

    @property
    def span(self) -> tuple[int, int]:
        """Realized site range [S_{-n_neg}, S_{n_pos}]."""
        return int(self._s_neg[-1]), int(self._s_pos[-1])

    # -- site-level accessors -------------------------------------------

    def omega_at(self, site: int) -> float:
        """Right-step probability at a site inside the realized span."""
        lo, hi = self.span
        if not lo <= site <= hi - 1:
            raise OutOfSpanError(
                f"site {site} outside omega span [{lo}, {hi - 1}]; extend first")
        if site >= 0:
            j = int(np.searchsorted(self._s_pos, site))
            if j < len(self._s_pos) and self._s_pos[j] == site:
                return float(self._lam_pos[j])
            return 0.5
        m = int(np.searchsorted(-self._s_neg, -site))
        if m < len(self._s_neg) and self._s_neg[m] == site:
            return float(self._lam_neg[m - 1])
        return 0.5

    def omega_array(self, lo: int, hi: int) -> np.ndarray:
        """omega for every site in [lo, hi], as one contiguous array."""
        span_lo, span_hi = self.span
        if not (span_lo <= lo and hi <= span_hi - 1):
            raise OutOfSpanError(
                f"[{lo}, {hi}] outside omega span [{span_lo}, {span_hi - 1}]")
        out = np.full(hi - lo + 1, 0.5)
        s = self._s_pos[:-1]
        sel = (s >= lo) & (s <= hi)
        out[s[sel] - lo] = self._lam_pos[: len(s)][sel]
        sn = self._s_neg[1:]
        seln = (sn >= lo) & (sn <= hi)
        out[sn[seln] - lo] = self._lam_neg[seln]
        return out


def sample_environment(spec: EnvSpec, seed: int, n_blocks_pos: int,
                       n_blocks_neg: int = 0) -> SparseEnvironment:
    """Realize an environment with the given numbers of blocks per side."""
    return SparseEnvironment(spec, seed, n_pos=n_blocks_pos, n_neg=n_blocks_neg)


# ===================================================================
# moments of the block variables
# ===================================================================


def xi_power_moment(spec: EnvSpec, s: float) -> float:
    """E xi^s, possibly infinite."""
    if spec.independent:
        return spec.xi_dist.power_moment(s)
    xi_vals, _, probs = spec.table_arrays()
    return float(np.sum(probs * xi_vals.astype(np.float64) ** s))

def xi_mean_log(spec: EnvSpec) -> float:
    if spec.independent:
        return spec.xi_dist.mean_log()
    xi_vals, _, probs = spec.table_arrays()
    return float(np.sum(probs * np.log(xi_vals.astype(np.float64))))

def xi_tail(spec: EnvSpec, x: float) -> float:
    """P[xi > x]."""
    if spec.independent:
        return spec.xi_dist.tail(x)
    xi_vals, _, probs = spec.table_arrays()
    return float(np.sum(probs[xi_vals.astype(np.float64) > x]))

def rho_power_moment(spec: EnvSpec, s: float) -> float:
    """E rho^s, possibly infinite."""
    if not spec.independent:
        _, lam_vals, probs = spec.table_arrays()
        return float(np.sum(probs * ((1.0 - lam_vals) / lam_vals) ** s))
    dist = spec.lambda_dist
    if isinstance(dist, Constant):
        return rho(dist.value) ** s
    if isinstance(dist, TwoPoint):
        return (dist.prob_hi * rho(dist.value_hi) ** s
                + (1.0 - dist.prob_hi) * rho(dist.value_lo) ** s)
    if isinstance(dist, Beta):
        # E lambda^(-s) (1-lambda)^s in closed form; finite only for s < a
        if s >= dist.a:
            return _INF
        return math.exp(special.gammaln(dist.a - s) + special.gammaln(dist.b + s)
                        - special.gammaln(dist.a) - special.gammaln(dist.b))
    if isinstance(dist, Uniform):
        val, _ = integrate.quad(lambda x: ((1.0 - x) / x) ** s, dist.lo, dist.hi)
        return val / (dist.hi - dist.lo)
    raise UnsupportedFamilyError(f"rho moment undefined for {type(dist).__name__}")

def rho_mean_log(spec: EnvSpec) -> float:
    """E log rho."""
    if not spec.independent:
        _, lam_vals, probs = spec.table_arrays()
        return float(np.sum(probs * np.log((1.0 - lam_vals) / lam_vals)))
    dist = spec.lambda_dist
    if isinstance(dist, Constant):
        return math.log(rho(dist.value))
    if isinstance(dist, TwoPoint):
        return (dist.prob_hi * math.log(rho(dist.value_hi))
                + (1.0 - dist.prob_hi) * math.log(rho(dist.value_lo)))
    if isinstance(dist, Beta):
        return float(special.digamma(dist.b) - special.digamma(dist.a))
    if isinstance(dist, Uniform):
        val, _ = integrate.quad(lambda x: math.log((1.0 - x) / x), dist.lo, dist.hi)
        return val / (dist.hi - dist.lo)
    raise UnsupportedFamilyError(f"rho moment undefined for {type(dist).__name__}")

def xi_rho_cross_moment(spec: EnvSpec, s: float) -> float:
    """E xi^s rho^s."""
    if spec.independent:
        a = xi_power_moment(spec, s)
        b = rho_power_moment(spec, s)
        return a * b if (a < _INF and b < _INF) else _INF
    xi_vals, lam_vals, probs = spec.table_arrays()
    r = (1.0 - lam_vals) / lam_vals
    return float(np.sum(probs * xi_vals.astype(np.float64) ** s * r ** s))

def rho_alpha_log_moment(spec: EnvSpec, a: float) -> float:
    """E rho^a log+ rho, used as a finiteness probe."""
    if not spec.independent:
        _, lam_vals, probs = spec.table_arrays()
        r = (1.0 - lam_vals) / lam_vals
        return float(np.sum(probs * r ** a * np.maximum(np.log(r), 0.0)))
    dist = spec.lambda_dist
    if isinstance(dist, Constant):
        r = rho(dist.value)
        return r ** a * max(math.log(r), 0.0)
    if isinstance(dist, TwoPoint):
        r_hi, r_lo = rho(dist.value_hi), rho(dist.value_lo)
        return (dist.prob_hi * r_hi ** a * max(math.log(r_hi), 0.0)
                + (1.0 - dist.prob_hi) * r_lo ** a * max(math.log(r_lo), 0.0))
    if isinstance(dist, Beta):
        if a >= dist.a:
            return _INF
        eps = 0.5 * (dist.a - a)
        # log+ rho <= rho^eps / eps, so finiteness follows from the moment
        return rho_power_moment(spec, a + eps) / eps
    if isinstance(dist, Uniform):
        val, _ = integrate.quad(
            lambda x: ((1.0 - x) / x) ** a * max(math.log((1.0 - x) / x), 0.0),
            dist.lo, dist.hi)
        return val / (dist.hi - dist.lo)
    raise UnsupportedFamilyError(f"rho moment undefined for {type(dist).__name__}")


# ===================================================================
# regime classification
# ===================================================================


@dataclass(frozen=True)
class RegimeReport:
    mean_log_rho: float
    se_mean_log_rho: float
    mean_log_xi: float
    se_mean_log_xi: float
    alpha_hat: float | None
    alpha_bracket: tuple[float, float] | None
    beta_tail: float | None
    moment_flags: dict
    regime: str  # "A" | "B" | "TransientOnly" | "NotTransient"

    def to_json_dict(self) -> dict:
        d = {
            "mean_log_rho": self.mean_log_rho,
            "se_mean_log_rho": self.se_mean_log_rho,
            "mean_log_xi": self.mean_log_xi,
            "se_mean_log_xi": self.se_mean_log_xi,
            "alpha_hat": self.alpha_hat,
            "alpha_bracket": (None if self.alpha_bracket is None
                              else list(self.alpha_bracket)),
            "beta_tail": self.beta_tail,
            "moment_flags": dict(self.moment_flags),
            "regime": self.regime,
        }
        return d


def alpha_root(spec: EnvSpec, lo: float = 1e-6, hi: float = 2.0,
               tol: float = 1e-9):
    """Root of E rho^s = 1 on (lo, hi], or None when no sign change exists.

    Returns (root, bracket).  E rho^s is convex with value 1 at s = 0, so
    under transience it dips below 1 and crosses back up at most once;
    infinite moments count as above 1.
    """
    def h(s: float) -> float:
        m = rho_power_moment(spec, s)
        return m - 1.0 if m < _INF else _INF

    grid = np.linspace(lo, hi, 81)
    vals = [h(s) for s in grid]
    bracket = None
    for i in range(len(grid) - 1):
        if vals[i] < 0.0 <= vals[i + 1]:
            bracket = (float(grid[i]), float(grid[i + 1]))
            break
    if bracket is None:
        return None
    a, b = bracket
    for _ in range(200):
        mid = 0.5 * (a + b)
        if h(mid) < 0.0:
            a = mid
        else:
            b = mid
        if b - a < tol:
            break
    return 0.5 * (a + b), bracket


_DELTA_PROBES = (0.5, 0.25, 0.1, 0.05, 0.01, 0.001)


def analyze_regime(spec: EnvSpec, mc=None) -> RegimeReport:
    """Classify a spec as regime A, regime B, transient-only, or not transient.

    Moments are evaluated in closed form (or by deterministic series and
    quadrature), so the reported standard errors are zero.  The ``mc``
    parameter is accepted for interface compatibility and ignored.
    """
    del mc
    mlr = rho_mean_log(spec)
    mlx = xi_mean_log(spec)
    flags = {}
    transient = mlr < 0.0 and math.isfinite(mlx)
    flags["transient"] = "verified" if transient else "failed"

    beta = None
    if spec.independent and isinstance(spec.xi_dist, DiscretePareto):
        beta = spec.xi_dist.index

    root = alpha_root(spec) if transient else None
    alpha_hat, bracket = (root if root is not None else (None, None))

    # drift-dominated conditions
    if alpha_hat is not None and alpha_hat < 2.0 - 1e-9:
        flags["drift_alpha_root_in_0_2"] = "verified"
        flags["drift_alpha_log_moment"] = (
            "verified" if rho_alpha_log_moment(spec, alpha_hat) < _INF else "failed")
        # non-arithmeticity of log rho is not decidable numerically
        flags["drift_log_rho_nonarithmetic"] = "asserted"
        ximom = "failed"
        for d in _DELTA_PROBES:
            if xi_power_moment(spec, max(alpha_hat + d, 1.0)) < _INF:
                ximom = "verified"
                break
        flags["drift_xi_moment"] = ximom
        flags["drift_xi_rho_cross_moment"] = (
            "verified" if xi_rho_cross_moment(spec, alpha_hat) < _INF else "failed")
    else:
        flags["drift_alpha_root_in_0_2"] = "failed"

    # sparsity-dominated conditions
    if beta is not None:
        flags["sparse_xi_tail_regularly_varying"] = "verified"
        flags["sparse_beta_in_range"] = "verified" if 1.0 <= beta < 2.0 else "failed"
        rhomom = "failed"
        for d in _DELTA_PROBES:
            if rho_power_moment(spec, beta + d) < 1.0:
                rhomom = "verified"
                break
        flags["sparse_rho_moment_below_one"] = rhomom
        flags["sparse_independence"] = "verified" if spec.independent else "failed"
        if beta == 1.0:
            flags["sparse_beta1_mean"] = (
                "verified" if xi_power_moment(spec, 1.0) < _INF else "failed")
        else:
            flags["sparse_beta1_mean"] = "verified"
    else:
        flags["sparse_xi_tail_regularly_varying"] = "failed"

    drift_keys = ("drift_alpha_root_in_0_2", "drift_alpha_log_moment",
                  "drift_log_rho_nonarithmetic", "drift_xi_moment",
                  "drift_xi_rho_cross_moment")
    sparse_keys = ("sparse_xi_tail_regularly_varying", "sparse_beta_in_range",
                   "sparse_rho_moment_below_one", "sparse_independence",
                   "sparse_beta1_mean")

    if not transient:
        regime = "NotTransient"
    elif all(flags.get(k) in ("verified", "asserted") for k in drift_keys):
        regime = "A"
    elif all(flags.get(k) == "verified" for k in sparse_keys):
        regime = "B"
    else:
        regime = "TransientOnly"

    return RegimeReport(
        mean_log_rho=mlr, se_mean_log_rho=0.0,
        mean_log_xi=mlx, se_mean_log_xi=0.0,
        alpha_hat=alpha_hat, alpha_bracket=bracket,
        beta_tail=beta, moment_flags=flags, regime=regime,
    )


def scaling_a_n(spec: EnvSpec, n: int) -> float:
    """Normalizing sequence inf{a : n P[xi > a] <= 1} for maxima of xi.

    Only defined for a regularly varying block-length family; found by
    scanning the exact integer tail.
    """
    if n < 1:
        raise SpecValidationError("n must be at least 1")
    if not (spec.independent and isinstance(spec.xi_dist, DiscretePareto)):
        raise UnsupportedFamilyError(
            "scaling sequence needs an unbounded, regularly varying block-length family")
    beta = spec.xi_dist.index
    tail = spec.xi_dist.tail
    m = max(1, int(n ** (1.0 / beta)) - 2)
    while n * tail(m) > 1.0:
        m += 1
    while m > 1 and n * tail(m - 1) <= 1.0:
        m -= 1
    return float(m)
