"""Branching chains dual to the walk.

The central object is a geometric branching chain with unit immigration:
generation g is born from ``Z_{g-1}`` parents plus one immigrant (while
immigration lasts), each contributing a Geometric(omega_g) litter, where
``omega_g`` is 1/2 inside blocks and the block's lambda at marked
generations.  Left-step counts of the walk read from the target downward
form exactly this chain, which is why its pair maxima reproduce the
walk's maximal local times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rng
from .env import SparseEnvironment
from .errors import (PopulationOverflowError, RwsreError,
                     SpecValidationError)
from .rng import OVERFLOW_LIMIT, negbin_from

# return codes shared by the kernels
_OK = 0
_HORIZON = 1
_OVERFLOW = 2


def reproduce_generation(current: int, immigrant: bool, success_prob: float,
                         stream_key: int) -> int:
    """One generation step: litters of Geometric(success_prob) offspring.

    ``current + immigrant`` parents reproduce independently; an empty
    parent set produces 0 without consuming any randomness.
    """
    parents = int(current) + (1 if immigrant else 0)
    if parents < 0:
        raise SpecValidationError("population must be nonnegative")
    if not (0.0 < success_prob < 1.0):
        raise SpecValidationError("success_prob must lie in (0, 1)")
    count, _ = negbin_from(np.uint64(stream_key & ((1 << 64) - 1)),
                           parents, success_prob)
    if count < 0:
        raise PopulationOverflowError("offspring count exceeds the population cap")
    return int(count)


def marked_omega(environment: SparseEnvironment, n_gens: int,
                 start_block: int = 1,
                 first_block_len: int | None = None) -> np.ndarray:
    """Reproduction probabilities for generations 1..n_gens.

    Block m (counting from ``start_block``) contributes xi_m generations;
    the last one of each block is marked and reproduces with lambda_m,
    all others with 1/2.  ``first_block_len`` overrides the length of the
    first block (the block's lambda is kept).
    """
    if n_gens < 1:
        raise SpecValidationError("horizon must be at least one generation")
    omega = np.full(n_gens, 0.5)
    m = start_block
    acc = 0
    while acc < n_gens:
        environment.ensure_pos(m)
        length = first_block_len if m == start_block and first_block_len is not None \
            else environment.xi(m)
        acc += length
        if acc <= n_gens:
            omega[acc - 1] = environment.lam(m)
        m += 1
    return omega


def dual_omega_of_walk(environment: SparseEnvironment, n_blocks: int) -> np.ndarray:
    """Reproduction probabilities of the chain dual to a fixed environment.

    For the walk run from 0 to its n-th marked site, generation g of the
    dual chain reproduces with the walk's omega at site S_n - g; the
    returned array covers g = 1..S_n (sites S_n - 1 down to 0), which is
    exactly the horizon entering the maximum identity.
    """
    environment.ensure_pos(n_blocks)
    top = environment.S(n_blocks)
    return environment.omega_array(0, top - 1)[::-1].copy()


# ===================================================================
# jitted kernels
# ===================================================================


@njit(cache=True)
def _chain_run(state, omega, imm_until, z0, zbuf):
    """Full path of the chain; zbuf[g] = Z_g for g = 0..len(omega).

    Generation g has Z_{g-1} + [g <= imm_until] parents and draws litters
    of Geometric(omega[g-1]).  Returns (code, state).
    """
    state = np.uint64(state)
    cur = z0
    zbuf[0] = z0
    for g in range(1, omega.shape[0] + 1):
        parents = cur + 1 if g <= imm_until else cur
        cur, state = negbin_from(state, parents, omega[g - 1])
        if cur < 0 or cur > OVERFLOW_LIMIT:
            return _OVERFLOW, state
        zbuf[g] = cur
    return _OK, state


@njit(cache=True)
def _chain_pair_max(state, omega, imm_until, z0):
    """Max of Z_k + Z_{k+1} over k = 0..len(omega)-1; returns (code, max, state)."""
    state = np.uint64(state)
    prev = z0
    best = 0
    for g in range(1, omega.shape[0] + 1):
        parents = prev + 1 if g <= imm_until else prev
        cur, state = negbin_from(state, parents, omega[g - 1])
        if cur < 0 or cur > OVERFLOW_LIMIT:
            return _OVERFLOW, 0, state
        if prev + cur > best:
            best = prev + cur
        prev = cur
    return _OK, best, state


@njit(cache=True)
def _pair_max_batch(keys, omega, imm_until, out):
    for i in range(keys.shape[0]):
        code, best, _ = _chain_pair_max(np.uint64(keys[i]), omega, imm_until, 0)
        if code != _OK:
            return i
        out[i] = best
    return -1


@njit(cache=True)
def _gw_batch(keys, n_gens, z0, p, out):
    """Plain Galton-Watson with Geometric(p) litters, no immigration."""
    for i in range(keys.shape[0]):
        state = np.uint64(keys[i])
        cur = z0
        for g in range(n_gens):
            cur, state = negbin_from(state, cur, p)
            if cur < 0:
                return i
        out[i] = cur
    return -1


@njit(cache=True)
def _counted_immigration_batch(keys, n_gens, p, out):
    """One founder; each generation reproduces and then one immigrant joins."""
    for i in range(keys.shape[0]):
        state = np.uint64(keys[i])
        cur = 1
        for g in range(n_gens):
            cur, state = negbin_from(state, cur, p)
            if cur < 0:
                return i
            cur += 1
        out[i] = cur
    return -1


@njit(cache=True)
def _y_batch(keys, omega, first_len, out_last_unmarked, out_first_marked,
             out_pair_max, out_extinct_gen, codes):
    """Single-immigration-block chain over a fixed horizon.

    Immigration runs through generation first_len; once the population
    hits zero afterwards it is extinct and the replica is finished.
    codes[i]: 0 done, 1 still alive at the horizon, 2 overflow.
    """
    horizon = omega.shape[0]
    for i in range(keys.shape[0]):
        state = np.uint64(keys[i])
        prev = 0
        best = 0
        last_unmarked = 0
        first_marked = 0
        extinct = -1
        code = _HORIZON
        for g in range(1, horizon + 1):
            parents = prev + 1 if g <= first_len else prev
            cur, state = negbin_from(state, parents, omega[g - 1])
            if cur < 0 or cur > OVERFLOW_LIMIT:
                code = _OVERFLOW
                break
            if prev + cur > best:
                best = prev + cur
            if g == first_len - 1:
                last_unmarked = cur
            elif g == first_len:
                first_marked = cur
            prev = cur
            if g > first_len and cur == 0:
                extinct = g
                code = _OK
                break
        codes[i] = code
        out_last_unmarked[i] = last_unmarked
        out_first_marked[i] = first_marked
        out_pair_max[i] = best
        out_extinct_gen[i] = extinct
    return 0


@njit(cache=True)
def _epoch_batch(keys, xi, lam, maxima, taus, codes):
    """Run one extinction epoch per replica from pre-drawn block matrices.

    Blocks are consumed left to right; the epoch ends at the first marked
    generation with an empty population.  codes[i]: 0 done, 1 ran out of
    blocks, 2 overflow.
    """
    n_blocks = xi.shape[1]
    for i in range(keys.shape[0]):
        state = np.uint64(keys[i])
        prev = 0
        best = 0
        code = _HORIZON
        for j in range(n_blocks):
            length = xi[i, j]
            for s in range(1, length + 1):
                p = lam[i, j] if s == length else 0.5
                cur, state = negbin_from(state, prev + 1, p)
                if cur < 0 or cur > OVERFLOW_LIMIT:
                    code = _OVERFLOW
                    break
                if prev + cur > best:
                    best = prev + cur
                prev = cur
            if code == _OVERFLOW:
                break
            if prev == 0:
                maxima[i] = best
                taus[i] = j + 1
                code = _OK
                break
        codes[i] = code
    return 0


# ===================================================================
# traces and single runs
# ===================================================================


@dataclass
class BranchingTrace:
    """One path of the immigration chain over n_blocks blocks."""

    n_blocks: int
    marked_gens: np.ndarray       # S_1..S_n
    marked_values: np.ndarray     # populations at the marked generations
    pair_max: int                 # max of Z_k + Z_{k+1}, k = 0..S_n
    extinction_marks: np.ndarray  # marked indices m with value 0
    epoch_pair_maxima: np.ndarray  # per completed epoch, pairs up to its end
    generations: int              # horizon simulated (S_n + 1)
    z_path: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        d = {
            "n_blocks": self.n_blocks,
            "marked_gens": self.marked_gens.tolist(),
            "marked_values": self.marked_values.tolist(),
            "pair_max": self.pair_max,
            "extinction_marks": self.extinction_marks.tolist(),
            "epoch_pair_maxima": self.epoch_pair_maxima.tolist(),
            "generations": self.generations,
        }
        if self.z_path is not None:
            d["z_path"] = self.z_path.tolist()
        return d


def run_bpsre(environment: SparseEnvironment, n_blocks: int, stream_key: int,
              record: str = "marked") -> BranchingTrace:
    """Simulate the immigration chain through its n-th marked generation.

    The horizon is S_n + 1 so that pair maxima over k = 0..S_n are exact.
    ``record="full"`` keeps the whole path.
    """
    if n_blocks < 1:
        raise SpecValidationError("n_blocks must be at least 1")
    if record not in ("marked", "full"):
        raise SpecValidationError("record must be 'marked' or 'full'")
    environment.ensure_pos(n_blocks + 1)
    s_n = environment.S(n_blocks)
    horizon = s_n + 1
    omega = marked_omega(environment, horizon)
    zbuf = np.zeros(horizon + 1, dtype=np.int64)
    code, _ = _chain_run(np.uint64(stream_key & ((1 << 64) - 1)),
                         omega, horizon, 0, zbuf)
    if code == _OVERFLOW:
        raise PopulationOverflowError("population exceeded the cap; "
                                      "spec is likely not transient")

    marked_gens = np.array([environment.S(m) for m in range(1, n_blocks + 1)],
                           dtype=np.int64)
    marked_values = zbuf[marked_gens]
    pair_max = int((zbuf[:-1] + zbuf[1:]).max())
    ext = np.flatnonzero(marked_values == 0) + 1

    epoch_max = []
    start = 0  # pair index where the current epoch begins
    for m in ext:
        end = int(environment.S(int(m)))  # pairs start..end-1
        epoch_max.append(int((zbuf[start:end] + zbuf[start + 1:end + 1]).max()))
        start = end
    return BranchingTrace(
        n_blocks=n_blocks, marked_gens=marked_gens, marked_values=marked_values,
        pair_max=pair_max, extinction_marks=ext.astype(np.int64),
        epoch_pair_maxima=np.array(epoch_max, dtype=np.int64),
        generations=horizon,
        z_path=zbuf if record == "full" else None)


@dataclass
class YProcessOutcome:
    """Progeny of the immigrants of a single (stretched) first block."""

    first_block_len: int
    last_unmarked: int   # population one generation before the first mark
    first_marked: int    # population at the first marked generation
    pair_max: int        # max of Y_k + Y_{k+1} over the whole lifetime
    extinct_gen: int     # first empty generation after immigration stopped
    blocks_used: int

    def to_json_dict(self) -> dict:
        return {
            "first_block_len": self.first_block_len,
            "last_unmarked": self.last_unmarked,
            "first_marked": self.first_marked,
            "pair_max": self.pair_max,
            "extinct_gen": self.extinct_gen,
            "blocks_used": self.blocks_used,
        }


def run_y_fixed_block(first_block_len: int, environment: SparseEnvironment,
                      stream_key: int, max_blocks: int = 1 << 20) -> YProcessOutcome:
    """Chain fed by immigrants of a first block stretched to a given length.

    One immigrant arrives per generation through ``first_block_len``; the
    block's own lambda still governs its marked generation, and the tail
    blocks of ``environment`` take over from there with no further
    immigration.  Runs until extinction.
    """
    if first_block_len < 1:
        raise SpecValidationError("first_block_len must be at least 1")
    state = np.uint64(stream_key & ((1 << 64) - 1))
    blocks = 8
    done_gens = 0
    z0 = 0
    best = 0
    last_unmarked = 0  # Y_0 = 0 also covers first_block_len == 1
    first_marked = 0
    while True:
        environment.ensure_pos(blocks)
        horizon = first_block_len + sum(
            environment.xi(m) for m in range(2, blocks + 1))
        omega = marked_omega(environment, horizon,
                             first_block_len=first_block_len)
        chunk = omega[done_gens:]
        zbuf = np.zeros(chunk.shape[0] + 1, dtype=np.int64)
        imm_left = max(0, first_block_len - done_gens)
        code, state = _chain_run(np.uint64(state), chunk, imm_left, z0, zbuf)
        if code == _OVERFLOW:
            raise PopulationOverflowError("population exceeded the cap")
        best = max(best, int((zbuf[:-1] + zbuf[1:]).max()))
        lo = done_gens  # global index of zbuf[0]
        if lo <= first_block_len - 1 <= lo + chunk.shape[0]:
            last_unmarked = int(zbuf[first_block_len - 1 - lo])
        if lo <= first_block_len <= lo + chunk.shape[0]:
            first_marked = int(zbuf[first_block_len - lo])
        # extinct once the population dies after immigration stopped
        dead = np.flatnonzero(zbuf[1:] == 0) + 1
        dead = dead[dead + lo > first_block_len]
        if dead.size:
            return YProcessOutcome(
                first_block_len=first_block_len, last_unmarked=last_unmarked,
                first_marked=first_marked, pair_max=best,
                extinct_gen=int(dead[0] + lo), blocks_used=blocks)
        done_gens += chunk.shape[0]
        z0 = int(zbuf[-1])
        blocks *= 2
        if blocks > max_blocks:
            raise RwsreError(f"no extinction within {max_blocks} blocks; "
                             "spec is likely not transient")


@dataclass
class UProcessOutcome:
    """Progeny of one founder, no immigration, read at marked generations."""

    start_block: int
    marked_values: np.ndarray
    extinct_mark: int | None

    def to_json_dict(self) -> dict:
        return {
            "start_block": self.start_block,
            "marked_values": self.marked_values.tolist(),
            "extinct_mark": self.extinct_mark,
        }


def run_u_process(environment: SparseEnvironment, n_blocks: int,
                  stream_key: int, start_block: int = 1) -> UProcessOutcome:
    """One founder at the start of a block, evolved over n_blocks blocks."""
    if n_blocks < 1:
        raise SpecValidationError("n_blocks must be at least 1")
    environment.ensure_pos(start_block + n_blocks - 1)
    lengths = [environment.xi(m)
               for m in range(start_block, start_block + n_blocks)]
    horizon = int(sum(lengths))
    omega = marked_omega(environment, horizon, start_block=start_block)
    zbuf = np.zeros(horizon + 1, dtype=np.int64)
    code, _ = _chain_run(np.uint64(stream_key & ((1 << 64) - 1)),
                         omega, 0, 1, zbuf)
    if code == _OVERFLOW:
        raise PopulationOverflowError(
            "population exceeded the cap (expansion-dominated spec)")
    marks = np.cumsum(np.array(lengths, dtype=np.int64))
    values = zbuf[marks]
    dead = np.flatnonzero(values == 0)
    return UProcessOutcome(
        start_block=start_block, marked_values=values,
        extinct_mark=int(dead[0] + 1) if dead.size else None)


# ===================================================================
# annealed epoch sampling
# ===================================================================

_EPOCH_STRIDE = 1 << 20  # per-replica counter stride into the block streams


@dataclass
class EpochSample:
    """Per-epoch pair maxima and epoch lengths (in blocks)."""

    maxima: np.ndarray
    taus: np.ndarray

    def to_json_dict(self) -> dict:
        return {"maxima": self.maxima.tolist(), "taus": self.taus.tolist()}


def epoch_pair_maxima(spec, n_epochs: int, seed: int,
                      block_chunk: int = 32) -> EpochSample:
    """Sample complete extinction epochs of the immigration chain.

    Each epoch runs in a fresh environment until the first marked
    generation with an empty population, recording the maximum of
    Z_k + Z_{k+1} over the epoch and the epoch length in blocks.
    Replicas that outlive the current block horizon are replayed from
    scratch on a doubled horizon; the per-replica streams make the
    replay consistent.
    """
    from .env import sample_block_values

    if n_epochs < 1:
        raise SpecValidationError("n_epochs must be at least 1")
    block_seed = rng.derive_key(seed, rng.EPOCH)
    keys = rng.stream_u64(rng.derive_key(seed, rng.EPOCH, 1),
                          np.arange(n_epochs, dtype=np.uint64))
    maxima = np.zeros(n_epochs, dtype=np.int64)
    taus = np.zeros(n_epochs, dtype=np.int64)
    rows = np.arange(n_epochs)
    horizon = block_chunk
    while rows.size:
        if horizon > _EPOCH_STRIDE:
            raise RwsreError("epoch exceeded the block-stream stride; "
                             "spec is likely not transient")
        codes_grid = (rows[:, None].astype(np.int64) * _EPOCH_STRIDE
                      + np.arange(horizon, dtype=np.int64)[None, :])
        xi, lam = sample_block_values(spec, block_seed, codes_grid)
        sub_max = np.zeros(rows.size, dtype=np.int64)
        sub_tau = np.zeros(rows.size, dtype=np.int64)
        sub_codes = np.zeros(rows.size, dtype=np.int64)
        _epoch_batch(keys[rows], xi.astype(np.int64), lam,
                     sub_max, sub_tau, sub_codes)
        if np.any(sub_codes == _OVERFLOW):
            raise PopulationOverflowError("population exceeded the cap")
        done = sub_codes == _OK
        maxima[rows[done]] = sub_max[done]
        taus[rows[done]] = sub_tau[done]
        rows = rows[~done]
        horizon *= 2
    return EpochSample(maxima=maxima, taus=taus)


# ===================================================================
# batched samplers used by the verification experiments
# ===================================================================


def _replica_keys(seed: int, purpose: int, n: int,
                  first_index: int = 0) -> np.ndarray:
    return rng.stream_u64(rng.derive_key(seed, purpose),
                          np.arange(first_index, first_index + n,
                                    dtype=np.uint64))


def sample_pair_max(omega: np.ndarray, seed: int, n_replicas: int,
                    first_index: int = 0) -> np.ndarray:
    """Pair maxima of the immigration chain over a fixed horizon.

    Immigration lasts the whole horizon, matching the walk read from its
    target: 1 + (returned maxima) is distributed as the walk's maximal
    local time over the sites 0..len(omega).  ``first_index`` shifts the
    replica numbering so a batch can be produced in independent slices.
    """
    keys = _replica_keys(seed, rng.BRANCH, n_replicas, first_index)
    out = np.zeros(n_replicas, dtype=np.int64)
    bad = _pair_max_batch(keys, omega, omega.shape[0], out)
    if bad >= 0:
        raise PopulationOverflowError(f"population cap hit in replica {bad}")
    return out


def sample_critical_gw(seed: int, n_replicas: int, n_gens: int,
                       initial: int) -> np.ndarray:
    """Populations after n_gens of critical Geometric(1/2) reproduction."""
    keys = _replica_keys(seed, rng.BRANCH, n_replicas)
    out = np.zeros(n_replicas, dtype=np.int64)
    bad = _gw_batch(keys, n_gens, initial, 0.5, out)
    if bad >= 0:
        raise PopulationOverflowError(f"population cap hit in replica {bad}")
    return out


def sample_counted_immigration(seed: int, n_replicas: int,
                               n_gens: int) -> np.ndarray:
    """Critical chain with the arriving immigrant counted each generation."""
    keys = _replica_keys(seed, rng.BRANCH, n_replicas)
    out = np.zeros(n_replicas, dtype=np.int64)
    bad = _counted_immigration_batch(keys, n_gens, 0.5, out)
    if bad >= 0:
        raise PopulationOverflowError(f"population cap hit in replica {bad}")
    return out


def sample_y_outcomes(first_block_len: int, omega: np.ndarray, seed: int,
                      n_replicas: int, environment: SparseEnvironment | None = None):
    """Batched single-block runs over a fixed reproduction array.

    Replicas still alive at the end of ``omega`` are replayed through
    ``run_y_fixed_block`` on ``environment`` (required in that case).
    Returns (last_unmarked, first_marked, pair_max) arrays.
    """
    keys = _replica_keys(seed, rng.BRANCH, n_replicas)
    lastun = np.zeros(n_replicas, dtype=np.int64)
    marked = np.zeros(n_replicas, dtype=np.int64)
    pmax = np.zeros(n_replicas, dtype=np.int64)
    extg = np.zeros(n_replicas, dtype=np.int64)
    codes = np.zeros(n_replicas, dtype=np.int64)
    _y_batch(keys, omega, first_block_len, lastun, marked, pmax, extg, codes)
    if np.any(codes == _OVERFLOW):
        raise PopulationOverflowError("population cap hit")
    for i in np.flatnonzero(codes == _HORIZON):
        if environment is None:
            raise RwsreError("replica outlived the fixed horizon and no "
                             "environment was given for the replay")
        oc = run_y_fixed_block(first_block_len, environment, int(keys[i]))
        lastun[i], marked[i], pmax[i] = (oc.last_unmarked, oc.first_marked,
                                         oc.pair_max)
    return lastun, marked, pmax
