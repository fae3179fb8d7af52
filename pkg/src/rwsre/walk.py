"""Trajectory simulation for the walk and its local times.

The walk starts at 0 and steps right with probability ``omega(site)`` until
it first hits a target site.  Everything observable afterwards (local times,
left-step counts, the favourite site) is accumulated in contiguous arrays
indexed from the leftmost visited site.  The negative side of the
environment is realized lazily as the walk wanders below previously
explored ground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng
from .env import SparseEnvironment
from .errors import BudgetExceededError, RwsreError, SpecValidationError
from .rng import negbin_from, unit_from

DEFAULT_STEP_BUDGET = 10 ** 9

_DONE = 0
_EXTEND = 1
_BUDGET = 2


@njit(cache=True)
def _steps_kernel(state, pos, t, left_edge, target, omega, local, lsteps, budget):
    """Advance the walk until target / left edge / budget.

    ``omega[i]`` is the right-step probability of site ``left_edge + i``
    (defined for sites up to target - 1).  ``local`` and ``lsteps`` count
    visits and left steps per site with the same offset.  Returns
    (code, state, pos, t).
    """
    state = np.uint64(state)
    while True:
        if pos == target:
            return _DONE, state, pos, t
        if t >= budget:
            return _BUDGET, state, pos, t
        if pos == left_edge:
            return _EXTEND, state, pos, t
        u, state = unit_from(state)
        if u < omega[pos - left_edge]:
            pos += 1
        else:
            pos -= 1
            lsteps[pos - left_edge] += 1
        local[pos - left_edge] += 1
        t += 1


@dataclass
class WalkOutcome:
    """Everything recorded about one completed trajectory.

    ``local_times[i]`` and ``left_steps[i]`` refer to site
    ``min_site_visited + i``; the arrays run through the target site.
    """

    target: int
    duration: int
    min_site_visited: int
    local_times: np.ndarray
    left_steps: np.ndarray
    max_local_time: int
    max_local_time_nonneg: int  # max over sites 0..target only
    favourite_site: int
    steps_on_negative_axis: int

    def local_time_at(self, site: int) -> int:
        if site < self.min_site_visited or site > self.target:
            return 0
        return int(self.local_times[site - self.min_site_visited])

    def left_steps_at(self, site: int) -> int:
        if site < self.min_site_visited or site > self.target:
            return 0
        return int(self.left_steps[site - self.min_site_visited])

    def to_json_dict(self, profile_points: int | None = None) -> dict:
        local = self.local_times
        sites = np.arange(self.min_site_visited, self.target + 1)
        if profile_points is not None and profile_points < len(local):
            idx = np.unique(np.linspace(0, len(local) - 1, profile_points).astype(int))
            sites, local = sites[idx], local[idx]
        return {
            "target": self.target,
            "duration": self.duration,
            "min_site_visited": self.min_site_visited,
            "max_local_time": self.max_local_time,
            "max_local_time_nonneg": self.max_local_time_nonneg,
            "favourite_site": self.favourite_site,
            "steps_on_negative_axis": self.steps_on_negative_axis,
            "profile_sites": sites.tolist(),
            "profile_local_times": local.tolist(),
        }


def verify_pathwise_identity(outcome: WalkOutcome) -> None:
    """Assert the exact counting identities of a completed trajectory.

    Visits satisfy L_k = [k >= 0] + Zt_{k-1} + Zt_k where Zt counts the
    steps k+1 -> k, every time index occupies one site, and the target is
    visited exactly once.
    """
    loc, ls = outcome.local_times, outcome.left_steps
    assert int(loc.sum()) == outcome.duration + 1, "time indices must partition visits"
    assert loc[-1] == 1, "first arrival at the target ends the walk"
    sites = np.arange(outcome.min_site_visited, outcome.target + 1)
    zprev = np.concatenate([[0], ls[:-1]])
    expected = (sites >= 0).astype(np.int64) + zprev + ls
    assert np.array_equal(loc, expected), "left-step reconstruction mismatch"


def _build_outcome(target, t, left_edge, local, lsteps) -> WalkOutcome:
    first = int(np.argmax(local > 0))
    min_site = left_edge + first
    loc = local[first:]
    ls = lsteps[first:]
    neg_len = max(0, -min_site)
    return WalkOutcome(
        target=target,
        duration=t,
        min_site_visited=min_site,
        local_times=loc,
        left_steps=ls,
        max_local_time=int(loc.max()),
        max_local_time_nonneg=int(loc[neg_len:].max()),
        favourite_site=min_site + int(np.argmax(loc)),
        steps_on_negative_axis=int(loc[:neg_len].sum()),
    )


def _cover_left(environment: SparseEnvironment, left_edge: int) -> None:
    while environment.span[0] > left_edge:
        environment.ensure_neg(max(4, 2 * environment.n_neg))


def run_walk_to(environment: SparseEnvironment, target: int, stream_key: int,
                step_budget: int = DEFAULT_STEP_BUDGET) -> WalkOutcome:
    """Simulate from 0 until the first visit to ``target``.

    ``stream_key`` seeds the step randomness (see rng.derive_key); the
    environment is extended on demand as the walk explores leftward.
    Raises BudgetExceededError (with partial statistics attached) when the
    walk takes ``step_budget`` steps without reaching the target.
    """
    if target < 1:
        raise SpecValidationError("target must be a positive site")
    while environment.span[1] < target:
        environment.ensure_pos(max(4, 2 * environment.n_pos))

    left_edge = -32
    _cover_left(environment, left_edge)
    size = target - left_edge + 1
    local = np.zeros(size, dtype=np.int64)
    lsteps = np.zeros(size, dtype=np.int64)
    local[-left_edge] = 1  # time 0 sits at the origin
    omega = environment.omega_array(left_edge, target - 1)

    state = np.uint64(stream_key & ((1 << 64) - 1))
    pos, t = 0, 0
    while True:
        # numba boxes the uint64 state as a plain int; re-wrap before dispatch
        code, state, pos, t = _steps_kernel(
            np.uint64(state), pos, t, left_edge, target, omega, local, lsteps,
            step_budget)
        if code == _DONE:
            break
        if code == _BUDGET:
            partial = _build_outcome(target, t, left_edge, local, lsteps)
            raise BudgetExceededError(
                f"no visit to {target} within {step_budget} steps "
                "(non-transient spec or budget too small)", partial=partial)
        grow = max(32, (target - left_edge) // 2)
        pad = np.zeros(grow, dtype=np.int64)
        local = np.concatenate([pad, local])
        lsteps = np.concatenate([pad, lsteps])
        left_edge -= grow
        _cover_left(environment, left_edge)
        omega = environment.omega_array(left_edge, target - 1)

    outcome = _build_outcome(target, t, left_edge, local, lsteps)
    verify_pathwise_identity(outcome)
    return outcome


def max_local_time_to_marked(environment: SparseEnvironment, n_blocks: int,
                             stream_key: int,
                             step_budget: int = DEFAULT_STEP_BUDGET):
    """Run to the n-th marked site; returns (max local time, S_n, duration)."""
    if n_blocks < 1:
        raise SpecValidationError("n_blocks must be at least 1")
    environment.ensure_pos(n_blocks)
    target = environment.S(n_blocks)
    outcome = run_walk_to(environment, target, stream_key, step_budget)
    return outcome.max_local_time, target, outcome.duration


# ===================================================================
# symmetric-walk local-time profiles
#
# For the simple symmetric walk stopped at its first visit to n, the
# left-step counts read from the target downward form a critical
# geometric branching chain R with one immigrant per generation while
# the underlying site is nonnegative: L_k = 1 + R_{n-k-1} + R_{n-k} for
# 0 <= k <= n - 1, L_n = 1, and the generations past n encode the time
# spent left of the origin.  One replica then costs O(n + extinction
# time) draws instead of a full trajectory, whose expected step count
# diverges.
# ===================================================================


@njit(cache=True)
def _sym_branch_kernel(state, n, zbuf, max_gens, run_tail):
    """Critical geometric chain with immigration through generation n.

    Fills zbuf[0..n] and then, when run_tail is set, runs the remaining
    mass to extinction without immigration.  Returns (code, tail_sum,
    last_gen) with code 0 on success, 1 on population overflow, 2 when
    max_gens was hit; tail_sum collects the generation sizes beyond n
    and last_gen is the final generation with a positive population (any
    value <= n - 1 when generation n is already empty).
    """
    state = np.uint64(state)
    cur = 0
    zbuf[0] = 0
    for g in range(1, n + 1):
        cur, state = negbin_from(state, cur + 1, 0.5)
        if cur < 0:
            return 1, 0, 0
        zbuf[g] = cur
    if not run_tail:
        return 0, -1, -1
    tail = 0
    g = n
    if cur == 0:
        return 0, 0, n - 1
    while cur > 0:
        g += 1
        if g > max_gens:
            return 2, tail, g - 1
        cur, state = negbin_from(state, cur, 0.5)
        if cur < 0:
            return 1, tail, g - 1
        tail += cur
    return 0, tail, g - 1


@dataclass
class ProfileSample:
    """Normalized reversed local-time profile of one symmetric-walk run."""

    n: int
    times: np.ndarray        # grid points t in [0, 1]
    values: np.ndarray       # L_{floor(n(1-t))} / n on the grid
    max_scaled: float        # max over sites 0..n of L_k / n
    l0_scaled: float         # L_0 / n
    duration: int | None     # None when the below-origin part was skipped
    min_site: int | None
    local_times: np.ndarray = field(repr=False)  # L_k for sites 0..n
    neg_local_total: int | None = 0  # total time spent left of the origin

    def check_counts(self) -> None:
        if self.duration is None:
            return
        assert int(self.local_times.sum()) + self.neg_local_total == self.duration + 1


def simple_walk_local_profile(n: int, stream_key: int, grid_points: int = 101,
                              max_generations: int = 1 << 40,
                              negative_side: bool = True) -> ProfileSample:
    """Local times of a simple symmetric walk run from 0 to n.

    Exact in distribution, including the walk's excursions below the
    origin (they are the branching generations beyond n+1, so the count
    identity sum_k L_k = duration + 1 holds on every sample).  Passing
    negative_side=False skips that heavy-tailed continuation: the sites
    0..n keep the exact joint law while duration, min_site and
    neg_local_total come back as None.
    """
    if n < 2:
        raise SpecValidationError("profile needs n >= 2")
    zbuf = np.zeros(n + 1, dtype=np.int64)
    code, tail, last_gen = _sym_branch_kernel(
        np.uint64(stream_key & ((1 << 64) - 1)), n, zbuf, max_generations,
        negative_side)
    if code == 1:
        raise RwsreError("population overflow in profile chain")
    if code == 2:
        raise RwsreError(f"no extinction within {max_generations} generations")

    # L_k = 1 + R_{n-k-1} + R_{n-k} for k = 0..n (R_{-1} taken as 0)
    below = np.append(zbuf[:n][::-1], 0)
    local = 1 + zbuf[::-1] + below
    if negative_side:
        neg_total = int(zbuf[n] + 2 * tail)
        duration = int(local.sum()) + neg_total - 1
        min_site = -max(0, last_gen - n + 1)
    else:
        neg_total = None
        duration = None
        min_site = None

    times = np.linspace(0.0, 1.0, grid_points)
    sites = np.floor(n * (1.0 - times)).astype(np.int64)
    values = local[sites] / n

    sample = ProfileSample(
        n=n, times=times, values=values,
        max_scaled=float(local.max()) / n,
        l0_scaled=float(local[0]) / n,
        duration=duration, min_site=min_site,
        local_times=local, neg_local_total=neg_total,
    )
    sample.check_counts()
    return sample
