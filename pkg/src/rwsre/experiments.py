"""Verification campaigns tying the walk, branching and potential layers together.

Each experiment draws Monte Carlo samples through the deterministic
chunked driver, compares them against an independent reference (exact
moments, a coupled sampler, or a fitted limit law), and reports verdicts
with the thresholds they were tested at.  Replica i derives its streams
from (base_seed, i) alone, so results are bit-identical for any worker
count or chunking.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as scistats

from . import branching, env as envm, potential, rng, stats, walk
from .errors import (BudgetExceededError, RegimeMismatchError,
                     SpecValidationError)

log = logging.getLogger("rwsre.experiments")

# replicas per work unit; values never depend on it (streams are keyed
# by absolute replica index), it only sizes the units handed to workers
_CHUNK = 256


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo budget: replica i uses streams derived from
    (base_seed, i) via the counter RNG, never from worker identity."""

    replicas: int
    base_seed: int
    workers: int = 1

    def __post_init__(self):
        if self.replicas < 1:
            raise SpecValidationError("replicas must be positive")
        if self.workers < 1:
            raise SpecValidationError("workers must be positive")


@dataclass(frozen=True)
class Verdict:
    name: str       # the identity or limit statement being tested
    status: str     # "pass" | "fail" | "inconclusive"
    observed: float
    threshold: str
    detail: str = ""

    def to_json_dict(self) -> dict:
        return {"name": self.name, "status": self.status,
                "observed": _jsonify(self.observed),
                "threshold": self.threshold, "detail": self.detail}


@dataclass
class ExperimentResult:
    experiment: str
    parameters: dict
    summary: dict
    verdicts: list
    samples: dict = field(repr=False, default_factory=dict)
    timing: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(v.status == "fail" for v in self.verdicts)

    def to_json_dict(self, sample_file: str | None = None) -> dict:
        # timing stays out on purpose: the JSON must be reproducible
        return {
            "experiment": self.experiment,
            "parameters": _jsonify(self.parameters),
            "summary": _jsonify(self.summary),
            "verdicts": [v.to_json_dict() for v in self.verdicts],
            "samples": {
                "file": sample_file,
                "sets": {k: int(np.asarray(v).size)
                         for k, v in sorted(self.samples.items())},
            },
        }


def _jsonify(value):
    if isinstance(value, dict):
        return {str(k): _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    return value


def _interval_verdict(name: str, value: float, lo: float, hi: float,
                      detail: str = "", ci_half: float | None = None) -> Verdict:
    """Pass when value lies in [lo, hi]; inconclusive when the reported
    confidence halfwidth exceeds the interval's own half width."""
    threshold = f"[{lo:g}, {hi:g}]"
    if ci_half is not None and ci_half > (hi - lo) / 2.0:
        return Verdict(name, "inconclusive", float(value), threshold,
                       detail or f"ci halfwidth {ci_half:.3g} wider than the band")
    status = "pass" if lo <= value <= hi else "fail"
    return Verdict(name, status, float(value), threshold, detail)


def _upper_verdict(name: str, value: float, bound: float,
                   detail: str = "") -> Verdict:
    status = "pass" if value < bound else "fail"
    return Verdict(name, status, float(value), f"< {bound:g}", detail)


def _lower_verdict(name: str, value: float, bound: float,
                   detail: str = "") -> Verdict:
    status = "pass" if value > bound else "fail"
    return Verdict(name, status, float(value), f"> {bound:g}", detail)


def _sigma_verdict(name: str, value: float, target: float, se: float,
                   sigmas: float) -> Verdict:
    dev = abs(value - target) / se if se > 0 else math.inf
    status = "pass" if dev <= sigmas else "fail"
    return Verdict(name, status, float(value),
                   f"|x - {target:g}| <= {sigmas:g} se",
                   f"se={se:.4g}, deviation={dev:.2f} se")


# ===================================================================
# deterministic chunked driver
# ===================================================================


def _sub_seed(base_seed: int, *tags: int) -> int:
    """Child seed for a named sub-stream of one experiment."""
    return int(rng.derive_key(base_seed, rng.GENERIC, *tags))


def _replica_seed(sub_seed: int, index: int) -> int:
    return int(rng.derive_key(sub_seed, rng.GENERIC, index))


def _run_chunked(task, args: tuple, replicas: int, workers: int) -> dict:
    """Map a chunk task over replica ranges and fold in index order.

    The task signature is task(*args, start, stop) -> dict of arrays of
    length stop - start.  Chunk boundaries depend only on the replica
    count, and every stream is keyed by absolute replica index, so the
    fold is bit-identical for any worker count.
    """
    spans = [(s, min(s + _CHUNK, replicas)) for s in range(0, replicas, _CHUNK)]
    if workers <= 1 or len(spans) == 1:
        parts = [task(*args, s, e) for s, e in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(task, *args, s, e) for s, e in spans]
            parts = [f.result() for f in futures]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _timed(result: ExperimentResult, t0: float, replicas: int,
           workers: int) -> ExperimentResult:
    wall = time.perf_counter() - t0
    result.timing = {
        "wall_seconds": wall,
        "replicas": replicas,
        "replicas_per_second": replicas / wall if wall > 0 else math.inf,
        "workers": workers,
    }
    return result


# ===================================================================
# canonical specifications
# ===================================================================


def canonical_regime_a_spec() -> envm.EnvSpec:
    """Unit tail index: blocks of length 2, drift lambda in {1/3, 2/3}
    favouring the right twice as often."""
    return envm.EnvSpec(xi_dist=envm.Constant(2.0),
                        lambda_dist=envm.TwoPoint(1 / 3, 2 / 3, 2 / 3))


def canonical_regime_b_spec(beta: float = 1.5) -> envm.EnvSpec:
    """Heavy-tailed block lengths with a uniform right drift rho = 1/2."""
    return envm.EnvSpec(xi_dist=envm.DiscretePareto(beta),
                        lambda_dist=envm.Constant(2 / 3))


def duality_test_spec() -> envm.EnvSpec:
    """Light-tailed transient spec keeping first-passage times short."""
    return envm.EnvSpec(xi_dist=envm.TwoPoint(1.0, 3.0, 0.5),
                        lambda_dist=envm.TwoPoint(0.6, 0.75, 0.5))


# replica-index offsets keeping independent sample sets disjoint
_OFF_PARTNER = 1 << 40
_OFF_QUENCHED_WALK = 2 << 40
_OFF_QUENCHED_BRANCH = 3 << 40
_OFF_REFERENCE = 4 << 40


# ===================================================================
# duality: the walk's local times against the immigration chain
# ===================================================================


def _duality_walk_chunk(spec, n_blocks, sub_seed, budget, offset, start, stop):
    """Walk-side maxima on per-replica environments, with the pathwise
    count identities asserted on every completed trajectory."""
    m = stop - start
    vals = np.full(m, -1, dtype=np.int64)
    violations = np.zeros(m, dtype=np.int64)
    budget_hits = np.zeros(m, dtype=np.int64)
    for j in range(m):
        rep = _replica_seed(sub_seed, offset + start + j)
        e = envm.sample_environment(spec, rep, n_blocks)
        try:
            out = walk.run_walk_to(e, e.S(n_blocks),
                                   int(rng.derive_key(rep, rng.WALK)),
                                   step_budget=budget)
            vals[j] = out.max_local_time_nonneg
        except AssertionError:
            violations[j] = 1
        except BudgetExceededError:
            budget_hits[j] = 1
    return {"value": vals, "violations": violations, "budget_hits": budget_hits}


def _duality_branch_chunk(spec, n_blocks, sub_seed, offset, start, stop):
    """Branch-side maxima: per-replica environment, read from the target."""
    m = stop - start
    vals = np.empty(m, dtype=np.int64)
    for j in range(m):
        rep = _replica_seed(sub_seed, offset + start + j)
        e = envm.sample_environment(spec, rep, n_blocks)
        omega = branching.dual_omega_of_walk(e, n_blocks)
        vals[j] = 1 + int(branching.sample_pair_max(omega, rep, 1)[0])
    return {"value": vals}


def _duality_fixed_walk_chunk(environment, target, sub_seed, budget,
                              offset, start, stop):
    m = stop - start
    vals = np.full(m, -1, dtype=np.int64)
    budget_hits = np.zeros(m, dtype=np.int64)
    for j in range(m):
        rep = _replica_seed(sub_seed, offset + start + j)
        try:
            out = walk.run_walk_to(environment, target,
                                   int(rng.derive_key(rep, rng.WALK)),
                                   step_budget=budget)
            vals[j] = out.max_local_time_nonneg
        except BudgetExceededError:
            budget_hits[j] = 1
    return {"value": vals, "budget_hits": budget_hits}


def _duality_fixed_branch_chunk(omega, sub_seed, start, stop):
    vals = 1 + branching.sample_pair_max(
        omega, _sub_seed(sub_seed, _OFF_QUENCHED_BRANCH), stop - start,
        first_index=start)
    return {"value": vals}


def verify_duality(spec: envm.EnvSpec, n_blocks: int, mc: McConfig,
                   fixed_environment=None, thresholds: dict | None = None,
                   step_budget: int = walk.DEFAULT_STEP_BUDGET) -> ExperimentResult:
    """Check that local-time maxima match their branching representation.

    Three comparisons: (i) pathwise, the left-step reconstruction of
    every completed walk must hold exactly; (ii) quenched, walk and
    chain maxima on one shared environment; (iii) annealed, both sides
    on independently resampled environments.
    """
    t0 = time.perf_counter()
    thr = {"ks_p_min": 0.01}
    thr.update(thresholds or {})
    checks = envm.analyze_regime(spec)
    if checks.regime == "NotTransient":
        raise RegimeMismatchError("duality harness needs a transient spec")

    if fixed_environment is None:
        fixed_environment = envm.sample_environment(
            spec, _sub_seed(mc.base_seed, _OFF_REFERENCE), n_blocks)
    fixed_environment.ensure_pos(n_blocks)
    target = fixed_environment.S(n_blocks)

    annealed_walk = _run_chunked(
        _duality_walk_chunk, (spec, n_blocks, mc.base_seed, step_budget, 0),
        mc.replicas, mc.workers)
    annealed_branch = _run_chunked(
        _duality_branch_chunk, (spec, n_blocks, mc.base_seed, _OFF_PARTNER),
        mc.replicas, mc.workers)
    quenched_walk = _run_chunked(
        _duality_fixed_walk_chunk,
        (fixed_environment, target, mc.base_seed, step_budget,
         _OFF_QUENCHED_WALK), mc.replicas, mc.workers)
    omega = branching.dual_omega_of_walk(fixed_environment, n_blocks)
    quenched_branch = _run_chunked(
        _duality_fixed_branch_chunk, (omega, mc.base_seed),
        mc.replicas, mc.workers)

    violations = int(annealed_walk["violations"].sum())
    budget_hits = int(annealed_walk["budget_hits"].sum()
                      + quenched_walk["budget_hits"].sum())
    aw = annealed_walk["value"][annealed_walk["value"] >= 0]
    qw = quenched_walk["value"][quenched_walk["value"] >= 0]
    d_q, p_q = stats.ks_two_sample(qw, quenched_branch["value"])
    d_a, p_a = stats.ks_two_sample(aw, annealed_branch["value"])

    completed = int(aw.size)
    verdicts = [
        Verdict("pathwise-count-identity",
                "pass" if violations == 0 else "fail", violations, "== 0",
                f"{completed} completed walks"),
        _lower_verdict("duality-ks-quenched", p_q, thr["ks_p_min"],
                       f"distance {d_q:.4f} on {qw.size} vs "
                       f"{quenched_branch['value'].size}"),
        _lower_verdict("duality-ks-annealed", p_a, thr["ks_p_min"],
                       f"distance {d_a:.4f} on {aw.size} vs "
                       f"{annealed_branch['value'].size}"),
    ]
    result = ExperimentResult(
        experiment="duality",
        parameters={"spec": spec.to_json_dict(), "n_blocks": n_blocks,
                    "replicas": mc.replicas, "base_seed": mc.base_seed,
                    "thresholds": thr, "fixed_target": target},
        summary={
            "pathwise_violations": violations,
            "budget_hits": budget_hits,
            "quenched_ks_distance": d_q, "quenched_ks_p": p_q,
            "annealed_ks_distance": d_a, "annealed_ks_p": p_a,
            "annealed_walk_mean": float(aw.mean()),
            "annealed_branch_mean": float(annealed_branch["value"].mean()),
            "quenched_walk_mean": float(qw.mean()),
            "quenched_branch_mean": float(quenched_branch["value"].mean()),
        },
        verdicts=verdicts,
        samples={
            "annealed_walk_max": aw,
            "annealed_branch_max": annealed_branch["value"],
            "quenched_walk_max": qw,
            "quenched_branch_max": quenched_branch["value"],
        },
    )
    return _timed(result, t0, 4 * mc.replicas, mc.workers)


# ===================================================================
# exact reproduction moments on fixed environments
# ===================================================================

_U_TEST_XI = (2, 3, 1, 2)
_U_TEST_LAM = (0.6, 0.4, 0.7, 0.55)
_Y_TEST_BLOCK = 10


def _u_process_chunk(xi, lam, sub_seed, start, stop):
    e = envm.SparseEnvironment.from_blocks(xi, lam)
    n = len(xi)
    vals = np.empty((stop - start, n), dtype=np.int64)
    for j in range(stop - start):
        rep = _replica_seed(sub_seed, start + j)
        oc = branching.run_u_process(e, n, int(rng.derive_key(rep, rng.BRANCH)))
        vals[j] = oc.marked_values
    return {"marked": vals}


def verify_exact_moments(mc: McConfig,
                         thresholds: dict | None = None) -> ExperimentResult:
    """Closed-form reproduction moments hit by plain Monte Carlo.

    Covers the centred-geometric tree variance 2*N*x0, the immigrant
    count law Geo(1/(N+1)), the drift-product means of the single-seed
    chain, and the first two moments of the single-block first marked
    generation.
    """
    t0 = time.perf_counter()
    thr = {"sigmas": 3.0, "chi2_p_min": 0.01}
    thr.update(thresholds or {})
    sig = thr["sigmas"]
    R = mc.replicas
    verdicts, summary, samples = [], {}, {}

    # --- no-immigration critical tree: Var X_N = 2 N x0 ---
    for case, (n_gens, x0) in enumerate([(5, 1), (20, 5)]):
        vals = branching.sample_critical_gw(
            _sub_seed(mc.base_seed, 1, case), R, n_gens, x0)
        v = float(vals.var(ddof=1))
        centred = (vals - vals.mean()) ** 2
        se_var = float(centred.std(ddof=1)) / math.sqrt(R)
        target = 2.0 * n_gens * x0
        verdicts.append(_sigma_verdict(
            f"tree-variance-N{n_gens}-x{x0}", v, target, se_var, sig))
        summary[f"tree_variance_N{n_gens}_x{x0}"] = v
        samples[f"tree_N{n_gens}_x{x0}"] = vals

    # --- immigrant count: I_N ~ Geo(1/(N+1)) on {1, 2, ...} ---
    for case, n_gens in enumerate([5, 20]):
        vals = branching.sample_counted_immigration(
            _sub_seed(mc.base_seed, 2, case), R, n_gens)
        p_geo = 1.0 / (n_gens + 1)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1)) / math.sqrt(R)
        verdicts.append(_sigma_verdict(
            f"immigrant-count-mean-N{n_gens}", mean, n_gens + 1.0, se, sig))
        _, _, p_val = stats.chi2_discrete(
            vals, lambda k, q=p_geo: q * (1 - q) ** (k - 1) if k >= 1 else 0.0)
        verdicts.append(_lower_verdict(
            f"immigrant-count-chi2-N{n_gens}", p_val, thr["chi2_p_min"]))
        summary[f"immigrant_count_mean_N{n_gens}"] = mean
        samples[f"immigrant_count_N{n_gens}"] = vals

    # --- single seed, no immigration: E U_n = Pi_{1,n} quenched ---
    marked = _run_chunked(
        _u_process_chunk,
        (_U_TEST_XI, _U_TEST_LAM, _sub_seed(mc.base_seed, 3)),
        R, mc.workers)["marked"]
    rhos = [envm.rho(l) for l in _U_TEST_LAM]
    for b in range(len(_U_TEST_XI)):
        target = potential.pi_product(rhos, 1, b + 1)
        mean = float(marked[:, b].mean())
        se = float(marked[:, b].std(ddof=1)) / math.sqrt(R)
        verdicts.append(_sigma_verdict(
            f"seed-chain-mean-block{b + 1}", mean, target, se, sig))
        summary[f"seed_chain_mean_block{b + 1}"] = mean
    samples["seed_chain_final"] = marked[:, -1]

    # --- single block of length N, lambda = 2/3: first marked generation ---
    n_first = _Y_TEST_BLOCK
    spec_y = envm.EnvSpec(xi_dist=envm.Constant(2.0),
                          lambda_dist=envm.Constant(2 / 3))
    env_y = envm.sample_environment(spec_y, _sub_seed(mc.base_seed, 4), 8)
    omega_y = branching.marked_omega(env_y, 6 * n_first,
                                     first_block_len=n_first)
    last_un, first_marked, _ = branching.sample_y_outcomes(
        n_first, omega_y, _sub_seed(mc.base_seed, 5), R, environment=env_y)
    rho1 = envm.rho(2 / 3)
    mean1 = float(first_marked.mean())
    se1 = float(first_marked.std(ddof=1)) / math.sqrt(R)
    verdicts.append(_sigma_verdict(
        "block-end-mean", mean1, n_first * rho1, se1, sig))
    sq = first_marked.astype(np.float64) ** 2
    target2 = 2.0 * (n_first * rho1) ** 2 + n_first * rho1
    verdicts.append(_sigma_verdict(
        "block-end-second-moment", float(sq.mean()), target2,
        float(sq.std(ddof=1)) / math.sqrt(R), sig))
    # one generation before the boundary the population is Geo(1/N)
    mean0 = float(last_un.mean())
    se0 = float(last_un.std(ddof=1)) / math.sqrt(R)
    verdicts.append(_sigma_verdict(
        "block-last-unmarked-mean", mean0, n_first - 1.0, se0, sig))
    _, _, p_val = stats.chi2_discrete(
        last_un,
        lambda k, q=1.0 / n_first: q * (1 - q) ** k if k >= 0 else 0.0)
    verdicts.append(_lower_verdict("block-last-unmarked-chi2", p_val,
                                   thr["chi2_p_min"]))
    summary.update({
        "block_end_mean": mean1,
        "block_end_second_moment": float(sq.mean()),
        "block_last_unmarked_mean": mean0,
    })
    samples["block_end"] = first_marked
    samples["block_last_unmarked"] = last_un

    result = ExperimentResult(
        experiment="moments",
        parameters={"replicas": R, "base_seed": mc.base_seed,
                    "thresholds": thr,
                    "seed_chain_env": {"xi": list(_U_TEST_XI),
                                       "lam": list(_U_TEST_LAM)},
                    "block_len": n_first},
        summary=summary, verdicts=verdicts, samples=samples)
    return _timed(result, t0, 7 * R, mc.workers)


# ===================================================================
# maxima scaling in both regimes
# ===================================================================


def _scaled_max_chunk(spec, n_blocks, sub_seed, start, stop):
    """Branch-side maxima over per-replica environments: 1 + the best
    adjacent pair of the immigration chain run to the n-th marked site."""
    m = stop - start
    vals = np.empty(m, dtype=np.int64)
    s_n = np.empty(m, dtype=np.int64)
    for j in range(m):
        rep = _replica_seed(sub_seed, start + j)
        e = envm.sample_environment(spec, rep, n_blocks)
        target = e.S(n_blocks)
        omega = branching.marked_omega(e, target)
        vals[j] = 1 + int(branching.sample_pair_max(omega, rep, 1)[0])
        s_n[j] = target
    return {"value": vals, "s_n": s_n}


def _frechet_verdicts(scaled: np.ndarray, index_value: float, tol: float,
                      ks_dist_max: float, label: str) -> tuple[list, dict]:
    fit = stats.fit_frechet(scaled)
    ci_half = 1.96 * fit.se_shape
    verdicts = [
        _interval_verdict(f"{label}-frechet-shape", fit.shape,
                          index_value - tol, index_value + tol,
                          detail=f"se={fit.se_shape:.4f}, method={fit.method}",
                          ci_half=ci_half),
        _upper_verdict(f"{label}-frechet-ks-distance",
                       stats.ks_one_sample(scaled, fit.cdf)[0], ks_dist_max,
                       f"shape={fit.shape:.3f}, scale={fit.scale:.3f}"),
    ]
    return verdicts, fit.to_json_dict()


def _maxima_scaling_harness(experiment: str, spec, n_grid, mc, thr,
                            index_value: float, scale_of_n) -> ExperimentResult:
    """Shared fit-and-check harness; the regimes differ only in the
    normalizing sequence and the expected Frechet index."""
    t0 = time.perf_counter()
    grid = sorted(int(n) for n in n_grid)
    if not grid or grid[0] < 2:
        raise SpecValidationError("n_grid must hold integers >= 2")
    samples, summary, verdicts = {}, {}, []
    raw_by_n, medians = {}, {}
    for gi, n in enumerate(grid):
        out = _run_chunked(
            _scaled_max_chunk, (spec, n, _sub_seed(mc.base_seed, 1, gi)),
            mc.replicas, mc.workers)
        raw_by_n[n] = out
        scaled = out["value"] / scale_of_n(n)
        medians[n] = float(np.median(scaled))
        samples[f"max_n{n}"] = out["value"]
        summary[f"median_scaled_n{n}"] = medians[n]

    n_top = grid[-1]
    scaled_top = raw_by_n[n_top]["value"] / scale_of_n(n_top)
    fit_verdicts, fit_info = _frechet_verdicts(
        scaled_top, index_value, thr["shape_tol"], thr["ks_dist_max"],
        experiment)
    verdicts.extend(fit_verdicts)
    summary["frechet_fit"] = fit_info

    hill = stats.hill_estimator(raw_by_n[n_top]["value"].astype(np.float64))
    verdicts.append(_interval_verdict(
        f"{experiment}-hill-index", hill.index,
        index_value - thr["hill_tol"], index_value + thr["hill_tol"],
        detail=f"k_top={hill.k_top}, se={hill.se:.4f}"))
    summary["hill"] = hill.to_json_dict()

    for n_lo, n_hi in zip(grid, grid[1:]):
        drift = abs(medians[n_hi] / medians[n_lo] - 1.0)
        verdicts.append(_upper_verdict(
            f"{experiment}-median-consistency-n{n_lo}-n{n_hi}", drift,
            thr["median_drift_max"],
            f"medians {medians[n_lo]:.4g} -> {medians[n_hi]:.4g}"))

    result = ExperimentResult(
        experiment=experiment,
        parameters={"spec": spec.to_json_dict(), "n_grid": grid,
                    "replicas": mc.replicas, "base_seed": mc.base_seed,
                    "thresholds": thr, "index": index_value},
        summary=summary, verdicts=verdicts, samples=samples)
    result._raw_by_n = raw_by_n  # harness-internal, for the regime wrappers
    return _timed(result, t0, len(grid) * mc.replicas, mc.workers)


def regime_a_maxima_experiment(spec: envm.EnvSpec, n_grid, mc: McConfig,
                               thresholds: dict | None = None,
                               walk_check_n: int = 10,
                               walk_check_replicas: int = 2000,
                               epoch_replicas: int = 20000) -> ExperimentResult:
    """Maxima under drift-dominated scaling n^(1/alpha).

    Fits the scaled branch-side maxima to a Frechet law, checks the
    shape and the tail index against the drift root alpha, verifies the
    site-indexed rescaling (S_n against n E xi), and cross-checks a
    small-n point against direct walk simulation.  The limit's scale
    constant is recorded twice - once from the fit and once from epoch
    maxima - but never gated on, since both carry heavy-tail error.
    """
    report = envm.analyze_regime(spec)
    if report.regime != "A" or report.alpha_hat is None:
        raise RegimeMismatchError(
            f"drift-dominated harness needs a drift moment root; "
            f"regime analysis says {report.regime}")
    alpha = float(report.alpha_hat)
    thr = {"shape_tol": 0.2, "hill_tol": 0.2, "ks_dist_max": 0.05,
           "median_drift_max": 0.2, "ks_p_min": 0.01}
    thr.update(thresholds or {})

    result = _maxima_scaling_harness(
        "regime-a", spec, n_grid, mc, thr, alpha,
        lambda n: float(n) ** (1.0 / alpha))
    raw_by_n = result.__dict__.pop("_raw_by_n")
    t0 = time.perf_counter() - result.timing["wall_seconds"]
    grid = sorted(raw_by_n)
    n_top = grid[-1]

    # site-indexed normalization: (S_n / E xi)^(1/alpha) must rescale to
    # the same limit law as n^(1/alpha)
    mean_xi = envm.xi_power_moment(spec, 1.0)
    top = raw_by_n[n_top]
    transfer_scaled = top["value"] / (top["s_n"] / mean_xi) ** (1.0 / alpha)
    fit_verdicts, fit_info = _frechet_verdicts(
        transfer_scaled, alpha, thr["shape_tol"], thr["ks_dist_max"],
        "regime-a-site-indexed")
    result.verdicts.extend(fit_verdicts)
    result.summary["site_indexed_fit"] = fit_info
    result.summary["mean_s_n_over_n"] = float(top["s_n"].mean()) / n_top
    result.samples["s_n_top"] = top["s_n"]

    # small-n walk cross-check: both sides of the duality at walk scale
    mc_walk = McConfig(replicas=walk_check_replicas,
                       base_seed=_sub_seed(mc.base_seed, 7),
                       workers=mc.workers)
    walk_side = _run_chunked(
        _duality_walk_chunk,
        (spec, walk_check_n, mc_walk.base_seed, walk.DEFAULT_STEP_BUDGET, 0),
        mc_walk.replicas, mc_walk.workers)
    branch_side = _run_chunked(
        _scaled_max_chunk,
        (spec, walk_check_n, _sub_seed(mc_walk.base_seed, 1)),
        mc_walk.replicas, mc_walk.workers)
    wv = walk_side["value"][walk_side["value"] >= 0]
    d_w, p_w = stats.ks_two_sample(wv, branch_side["value"])
    result.verdicts.append(_lower_verdict(
        "regime-a-walk-transfer-ks", p_w, thr["ks_p_min"],
        f"distance {d_w:.4f} at n={walk_check_n}, "
        f"{int(walk_side['budget_hits'].sum())} budget hits"))
    result.summary["walk_check"] = {"n": walk_check_n, "ks_distance": d_w,
                                    "ks_p": p_w}
    result.samples["walk_check_walk"] = wv
    result.samples["walk_check_branch"] = branch_side["value"]

    # two routes to the scale constant, recorded for comparison only
    epochs = branching.epoch_pair_maxima(spec, epoch_replicas,
                                         _sub_seed(mc.base_seed, 8))
    mean_tau = float(epochs.taus.mean())
    k_top = int(math.ceil(epoch_replicas ** 0.6))
    order = np.sort(epochs.maxima.astype(np.float64))
    x_k = float(order[epoch_replicas - k_top])
    tail_const = (k_top / epoch_replicas) * x_k ** alpha
    result.summary["scale_constant_from_epochs"] = tail_const / mean_tau
    result.summary["scale_constant_from_fit"] = (
        float(result.summary["frechet_fit"]["scale"]) ** alpha)
    result.summary["mean_epoch_blocks"] = mean_tau
    result.summary["alpha"] = alpha

    total = (len(grid) * mc.replicas + 2 * walk_check_replicas
             + epoch_replicas)
    return _timed(result, t0, total, mc.workers)


def regime_b_maxima_experiment(spec: envm.EnvSpec, n_grid, mc: McConfig,
                               thresholds: dict | None = None) -> ExperimentResult:
    """Maxima under sparsity-dominated scaling a_n.

    Same harness as the drift regime; only the normalizing sequence
    (the block-length quantile a_n) and the expected index beta differ.
    """
    report = envm.analyze_regime(spec)
    if report.regime != "B" or report.beta_tail is None:
        raise RegimeMismatchError(
            f"sparsity-dominated harness needs a regularly varying block "
            f"tail; regime analysis says {report.regime}")
    beta = float(report.beta_tail)
    thr = {"shape_tol": 0.2, "hill_tol": 0.2, "ks_dist_max": 0.05,
           "median_drift_max": 0.2}
    thr.update(thresholds or {})
    result = _maxima_scaling_harness(
        "regime-b", spec, n_grid, mc, thr, beta,
        lambda n: envm.scaling_a_n(spec, n))
    result.__dict__.pop("_raw_by_n")
    result.summary["beta"] = beta
    result.summary["a_n"] = {str(n): envm.scaling_a_n(spec, n)
                             for n in sorted(set(int(v) for v in n_grid))}
    return result


# ===================================================================
# single giant block against the coupled limit sampler
# ===================================================================


def _one_block_chunk(spec, first_len, sub_seed, start, stop):
    m = stop - start
    vals = np.empty(m, dtype=np.float64)
    for j in range(m):
        rep = _replica_seed(sub_seed, start + j)
        e = envm.sample_environment(spec, rep, 8)
        oc = branching.run_y_fixed_block(
            first_len, e, int(rng.derive_key(rep, rng.BRANCH)))
        vals[j] = oc.pair_max / first_len
    return {"value": vals}


def one_block_max_experiment(spec: envm.EnvSpec, block_grid, mc: McConfig,
                             thresholds: dict | None = None,
                             bessel_steps: int = 1 << 14) -> ExperimentResult:
    """Scaled maxima inside one long block against the coupled limit.

    The chain is seeded through a single block of fixed length N with
    the tail environment drawn fresh per replica; its best adjacent pair
    over N must approach max(M_B, B(1) * M_Psi / 2) as N grows.
    """
    report = envm.analyze_regime(spec)
    if report.regime != "B":
        raise RegimeMismatchError(
            f"the single-block limit needs a sparsity-dominated tail "
            f"environment; regime analysis says {report.regime}")
    t0 = time.perf_counter()
    thr = {"ks_dist_max": 0.06, "monotone": True}
    thr.update(thresholds or {})
    grid = sorted(int(v) for v in block_grid)
    if not grid or grid[0] < 10:
        raise SpecValidationError("block lengths must be >= 10")

    table = potential.sample_m_infinity(
        spec, _sub_seed(mc.base_seed, 2), mc.replicas,
        bessel_steps=bessel_steps)
    samples = {"limit_m_inf": table.m_inf}
    distances, verdicts, summary = {}, [], {}
    for gi, first_len in enumerate(grid):
        out = _run_chunked(
            _one_block_chunk,
            (spec, first_len, _sub_seed(mc.base_seed, 1, gi)),
            mc.replicas, mc.workers)
        d, p = stats.ks_two_sample(out["value"], table.m_inf)
        distances[first_len] = d
        samples[f"scaled_block_N{first_len}"] = out["value"]
        summary[f"ks_distance_N{first_len}"] = d
        summary[f"mean_scaled_N{first_len}"] = float(out["value"].mean())

    verdicts.append(_upper_verdict(
        f"one-block-limit-ks-N{grid[-1]}", distances[grid[-1]],
        thr["ks_dist_max"]))
    if thr["monotone"] and len(grid) > 1:
        seq = [distances[n] for n in grid]
        monotone = all(b < a for a, b in zip(seq, seq[1:]))
        verdicts.append(Verdict(
            "one-block-ks-decreasing", "pass" if monotone else "fail",
            distances[grid[-1]],
            "strictly decreasing along the block grid",
            " -> ".join(f"{v:.4f}" for v in seq)))
    summary["limit_mean"] = float(table.m_inf.mean())

    result = ExperimentResult(
        experiment="one-block",
        parameters={"spec": spec.to_json_dict(), "block_grid": grid,
                    "replicas": mc.replicas, "base_seed": mc.base_seed,
                    "thresholds": thr, "bessel_steps": bessel_steps},
        summary=summary, verdicts=verdicts, samples=samples)
    return _timed(result, t0, (len(grid) + 1) * mc.replicas, mc.workers)


# ===================================================================
# Poisson count of oversized blocks
# ===================================================================


def _separation_chunk(spec, n_blocks, cutoff, gap, sub_seed, start, stop):
    """Exact per-replica environments; flags two oversized blocks whose
    marked sites sit within ``gap`` of each other."""
    m = stop - start
    close = np.zeros(m, dtype=np.int64)
    counts = np.empty(m, dtype=np.int64)
    codes = np.arange(1, n_blocks + 1, dtype=np.int64)
    for j in range(m):
        rep = _replica_seed(sub_seed, start + j)
        xi, _ = envm.sample_block_values(spec, rep, codes)
        big = xi > cutoff
        counts[j] = int(big.sum())
        if counts[j] >= 2:
            sites = np.cumsum(xi)[big]
            close[j] = int(np.min(np.diff(sites)) <= gap)
    return {"close": close, "count": counts}


def large_block_poisson_experiment(spec: envm.EnvSpec, n_blocks: int,
                                   epsilon_grid, mc: McConfig,
                                   thresholds: dict | None = None,
                                   separation_replicas: int = 200) -> ExperimentResult:
    """Counts of blocks longer than eps * a_n against a Poisson law.

    The count of oversized blocks among n i.i.d. lengths is exactly
    binomial with the family's tail mass at the cutoff, so it is drawn
    by inverse transform instead of materializing n block lengths per
    replica; a smaller fully-sampled set checks that oversized blocks
    keep their distance from one another.
    """
    report = envm.analyze_regime(spec)
    if report.regime != "B" or report.beta_tail is None:
        raise RegimeMismatchError(
            f"the oversized-block count needs a regularly varying block "
            f"tail; regime analysis says {report.regime}")
    beta = float(report.beta_tail)
    t0 = time.perf_counter()
    thr = {"chi2_p_min": 0.01, "sigmas": 3.0, "separation_max": 0.05}
    thr.update(thresholds or {})
    a_n = envm.scaling_a_n(spec, n_blocks)
    eps_grid = sorted(float(v) for v in epsilon_grid)

    u = rng.stream_uniforms(
        rng.derive_key(_sub_seed(mc.base_seed, 1), rng.GENERIC),
        np.arange(mc.replicas, dtype=np.uint64))
    verdicts, summary, samples = [], {}, {}
    for eps in eps_grid:
        p_tail = envm.xi_tail(spec, eps * a_n)
        counts = scistats.binom.ppf(u, n_blocks, p_tail).astype(np.int64)
        lam = eps ** (-beta)
        mean = float(counts.mean())
        se = float(counts.std(ddof=1)) / math.sqrt(mc.replicas)
        tag = f"{eps:g}"
        verdicts.append(_sigma_verdict(
            f"oversized-count-mean-eps{tag}", mean, lam, se, thr["sigmas"]))
        _, _, p_val = stats.chi2_discrete(
            counts, lambda k, l=lam: float(scistats.poisson.pmf(k, l)))
        verdicts.append(_lower_verdict(
            f"oversized-count-chi2-eps{tag}", p_val, thr["chi2_p_min"],
            f"target mean {lam:.4f}, n p_tail = {n_blocks * p_tail:.4f}"))
        summary[f"count_mean_eps{tag}"] = mean
        summary[f"tail_mass_eps{tag}"] = p_tail
        samples[f"count_eps{tag}"] = counts

    gap = math.sqrt(n_blocks)
    sep = _run_chunked(
        _separation_chunk,
        (spec, n_blocks, eps_grid[0] * a_n, gap, _sub_seed(mc.base_seed, 2)),
        separation_replicas, mc.workers)
    freq = float(sep["close"].mean())
    verdicts.append(_upper_verdict(
        "oversized-blocks-separated", freq, thr["separation_max"],
        f"{separation_replicas} fully sampled environments, "
        f"gap {gap:.0f} sites"))
    summary["close_pair_frequency"] = freq
    summary["fully_sampled_count_mean"] = float(sep["count"].mean())
    summary["a_n"] = a_n
    samples["separation_close"] = sep["close"]

    result = ExperimentResult(
        experiment="large-blocks",
        parameters={"spec": spec.to_json_dict(), "n_blocks": n_blocks,
                    "epsilon_grid": eps_grid, "replicas": mc.replicas,
                    "base_seed": mc.base_seed, "thresholds": thr,
                    "separation_replicas": separation_replicas},
        summary=summary, verdicts=verdicts, samples=samples)
    return _timed(result, t0, len(eps_grid) * mc.replicas
                  + separation_replicas, mc.workers)


# ===================================================================
# symmetric-walk profile against the planar Brownian modulus
# ===================================================================


def _profile_chunk(n, sub_seed, start, stop):
    m = stop - start
    vmax = np.empty(m, dtype=np.float64)
    v0 = np.empty(m, dtype=np.float64)
    for j in range(m):
        key = int(rng.derive_key(_replica_seed(sub_seed, start + j), rng.WALK))
        p = walk.simple_walk_local_profile(n, key, grid_points=2,
                                           negative_side=False)
        vmax[j] = p.max_scaled
        v0[j] = p.l0_scaled
    return {"max": vmax, "origin": v0}


def ray_knight_experiment(n_grid, mc: McConfig,
                          thresholds: dict | None = None,
                          bessel_steps: int = 1 << 14) -> ExperimentResult:
    """Scaled local-time marginals of the symmetric walk.

    The profile over sites 0..n at the first passage of n, divided by n,
    matches a squared planar Brownian modulus: the origin value tends to
    |W(1)|^2 (mean 2) and the maximum to sup |W|^2 on [0, 1].
    """
    t0 = time.perf_counter()
    thr = {"sigmas": 3.0, "ks_dist_max": 0.05, "monotone": True}
    thr.update(thresholds or {})
    grid = sorted(int(v) for v in n_grid)
    if not grid or grid[0] < 10:
        raise SpecValidationError("profile grid needs n >= 10")

    m_b, b1 = potential.sample_bessel_extrema(
        _sub_seed(mc.base_seed, 2), mc.replicas, steps=bessel_steps)
    samples = {"limit_running_max": m_b, "limit_endpoint": b1}
    verdicts, summary, distances = [], {}, {}
    origin_by_n = {}
    for gi, n in enumerate(grid):
        out = _run_chunked(_profile_chunk, (n, _sub_seed(mc.base_seed, 1, gi)),
                           mc.replicas, mc.workers)
        d_max, _ = stats.ks_two_sample(out["max"], m_b)
        d_origin, _ = stats.ks_two_sample(out["origin"], b1)
        distances[n] = d_max
        origin_by_n[n] = out["origin"]
        samples[f"profile_max_n{n}"] = out["max"]
        samples[f"profile_origin_n{n}"] = out["origin"]
        summary[f"ks_max_n{n}"] = d_max
        summary[f"ks_origin_n{n}"] = d_origin

    n_top = grid[-1]
    origin = origin_by_n[n_top]
    mean0 = float(origin.mean())
    se0 = float(origin.std(ddof=1)) / math.sqrt(mc.replicas)
    verdicts.append(_sigma_verdict(
        f"profile-origin-mean-n{n_top}", mean0, 2.0, se0, thr["sigmas"]))
    verdicts.append(_upper_verdict(
        f"profile-max-ks-n{n_top}", distances[n_top], thr["ks_dist_max"]))
    if thr["monotone"] and len(grid) > 1:
        seq = [distances[n] for n in grid]
        monotone = all(b < a for a, b in zip(seq, seq[1:]))
        verdicts.append(Verdict(
            "profile-max-ks-decreasing", "pass" if monotone else "fail",
            distances[n_top], "strictly decreasing along the site grid",
            " -> ".join(f"{v:.4f}" for v in seq)))
    summary["origin_mean_top"] = mean0
    summary["limit_endpoint_mean"] = float(b1.mean())

    result = ExperimentResult(
        experiment="ray-knight",
        parameters={"n_grid": grid, "replicas": mc.replicas,
                    "base_seed": mc.base_seed, "thresholds": thr,
                    "bessel_steps": bessel_steps},
        summary=summary, verdicts=verdicts, samples=samples)
    return _timed(result, t0, (len(grid) + 1) * mc.replicas, mc.workers)


# ===================================================================
# campaign configuration and result files
# ===================================================================

_DEFAULT_GRIDS = {
    "duality": {"n_blocks": 3},
    "regime-a": {"n_grid": (625, 2500, 10000)},
    "regime-b": {"n_grid": (625, 2500, 10000)},
    "one-block": {"block_grid": (250, 1000, 4000)},
    "large-blocks": {"n_blocks": 100000, "epsilon_grid": (1.0, 2.0)},
    "ray-knight": {"n_grid": (500, 2000, 5000)},
    "moments": {},
}


def _default_spec(experiment_id: str):
    if experiment_id in ("regime-a",):
        return canonical_regime_a_spec()
    if experiment_id in ("regime-b", "one-block", "large-blocks"):
        return canonical_regime_b_spec()
    if experiment_id == "duality":
        return duality_test_spec()
    return None


def run_experiment(experiment_id: str, mc: McConfig,
                   spec: envm.EnvSpec | None = None,
                   params: dict | None = None,
                   thresholds: dict | None = None) -> ExperimentResult:
    """Dispatch one experiment by id with defaulted spec and grids."""
    if experiment_id not in _DEFAULT_GRIDS:
        raise SpecValidationError(
            f"unknown experiment id {experiment_id!r}; expected one of "
            + ", ".join(sorted(_DEFAULT_GRIDS)))
    p = dict(_DEFAULT_GRIDS[experiment_id])
    p.update(params or {})
    if spec is None:
        spec = _default_spec(experiment_id)

    if experiment_id == "duality":
        return verify_duality(spec, p["n_blocks"], mc, thresholds=thresholds)
    if experiment_id == "moments":
        return verify_exact_moments(mc, thresholds=thresholds)
    if experiment_id == "regime-a":
        extra = {k: p[k] for k in ("walk_check_n", "walk_check_replicas",
                                   "epoch_replicas") if k in p}
        return regime_a_maxima_experiment(spec, p["n_grid"], mc,
                                          thresholds=thresholds, **extra)
    if experiment_id == "regime-b":
        return regime_b_maxima_experiment(spec, p["n_grid"], mc,
                                          thresholds=thresholds)
    if experiment_id == "one-block":
        extra = {k: p[k] for k in ("bessel_steps",) if k in p}
        return one_block_max_experiment(spec, p["block_grid"], mc,
                                        thresholds=thresholds, **extra)
    if experiment_id == "large-blocks":
        extra = {k: p[k] for k in ("separation_replicas",) if k in p}
        return large_block_poisson_experiment(
            spec, p["n_blocks"], p["epsilon_grid"], mc,
            thresholds=thresholds, **extra)
    extra = {k: p[k] for k in ("bessel_steps",) if k in p}
    return ray_knight_experiment(p["n_grid"], mc, thresholds=thresholds,
                                 **extra)


def _format_value(v) -> str:
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    return str(int(v))


def write_samples_csv(result: ExperimentResult, path: Path) -> None:
    """Long-format raw samples; one deterministic row per observation."""
    lines = ["# columns: sample,index,value",
             "# sample: named sample set; index: replica index within the "
             "set; value: observed value"]
    for name in sorted(result.samples):
        arr = np.asarray(result.samples[name])
        for i, v in enumerate(arr.tolist()):
            lines.append(f"{name},{i},{_format_value(v)}")
    path.write_text("\n".join(lines) + "\n")


def write_result_files(result: ExperimentResult, out_dir, name: str,
                       seed: int) -> dict:
    """Write the result JSON, the raw-sample CSV and the timing file.

    Timing goes to its own file so the JSON and CSV are byte-identical
    across reruns and worker counts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sample_name = f"{name}-{seed}-samples.csv"
    write_samples_csv(result, out / sample_name)
    json_path = out / f"{name}-{seed}.json"
    json_path.write_text(json.dumps(result.to_json_dict(sample_name),
                                    sort_keys=True, indent=2) + "\n")
    timing_path = out / f"{name}-{seed}-timing.json"
    timing_path.write_text(json.dumps(_jsonify(result.timing),
                                      sort_keys=True, indent=2) + "\n")
    return {"result": str(json_path), "samples": str(out / sample_name),
            "timing": str(timing_path)}


def _load_campaign_config(config) -> dict:
    if isinstance(config, (str, Path)):
        with open(config, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    if not isinstance(config, dict) or "experiments" not in config:
        raise SpecValidationError(
            "campaign config must be an object with an 'experiments' list")
    if not isinstance(config["experiments"], list):
        raise SpecValidationError("'experiments' must be a list")
    return config


def run_campaign(config, out_dir, workers: int | None = None) -> tuple[list, int]:
    """Run a configured experiment list, isolating per-experiment failures.

    Returns (results, exit_code); the exit code is 0 iff no experiment
    reported a failing verdict.  Every experiment writes one result
    JSON, one raw-sample CSV and one timing file into out_dir.
    """
    config = _load_campaign_config(config)
    results = []
    exit_code = 0
    for job in config["experiments"]:
        if not isinstance(job, dict) or "id" not in job:
            raise SpecValidationError("each experiment entry needs an 'id'")
        exp_id = job["id"]
        if exp_id not in _DEFAULT_GRIDS:
            raise SpecValidationError(
                f"unknown experiment id {exp_id!r}; expected one of "
                + ", ".join(sorted(_DEFAULT_GRIDS)))
        mc_cfg = job.get("mc", {})
        mc = McConfig(replicas=int(mc_cfg.get("replicas", 1000)),
                      base_seed=int(mc_cfg.get("base_seed", 0)),
                      workers=int(workers if workers is not None
                                  else mc_cfg.get("workers", 1)))
        spec = (envm.EnvSpec.from_json_dict(job["spec"])
                if "spec" in job else None)
        params = {k: v for k, v in job.items()
                  if k not in ("id", "label", "spec", "mc", "thresholds")}
        name = job.get("label", exp_id)
        try:
            result = run_experiment(exp_id, mc, spec=spec, params=params,
                                    thresholds=job.get("thresholds"))
        except Exception as exc:  # isolation: one failure must not abort the rest
            log.exception("experiment %s failed", exp_id)
            result = ExperimentResult(
                experiment=exp_id,
                parameters={"replicas": mc.replicas,
                            "base_seed": mc.base_seed},
                summary={"error": f"{type(exc).__name__}: {exc}"},
                verdicts=[Verdict("run-error", "fail", math.nan, "no error",
                                  f"{type(exc).__name__}: {exc}")],
                samples={})
        write_result_files(result, out_dir, name, mc.base_seed)
        results.append(result)
        if result.failed:
            exit_code = 1
    return results, exit_code
