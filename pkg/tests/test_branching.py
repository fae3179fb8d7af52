"""Dual branching chain: structure checks and exact-law oracles.

The two closed forms used in the moment experiments are re-derived here
by direct distributional recursion (truncated transition-matrix
iteration with Geometric(1/2) litters), independently of any sampler:
the single-block population one step before the boundary is
Geometric(1/N) on {0,1,...}, and the immigrant-counted population after
N generations is Geometric(1/(N+1)) on {1,2,...}.
"""

import math

import numpy as np
import pytest
import scipy.stats as scistats

from rwsre import branching, env as envm, potential, rng
from rwsre.errors import RwsreError, SpecValidationError

SEED = 271828
K_TRUNC = 1600  # state-space cap for the matrix recursion


def _nbinom_matrix(k: int) -> np.ndarray:
    """M[m, j] = P(sum of m Geometric(1/2) litters = j), m = 0..k."""
    m = np.arange(k + 1)
    M = np.zeros((k + 1, k + 1))
    M[0, 0] = 1.0
    for r in range(1, k + 1):
        M[r, :] = scistats.nbinom.pmf(np.arange(k + 1), r, 0.5)
    return M


def test_block_population_matrix_recursion_is_geometric():
    """Immigrant joins, everyone reproduces: after N-1 generations the
    pmf equals q(1-q)^j with q = 1/N, to truncation accuracy."""
    M = _nbinom_matrix(K_TRUNC)
    for n_gens in (4, 7, 11):
        pmf = np.zeros(K_TRUNC + 1)
        pmf[0] = 1.0
        for _ in range(n_gens):
            shifted = np.zeros_like(pmf)  # immigrant arrives, then litters
            shifted[1:] = pmf[:-1]
            pmf = shifted @ M
        q = 1.0 / (n_gens + 1.0)
        exact = q * (1 - q) ** np.arange(201)
        assert np.max(np.abs(pmf[:201] - exact)) < 1e-10


def test_counted_immigration_matrix_recursion_is_geometric():
    """Reproduce first, then count the arriving immigrant: after N
    generations the population is Geometric(1/(N+1)) on {1,2,...}."""
    M = _nbinom_matrix(K_TRUNC)
    for n_gens in (3, 6, 10):
        pmf = np.zeros(K_TRUNC + 1)
        pmf[1] = 1.0  # the founder is the generation-zero immigrant
        for _ in range(n_gens):
            pmf = pmf @ M
            pmf[1:] = pmf[:-1]
            pmf[0] = 0.0
        q = 1.0 / (n_gens + 1.0)
        exact = q * (1 - q) ** np.arange(200)
        assert np.max(np.abs(pmf[1:201] - exact)) < 1e-10


def test_critical_tree_variance_recursion():
    """Var Z_{n+1} = Var Z_n + (offspring var) E Z_n gives Var Z_n = 2 n x0
    for critical Geometric(1/2) litters; checked by matrix recursion."""
    M = _nbinom_matrix(K_TRUNC)
    for x0 in (1, 3):
        pmf = np.zeros(K_TRUNC + 1)
        pmf[x0] = 1.0
        for n in range(1, 6):
            pmf = pmf @ M
            ks = np.arange(pmf.size)
            mean = float(pmf @ ks)
            var = float(pmf @ ks**2) - mean**2
            assert mean == pytest.approx(x0, abs=1e-8)
            assert var == pytest.approx(2.0 * n * x0, abs=1e-6)


# ====================================================================
# samplers against the closed forms
# ====================================================================

N_MC = 30_000
ALPHA = 1e-4


def _chi2_pvalue(sample, probs):
    probs = np.asarray(probs, dtype=np.float64)
    k_max = probs.size - 1
    full = np.append(probs, max(1.0 - probs.sum(), 0.0))
    counts = np.bincount(np.minimum(sample, k_max + 1), minlength=k_max + 2)
    keep = full * sample.size >= 5
    pooled, kept = full[keep], counts[keep]
    if not keep.all() and full[~keep].sum() > 0:
        pooled = np.append(pooled, full[~keep].sum())
        kept = np.append(kept, counts[~keep].sum())
    stat = float(((kept - sample.size * pooled) ** 2
                  / (sample.size * pooled)).sum())
    return scistats.chi2.sf(stat, pooled.size - 1)


def test_sample_critical_gw_matches_variance_law():
    vals = branching.sample_critical_gw(SEED, N_MC, 12, 2)
    assert abs(vals.mean() - 2.0) < 4 * vals.std() / math.sqrt(N_MC)
    centred = (vals - vals.mean()) ** 2
    se_var = centred.std() / math.sqrt(N_MC)
    assert abs(vals.var() - 48.0) < 4 * se_var


def test_sample_counted_immigration_matches_geometric():
    n_gens = 9
    vals = branching.sample_counted_immigration(SEED, N_MC, n_gens)
    assert vals.min() >= 1
    q = 1.0 / (n_gens + 1)
    probs = np.array([q * (1 - q) ** k for k in range(60)])
    assert _chi2_pvalue(vals - 1, probs) > ALPHA


def test_single_block_outcomes_match_geometric():
    n = 8
    spec = envm.EnvSpec(xi_dist=envm.Constant(2.0),
                        lambda_dist=envm.Constant(2 / 3))
    e = envm.sample_environment(spec, SEED, 8)
    omega = branching.marked_omega(e, 6 * n, first_block_len=n)
    last_un, first_marked, pair_max = branching.sample_y_outcomes(
        n, omega, SEED, N_MC, environment=e)
    q = 1.0 / n
    probs = np.array([q * (1 - q) ** k for k in range(60)])
    assert _chi2_pvalue(last_un, probs) > ALPHA
    # the boundary generation reproduces with drift rho = 1/2
    rho = 0.5
    se = first_marked.std() / math.sqrt(N_MC)
    assert abs(first_marked.mean() - n * rho) < 4 * se
    assert np.all(pair_max >= first_marked)
    assert np.all(pair_max >= last_un)


# ====================================================================
# structure of the reproduction array and traces
# ====================================================================


def test_marked_omega_layout():
    e = envm.SparseEnvironment.from_blocks((2, 3, 2), (0.6, 0.7, 0.8))
    om = branching.marked_omega(e, 7)
    assert om.shape == (7,)
    # om[g-1] is generation g's reproduction probability; the last
    # generation of block m (generation S_m) is marked with lambda_m
    expected = np.full(7, 0.5)
    expected[1] = 0.6   # S_1 = 2
    expected[4] = 0.7   # S_2 = 5
    expected[6] = 0.8   # S_3 = 7
    assert np.allclose(om, expected)


def test_marked_omega_first_block_override():
    e = envm.SparseEnvironment.from_blocks((2, 3, 2), (0.6, 0.7, 0.8))
    om = branching.marked_omega(e, 9, first_block_len=4)
    expected = np.full(9, 0.5)
    expected[3] = 0.6   # stretched first block ends at generation 4
    expected[6] = 0.7
    expected[8] = 0.8
    assert np.allclose(om, expected)


def test_dual_omega_reverses_the_walk_environment():
    e = envm.SparseEnvironment.from_blocks((2, 3, 2), (0.6, 0.7, 0.8))
    dual = branching.dual_omega_of_walk(e, 3)
    sites = np.array([e.omega_at(k) for k in range(e.S(3))])
    assert np.allclose(dual, sites[::-1])


def test_run_bpsre_trace_consistency():
    spec = envm.EnvSpec(xi_dist=envm.TwoPoint(1.0, 3.0, 0.5),
                        lambda_dist=envm.TwoPoint(0.6, 0.75, 0.5))
    e = envm.sample_environment(spec, SEED, 13)
    trace = branching.run_bpsre(e, 12, rng.derive_key(SEED, rng.BRANCH),
                                record="full")
    marks = np.cumsum([e.xi(m) for m in range(1, 13)])
    assert np.array_equal(trace.marked_gens, marks)
    assert trace.generations == marks[-1] + 1
    assert np.array_equal(trace.z_path[marks], trace.marked_values)
    pair = int(np.max(trace.z_path[:-1] + trace.z_path[1:]))
    assert trace.pair_max == max(pair, int(trace.z_path[-1]))
    dead = np.flatnonzero(trace.marked_values == 0) + 1
    assert np.array_equal(trace.extinction_marks, dead)


def test_run_u_process_mean_tracks_drift_products():
    xi = (2, 3, 1, 2)
    lam = (0.6, 0.4, 0.7, 0.55)
    e = envm.SparseEnvironment.from_blocks(xi, lam)
    reps = 20_000
    vals = np.empty((reps, 4), dtype=np.int64)
    for i in range(reps):
        oc = branching.run_u_process(e, 4, rng.derive_key(SEED, 5, i))
        vals[i] = oc.marked_values
    rhos = [envm.rho(l) for l in lam]
    for b in range(4):
        target = potential.pi_product(rhos, 1, b + 1)
        se = vals[:, b].std() / math.sqrt(reps)
        assert abs(vals[:, b].mean() - target) < 4 * se


def test_sample_pair_max_slices_reproduce_the_batch():
    e = envm.SparseEnvironment.from_blocks((3, 2, 3), (0.65, 0.7, 0.6))
    om = branching.marked_omega(e, e.S(3))
    full = branching.sample_pair_max(om, SEED, 50)
    head = branching.sample_pair_max(om, SEED, 20)
    tail = branching.sample_pair_max(om, SEED, 30, first_index=20)
    assert np.array_equal(full, np.concatenate([head, tail]))


def test_epoch_pair_maxima_deterministic():
    spec = envm.EnvSpec(xi_dist=envm.Constant(2.0),
                        lambda_dist=envm.TwoPoint(1 / 3, 2 / 3, 2 / 3))
    a = branching.epoch_pair_maxima(spec, 300, SEED)
    b = branching.epoch_pair_maxima(spec, 300, SEED, block_chunk=7)
    assert np.array_equal(a.maxima, b.maxima)
    assert np.array_equal(a.taus, b.taus)
    assert a.taus.min() >= 1
    assert a.maxima.min() >= 0


def test_y_replay_requires_environment():
    e = envm.SparseEnvironment.from_blocks((4,), (0.9,))
    # nearly-supercritical drift: some replica outlives two blocks
    om = branching.marked_omega(e, 4, first_block_len=4)
    with pytest.raises((RwsreError, SpecValidationError)):
        branching.sample_y_outcomes(4, om[:5], SEED, 4000)


def test_run_y_fixed_block_basic_shape():
    spec = envm.EnvSpec(xi_dist=envm.DiscretePareto(1.5),
                        lambda_dist=envm.Constant(2 / 3))
    e = envm.sample_environment(spec, SEED, 4)
    oc = branching.run_y_fixed_block(30, e, rng.derive_key(SEED, rng.BRANCH))
    assert oc.first_block_len == 30
    assert oc.pair_max >= oc.first_marked
    assert oc.pair_max >= oc.last_unmarked
    assert oc.blocks_used >= 1
