#!/usr/bin/env python3
"""The environment functionals behind the limit laws.

Three quantities computed from the drift sequence alone, with no walk
in sight, pin down the limiting behaviour of the visit counts: the
perpetuity series rbar (whose power tail sets the Frechet index in the
drift-dominated regime), the damped weight maximum m_psi, and the
coupled Bessel functional m_inf = max(M_B, B(1) m_psi / 2) that one
giant block converges to.  This script samples all three, checks the
series against its one-step shift recursion, and shows the scaled
single-block maxima marching toward m_inf as the block grows.
"""

import argparse

import numpy as np

from rwsre import env, experiments, potential, rng, stats


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=17)
    ap.add_argument("--samples", type=int, default=20_000)
    args = ap.parse_args()
    spec = experiments.canonical_regime_a_spec()
    rc = 0

    # ----------------------------------------------------------------
    # perpetuity: tail index and shift recursion
    # ----------------------------------------------------------------
    table = potential.sample_rbar(spec, args.seed, args.samples)
    hill = stats.hill_estimator(table.rbar)
    print(f"rbar over {args.samples} environments: "
          f"mean terms {table.terms_used.mean():.1f}, "
          f"hill index {hill.index:.3f} +- {1.96 * hill.se:.3f}")

    horizon = int(table.terms_used.max()) + 40
    s1 = potential.sample_rbar(spec, args.seed, args.samples,
                               exact_terms=horizon)
    s2 = potential.sample_rbar(spec, args.seed, args.samples,
                               start_block=2, exact_terms=horizon - 1)
    codes = potential._SAMPLE_STRIDE + np.arange(args.samples, dtype=np.int64)
    _, lam1 = env.sample_block_values(
        spec, rng.derive_key(args.seed, rng.POTENTIAL_XI), codes)
    rho1 = (1.0 - lam1) / lam1
    resid = np.abs(s1.rbar - 1.0 - rho1 * s2.rbar)
    print(f"shift recursion rbar = 1 + rho_1 rbar': "
          f"worst residual {resid.max():.2e} over shared streams")
    if resid.max() > 1e-8:
        rc = 1

    # ----------------------------------------------------------------
    # weight maximum and the coupled Bessel limit
    # ----------------------------------------------------------------
    mt = potential.sample_m_infinity(spec, args.seed + 1, args.samples // 4)
    print(f"\nm_psi <= 2 rbar holds on joint samples: "
          f"{bool((table.m_psi <= 2 * table.rbar).all())}")
    print(f"m_inf decomposition: mean M_B {mt.m_b.mean():.3f}, "
          f"mean B(1) {mt.b1.mean():.3f} (target 2), "
          f"boundary factor active on "
          f"{(mt.m_inf > mt.m_b).mean():.0%} of samples")

    # one growing block vs the limit sample
    spec_b = experiments.canonical_regime_b_spec()
    mt_b = potential.sample_m_infinity(spec_b, args.seed + 2,
                                       args.samples // 10)
    print(f"\nscaled giant-block maxima vs m_inf "
          f"({args.samples // 10} replicas each):")
    for block_len in (100, 400, 1600):
        out = experiments._run_chunked(
            experiments._one_block_chunk,
            (spec_b, block_len, rng.derive_key(args.seed, 3, block_len)),
            args.samples // 10, 1)
        d, _ = stats.ks_two_sample(out["value"], mt_b.m_inf)
        print(f"  N = {block_len:5d}: KS distance {d:.4f}")
    return rc


if __name__ == "__main__":
    raise SystemExit(main())
