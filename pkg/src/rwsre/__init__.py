"""Simulation laboratory for random walks in sparse random environments.

Subpackages by theme:

- ``env``: distribution families, environment sampling, regime analysis
- ``walk``: trajectory simulation and local times
- ``branching``: the dual branching process with immigration
- ``potential``: perpetuity series, potential maxima, Bessel functionals
- ``stats``: KS / chi-square tests, Hill estimator, Frechet fits
- ``experiments``: verification campaigns and the parallel Monte Carlo driver
- ``cli``: command-line front end
"""

from .env import (Beta, Constant, DiscretePareto, EnvSpec, RegimeReport,
                  ShiftedGeometric, SparseEnvironment, TwoPoint, Uniform,
                  analyze_regime, sample_environment, scaling_a_n)
from .errors import (BudgetExceededError, EstimatorError, OutOfSpanError,
                     PopulationOverflowError, RegimeMismatchError, RwsreError,
                     SeriesDivergenceError, SpecValidationError,
                     UnsupportedFamilyError)
from .walk import (ProfileSample, WalkOutcome, run_walk_to,
                   simple_walk_local_profile, verify_pathwise_identity)
from .branching import (BranchingTrace, EpochSample, UProcessOutcome,
                        YProcessOutcome, dual_omega_of_walk,
                        epoch_pair_maxima, marked_omega, run_bpsre,
                        run_u_process, run_y_fixed_block, sample_pair_max)
from .potential import (CPsiEstimate, MInfinityTable, PotentialTable,
                        estimate_c_psi, pi_product, sample_bessel_extrema,
                        sample_m_infinity, sample_m_psi, sample_rbar)
from .stats import (FrechetFit, HillEstimate, chi2_discrete, ecdf,
                    fit_frechet, hill_estimator, hill_profile, ks_one_sample,
                    ks_two_sample)
from .experiments import (ExperimentResult, McConfig, Verdict,
                          canonical_regime_a_spec, canonical_regime_b_spec,
                          duality_test_spec, large_block_poisson_experiment,
                          one_block_max_experiment, ray_knight_experiment,
                          regime_a_maxima_experiment,
                          regime_b_maxima_experiment, run_campaign,
                          run_experiment, verify_duality,
                          verify_exact_moments)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
