"""Distribution families, environment sampling, and regime analysis."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwsre import env as envm
from rwsre import rng
from rwsre.errors import OutOfSpanError, SpecValidationError

SEED = 20240817


def _spec(xi, lam):
    return envm.EnvSpec(xi_dist=xi, lambda_dist=lam)


# ====================================================================
# families
# ====================================================================


def test_constant_moments():
    c = envm.Constant(3.0)
    assert c.power_moment(2.0) == 9.0
    assert c.mean_log() == math.log(3.0)
    assert c.tail(2.9) == 1.0 and c.tail(3.0) == 0.0


def test_two_point_moments_and_tail():
    tp = envm.TwoPoint(1.0, 4.0, 0.25)
    assert tp.power_moment(1.0) == pytest.approx(0.75 * 1 + 0.25 * 4)
    assert tp.mean_log() == pytest.approx(0.25 * math.log(4.0))
    assert tp.tail(0.5) == 1.0
    assert tp.tail(1.0) == 0.25
    assert tp.tail(4.0) == 0.0


def test_two_point_validation():
    with pytest.raises(SpecValidationError):
        envm.TwoPoint(2.0, 1.0, 0.5)
    with pytest.raises(SpecValidationError):
        envm.TwoPoint(1.0, 2.0, 1.5)


def test_shifted_geometric_moments():
    g = envm.ShiftedGeometric(0.4)
    # E V = 1/p, E V^2 = (2-p)/p^2 for support {1,2,...}
    assert g.power_moment(1.0) == pytest.approx(1 / 0.4, rel=1e-10)
    assert g.power_moment(2.0) == pytest.approx((2 - 0.4) / 0.16, rel=1e-10)
    assert g.tail(3.0) == pytest.approx(0.6**3)
    # series mean_log against direct summation
    direct = sum(math.log(k) * 0.4 * 0.6 ** (k - 1) for k in range(1, 400))
    assert g.mean_log() == pytest.approx(direct, rel=1e-9)


def test_discrete_pareto_tail_and_moments():
    dp = envm.DiscretePareto(1.5)
    assert dp.tail(0.5) == 1.0
    assert dp.tail(1.0) == 1.0
    assert dp.tail(10.0) == pytest.approx(10.0**-1.5)
    assert dp.power_moment(2.0) == math.inf  # s >= index diverges
    # tail-sum formula: E V = sum_{j>=0} P(V > j) = 1 + zeta(beta)
    from scipy.special import zeta
    assert dp.power_moment(1.0) == pytest.approx(1.0 + float(zeta(1.5)),
                                                 rel=1e-9)


def test_beta_moments():
    b = envm.Beta(2.0, 5.0)
    assert b.power_moment(1.0) == pytest.approx(2.0 / 7.0, rel=1e-12)
    from scipy.special import digamma
    assert b.mean_log() == pytest.approx(digamma(2.0) - digamma(7.0))


def test_uniform_validation_and_moments():
    u = envm.Uniform(0.2, 0.8)
    assert u.power_moment(1.0) == pytest.approx(0.5)
    assert u.mean_log() == pytest.approx(
        (0.8 * math.log(0.8) - 0.8 - 0.2 * math.log(0.2) + 0.2) / 0.6)
    with pytest.raises(SpecValidationError):
        envm.Uniform(0.0, 0.5)


def test_integer_families_sample_their_law():
    u = rng.stream_uniforms(rng.derive_key(SEED, 1),
                            np.arange(50_000, dtype=np.uint64))
    for dist in (envm.TwoPoint(1.0, 3.0, 0.3), envm.ShiftedGeometric(0.5),
                 envm.DiscretePareto(2.5)):
        v = dist.sample_integer(u)
        mean = dist.power_moment(1.0)
        se = math.sqrt(max(dist.power_moment(2.0) - mean**2, 1e-12) / v.size)
        assert abs(v.mean() - mean) < 4 * se
        # empirical tail matches the family tail at a few cut points
        for x in (1.0, 2.0, 5.0):
            assert abs((v > x).mean() - dist.tail(x)) < 0.01


def test_prob_families_sample_their_law():
    u = rng.stream_uniforms(rng.derive_key(SEED, 2),
                            np.arange(50_000, dtype=np.uint64))
    for dist in (envm.Beta(2.0, 3.0), envm.Uniform(0.3, 0.7),
                 envm.TwoPoint(0.25, 0.75, 0.5)):
        v = dist.sample_prob(u)
        assert np.all((v > 0) & (v < 1))
        assert abs(v.mean() - dist.power_moment(1.0)) < 0.01


# ====================================================================
# spec validation and serialization
# ====================================================================


def test_spec_requires_integer_capable_xi_family():
    with pytest.raises(SpecValidationError):
        _spec(envm.Beta(2.0, 2.0), envm.Constant(0.5))
    with pytest.raises(SpecValidationError):
        _spec(envm.Constant(2.0), envm.DiscretePareto(1.5))


def test_spec_requires_both_families():
    with pytest.raises(SpecValidationError):
        envm.EnvSpec(xi_dist=envm.Constant(2.0), lambda_dist=None)


def test_constant_xi_must_be_a_positive_integer():
    with pytest.raises(SpecValidationError):
        _spec(envm.Constant(2.5), envm.Constant(0.5))
    with pytest.raises(SpecValidationError):
        _spec(envm.Constant(0.0), envm.Constant(0.5))


def test_constant_lambda_must_be_interior():
    with pytest.raises(SpecValidationError):
        _spec(envm.Constant(2.0), envm.Constant(1.0))


_XI_STRATEGY = st.one_of(
    st.integers(min_value=1, max_value=9).map(lambda v: envm.Constant(float(v))),
    st.tuples(st.integers(1, 4), st.integers(5, 9),
              st.floats(0.01, 0.99)).map(
        lambda t: envm.TwoPoint(float(t[0]), float(t[1]), t[2])),
    st.floats(0.05, 0.95).map(envm.ShiftedGeometric),
    st.floats(0.5, 3.0).map(envm.DiscretePareto),
)
_LAM_STRATEGY = st.one_of(
    st.floats(0.05, 0.95).map(lambda v: envm.Constant(v)),
    st.tuples(st.floats(0.05, 0.45), st.floats(0.5, 0.95),
              st.floats(0.01, 0.99)).map(
        lambda t: envm.TwoPoint(t[0], t[1], t[2])),
    st.tuples(st.floats(0.5, 5.0), st.floats(0.5, 5.0)).map(
        lambda t: envm.Beta(t[0], t[1])),
    st.tuples(st.floats(0.05, 0.4), st.floats(0.5, 0.95)).map(
        lambda t: envm.Uniform(t[0], t[1])),
)


@given(_XI_STRATEGY, _LAM_STRATEGY)
@settings(max_examples=60, deadline=None)
def test_spec_json_roundtrip(xi, lam):
    spec = _spec(xi, lam)
    again = envm.EnvSpec.from_json(spec.to_json())
    assert again == spec
    assert json.loads(spec.to_json()) == spec.to_json_dict()


# ====================================================================
# sparse environments
# ====================================================================


def test_block_values_are_pure_functions_of_codes():
    spec = _spec(envm.ShiftedGeometric(0.5), envm.Beta(2.0, 2.0))
    codes = np.arange(1, 200, dtype=np.int64)
    xi1, lam1 = envm.sample_block_values(spec, SEED, codes)
    xi2, lam2 = envm.sample_block_values(spec, SEED, codes[50:100])
    assert np.array_equal(xi1[50:100], xi2)
    assert np.array_equal(lam1[50:100], lam2)


def test_environment_marked_site_rule():
    e = envm.SparseEnvironment.from_blocks((2, 3, 1), (0.6, 0.7, 0.8))
    assert e.S(0) == 0 and e.S(1) == 2 and e.S(2) == 5 and e.S(3) == 6
    # site S_j carries the drift of block j+1; everything else is fair
    assert e.omega_at(0) == 0.6
    assert e.omega_at(2) == 0.7
    assert e.omega_at(5) == 0.8
    for k in (1, 3, 4):
        assert e.omega_at(k) == 0.5
    assert e.xi(2) == 3 and e.lam(2) == 0.7
    assert e.rho(2) == pytest.approx(0.3 / 0.7)


def test_omega_array_matches_sitewise_reads():
    spec = _spec(envm.TwoPoint(1.0, 4.0, 0.5), envm.Uniform(0.3, 0.7))
    e = envm.sample_environment(spec, SEED, 20, n_blocks_neg=5)
    lo, hi = e.span
    arr = e.omega_array(lo, hi - 1)
    sites = np.array([e.omega_at(k) for k in range(lo, hi)])
    assert np.allclose(arr, sites)


def test_environment_extension_never_rewrites_blocks():
    spec = _spec(envm.ShiftedGeometric(0.4), envm.Beta(2.0, 3.0))
    a = envm.sample_environment(spec, SEED, 5)
    small = [a.xi(k) for k in range(1, 6)]
    a.ensure_pos(200)
    assert [a.xi(k) for k in range(1, 6)] == small
    # a fresh environment grown in one shot agrees block by block
    b = envm.sample_environment(spec, SEED, 200)
    assert [b.xi(k) for k in range(1, 201)] == [a.xi(k) for k in range(1, 201)]
    assert [b.lam(k) for k in range(1, 201)] == [a.lam(k) for k in range(1, 201)]


def test_negative_blocks_extend_consistently():
    spec = _spec(envm.TwoPoint(1.0, 3.0, 0.5), envm.Beta(2.0, 2.0))
    a = envm.sample_environment(spec, SEED, 3, n_blocks_neg=2)
    old_lo = a.span[0]
    vals = [a.omega_at(k) for k in range(old_lo, 0)]
    a.ensure_neg(40)
    assert a.span[0] < old_lo
    assert [a.omega_at(k) for k in range(old_lo, 0)] == vals


def test_from_blocks_without_spec_cannot_extend():
    e = envm.SparseEnvironment.from_blocks((2, 2), (0.6, 0.6))
    with pytest.raises(OutOfSpanError):
        e.ensure_pos(3)
    with pytest.raises(OutOfSpanError):
        e.omega_at(4)


@given(st.integers(min_value=0, max_value=2**32 - 1),
       st.integers(min_value=1, max_value=30))
@settings(max_examples=25, deadline=None)
def test_environment_total_length_is_block_sum(seed, n_blocks):
    spec = _spec(envm.ShiftedGeometric(0.5), envm.Constant(0.6))
    e = envm.sample_environment(spec, seed, n_blocks)
    assert e.S(n_blocks) == sum(e.xi(k) for k in range(1, n_blocks + 1))


# ====================================================================
# moments and regime analysis
# ====================================================================


def test_rho_moments_against_direct_formulas():
    spec = _spec(envm.Constant(2.0), envm.TwoPoint(1 / 3, 2 / 3, 2 / 3))
    # rho takes value 2 w.p. 1/3 and 1/2 w.p. 2/3
    assert envm.rho_power_moment(spec, 1.0) == pytest.approx(
        (1 / 3) * 2.0 + (2 / 3) * 0.5)
    assert envm.rho_mean_log(spec) == pytest.approx(
        (1 / 3) * math.log(2.0) + (2 / 3) * math.log(0.5))
    assert envm.xi_power_moment(spec, 1.0) == 2.0
    assert envm.xi_rho_cross_moment(spec, 1.0) == pytest.approx(
        2.0 * envm.rho_power_moment(spec, 1.0))


def test_alpha_root_against_independent_bisection():
    # rho is 0.25 w.p. 0.6 and 1.5 w.p. 0.4; drift moment dips below one
    # and crosses back up between 2 and 3
    spec = _spec(envm.Constant(2.0), envm.TwoPoint(0.4, 0.8, 0.6))

    def moment(a):
        return 0.6 * 0.25**a + 0.4 * 1.5**a

    lo, hi = 1.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if moment(mid) > 1.0:
            hi = mid
        else:
            lo = mid
    alpha, bracket = envm.alpha_root(spec, hi=10.0)
    assert alpha == pytest.approx(0.5 * (lo + hi), abs=1e-6)
    assert bracket[0] <= alpha <= bracket[1]


def test_alpha_root_none_when_rho_never_exceeds_one():
    spec = _spec(envm.Constant(2.0), envm.TwoPoint(0.55, 0.8, 0.6))
    assert envm.alpha_root(spec, hi=60.0) is None


def test_regime_a_canonical_spec():
    spec = _spec(envm.Constant(2.0), envm.TwoPoint(1 / 3, 2 / 3, 2 / 3))
    report = envm.analyze_regime(spec)
    assert report.regime == "A"
    assert report.alpha_hat == pytest.approx(1.0, abs=1e-6)
    assert report.mean_log_rho == pytest.approx(
        (1 / 3) * math.log(2.0) + (2 / 3) * math.log(0.5))


def test_regime_b_canonical_spec():
    spec = _spec(envm.DiscretePareto(1.5), envm.Constant(2 / 3))
    report = envm.analyze_regime(spec)
    assert report.regime == "B"
    assert report.beta_tail == pytest.approx(1.5)


def test_not_transient_is_flagged():
    spec = _spec(envm.Constant(2.0), envm.Constant(0.4))  # drift to the left
    assert envm.analyze_regime(spec).regime == "NotTransient"


def test_transient_only_for_light_two_sided_spec():
    spec = _spec(envm.TwoPoint(1.0, 3.0, 0.5), envm.TwoPoint(0.6, 0.75, 0.5))
    report = envm.analyze_regime(spec)
    assert report.regime == "TransientOnly"
    assert report.mean_log_rho < 0


def test_scaling_a_n_is_the_tail_quantile():
    spec = _spec(envm.DiscretePareto(1.5), envm.Constant(2 / 3))
    for n in (10_000, 100_000):
        a_n = envm.scaling_a_n(spec, n)
        # smallest integer level whose exceedance mass drops to 1/n
        xs = np.arange(1, int(3 * a_n))
        tail = np.array([envm.xi_tail(spec, float(x)) for x in xs])
        scan = xs[np.argmax(tail <= 1.0 / n)]
        assert abs(a_n - scan) <= 1.0
        assert n * envm.xi_tail(spec, a_n) <= 1.0 + 1e-9
    assert envm.scaling_a_n(spec, 10_000) == pytest.approx(465.0)
    assert envm.scaling_a_n(spec, 100_000) == pytest.approx(2155.0)
