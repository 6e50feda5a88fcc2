import math

import numpy as np
import pytest
from scipy.special import expit

from spinlearn.harness import fixture_model, fit_plan
from spinlearn.inference import all_configs, exact_distribution
from spinlearn.inverter import (
    block_from_int,
    inv_samp,
    inverter_degree_audit,
    likelihood_ratio_audit,
    preimage_enumerate,
    preimage_uniformity_audit,
    pushforward_bound_audit,
    _fraction,
)
from spinlearn.models import IsingModel
from spinlearn.rng import streams
from spinlearn.samplers import (
    ConditionalCache,
    Seed,
    build_ssm_plan,
    build_tree_plan,
    discretized_conditional,
    exact_sample_batch,
    sampler_output_distribution,
    ssm_samp,
    tree_samp,
)


def single_site(field=0.3):
    return IsingModel(n=1, couplings=(), fields=(field,))


# --- block codes -------------------------------------------------------------


def test_block_from_int_bit_convention():
    assert list(block_from_int(5, 3)) == [1, -1, 1]
    assert list(block_from_int(0, 3)) == [-1, -1, -1]
    assert list(block_from_int(7, 3)) == [1, 1, 1]


def test_block_code_fraction_identity():
    for k in range(16):
        assert _fraction(block_from_int(k, 4)) == k / 16.0


# --- preimage factorization ----------------------------------------------------


def test_preimage_factors_frozen_single_site():
    m = single_site(0.3)
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=3)
    # P(x=+1) = expit(0.6) ~ 0.6457, so ceil(p * 8) = 6
    pre_plus = preimage_enumerate(plan, m, [1])
    assert pre_plus.factors == ((0, 1, 2, 3, 4, 5),)
    assert pre_plus.size == 6
    pre_minus = preimage_enumerate(plan, m, [-1])
    assert pre_minus.factors == ((6, 7),)
    assert pre_minus.size == 2


def test_preimage_factors_match_ceil_formula():
    m = fixture_model("path3_tilted")
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=4)
    cache = ConditionalCache(m)
    for y in all_configs(3):
        pre = preimage_enumerate(plan, m, y)
        expect_size = 1
        for v in plan.order:
            p = cache.prob(v, tuple((u, int(y[u])) for u in plan.cond_sets[v]))
            cut = min(math.ceil(p * 16), 16)
            want = cut if y[v] > 0 else 16 - cut
            assert len(pre.factors[v]) == want
            expect_size *= want
        assert pre.size == expect_size


def test_preimages_partition_the_seed_space():
    """Factored preimages are disjoint, exhaustive, and forward-consistent."""
    m = fixture_model("single_edge")
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=3)
    cache = ConditionalCache(m)
    seen = {}
    total = 0
    for y in all_configs(2):
        pre = preimage_enumerate(plan, m, y)
        total += pre.size
        for seed in pre.seeds(plan.s):
            key = seed.bits.tobytes()
            assert key not in seen
            seen[key] = tuple(y)
            got, _ = ssm_samp(plan, m, seed, cache)
            assert tuple(got) == tuple(y)
    assert total == 2 ** (plan.n * plan.s)
    assert len(seen) == total


def test_sampler_law_equals_preimage_fraction():
    m = fixture_model("path3_tilted")
    plan = build_ssm_plan(m, eps=0.4, c_ssm=1.0, delta=0.5, s=5)
    law = sampler_output_distribution(plan, m)
    denom = 2.0 ** (plan.n * plan.s)
    for idx, y in enumerate(all_configs(3)):
        pre = preimage_enumerate(plan, m, y)
        assert law.probs[idx] == pytest.approx(pre.size / denom, abs=1e-15)


def test_preimage_guard_on_large_seed_space():
    m = fixture_model("grid3x3")
    plan = build_ssm_plan(m, eps=0.3, c_ssm=1.0, delta=0.5)
    with pytest.raises(ValueError, match="too large"):
        preimage_enumerate(plan, m, [1] * 9)


# --- inversion ---------------------------------------------------------------


def test_roundtrip_on_grid_plan():
    m = fixture_model("grid2x2")
    plan, _ = fit_plan(m, 0.2)
    cache = ConditionalCache(m)
    draws = exact_sample_batch(m, 200, streams(21).child("draw").generator())
    fam = streams(21).child("inv")
    for t, y in enumerate(draws):
        res = inv_samp(plan, m, y, fam.child(t))
        assert res.seed is not None
        assert len(res.attempts) == plan.n
        got, _ = ssm_samp(plan, m, res.seed, cache)
        assert np.array_equal(got, y)


def test_roundtrip_on_tree_plan():
    m = fixture_model("tree10")
    plan = build_tree_plan(m)
    draws = exact_sample_batch(m, 100, streams(22).child("draw").generator())
    fam = streams(22).child("inv")
    for t, y in enumerate(draws):
        res = inv_samp(plan, m, y, fam.child(t))
        assert res.seed is not None
        got, _ = tree_samp(plan, res.seed)
        assert np.array_equal(got, y)


def test_mean_attempts_geometric():
    """Success prob 3/8 after discretization, so mean attempts is 8/3."""
    h = 0.5 * math.log(3.0 / 7.0)  # expit(2h) = 0.3, ceil(0.3 * 8) = 3
    m = single_site(h)
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=3)
    assert discretized_conditional(expit(2 * h), 3) == 3.0 / 8.0
    fam = streams(23).child("geo")
    tries = []
    for t in range(10_000):
        res = inv_samp(plan, m, [1], fam.child(t))
        tries.append(res.attempts[0])
    mean = float(np.mean(tries))
    # geometric(3/8): mean 8/3, sd sqrt(1-p)/p ~ 2.108, so 3.3 sigma ~ 0.07
    assert abs(mean - 8.0 / 3.0) < 0.07


def test_attempt_cap_failure_is_reported():
    m = single_site(0.3)
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=3)
    res = inv_samp(plan, m, [1], streams(24).child("cap"), attempt_cap=0)
    assert res.seed is None
    assert res.failed_at == plan.order[0]
    assert res.attempts == ()


# --- audits ------------------------------------------------------------------


def test_likelihood_ratio_within_plan_budget():
    for name, eps in (("grid2x2", 0.2), ("path5", 0.25)):
        m = fixture_model(name)
        plan, _ = fit_plan(m, eps)
        audit = likelihood_ratio_audit(plan, m)
        assert audit["max_ratio"] <= math.exp(eps)


def test_ratio_and_pushforward_audits_agree():
    """Both audits measure mu(y) / law(y); the pushforward one goes through
    the preimage cardinalities and must land on the same maximum."""
    m = fixture_model("grid2x2")
    plan, _ = fit_plan(m, 0.2)
    a = likelihood_ratio_audit(plan, m)
    b = pushforward_bound_audit(plan, m)
    assert a["max_ratio"] == pytest.approx(b["max_density_ratio"], rel=1e-9)

    mtree = fixture_model("tree10")
    tplan = build_tree_plan(mtree)
    a = likelihood_ratio_audit(tplan, mtree)
    b = pushforward_bound_audit(tplan, mtree)
    assert a["max_ratio"] == pytest.approx(b["max_density_ratio"], rel=1e-9)


def test_pushforward_sizes_sum_to_seed_space():
    from spinlearn.inverter import _preimage_size_table

    m = fixture_model("path3_tilted")
    plan = build_ssm_plan(m, eps=0.4, c_ssm=1.0, delta=0.5, s=6)
    sizes = _preimage_size_table(plan, m)
    assert sizes.sum() == 2.0 ** (plan.n * plan.s)


def test_preimage_uniformity_small_fixture():
    m = single_site(0.3)
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=3)
    audit = preimage_uniformity_audit(plan, m, [1], trials=3000,
                                      streams=streams(25).child("uni"))
    assert audit["preimage_size"] == 6
    assert audit["tv"] < 0.05


def test_preimage_uniformity_guard():
    m = fixture_model("single_edge")
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=5)
    with pytest.raises(ValueError, match="exceeds"):
        preimage_uniformity_audit(plan, m, [1, 1], trials=10,
                                  streams=streams(26).child("g"),
                                  max_preimage=8)


def test_degree_audit_reports_no_violations():
    m = fixture_model("grid2x2")
    plan = build_ssm_plan(m, eps=0.3, c_ssm=1.0, delta=0.7, s=6)
    y = exact_sample_batch(m, 1, streams(27).child("y").generator())[0]
    audit = inverter_degree_audit(plan, m, y, streams(27).child("aud"))
    assert audit["violations"] == []
    assert max(audit["cond_set_sizes"]) <= m.n - 1

    mtree = fixture_model("tree10")
    tplan = build_tree_plan(mtree)
    yt = exact_sample_batch(mtree, 1, streams(28).child("y").generator())[0]
    audit = inverter_degree_audit(tplan, mtree, yt, streams(28).child("aud"))
    assert audit["violations"] == []
    assert max(audit["cond_set_sizes"]) <= 1
