import itertools
import math

import numpy as np
import pytest
from scipy.special import expit

from spinlearn.inference import (
    all_configs,
    conditional_prob,
    exact_distribution,
    tv_distance,
)
from spinlearn.models import IsingModel, diagnostics, greedy_r_partition
from spinlearn.samplers import (
    ConditionalCache,
    MAX_SEED_BITS_PER_BLOCK,
    SamplerPlan,
    Seed,
    binary_fraction,
    build_local_tree_plan,
    build_ssm_plan,
    build_tree_plan,
    discretized_conditional,
    exact_iterative_sample,
    exact_sample_batch,
    glauber_chain,
    glauber_chain_batch,
    local_tree_samp,
    niceness_holds,
    sampler_output_distribution,
    seed_bit_chi,
    ssm_samp,
    static_dependency_sets,
    tree_output_distribution,
    tree_samp,
)
from spinlearn.harness import fixture_model
from spinlearn.rng import streams


def all_seeds(n, s):
    for mask in range(1 << (n * s)):
        flat = np.array([1 if (mask >> b) & 1 else -1 for b in range(n * s)],
                        dtype=np.int8)
        yield Seed.from_flat(flat, n, s)


# --- binary fractions and discretization ----------------------------------


def test_binary_fraction_frozen_values():
    assert binary_fraction(np.array([1], dtype=np.int8)) == 0.5
    assert binary_fraction(np.array([-1, 1], dtype=np.int8)) == 0.25
    assert binary_fraction(np.array([1, -1, 1], dtype=np.int8)) == 0.625
    assert binary_fraction(np.array([-1, -1], dtype=np.int8)) == 0.0


def test_binary_fraction_exact_at_52_bits():
    bits = np.full(52, -1, dtype=np.int8)
    bits[-1] = 1
    assert binary_fraction(bits) == 2.0 ** -52


def test_discretized_conditional_ceil_formula():
    assert discretized_conditional(0.3, 3) == pytest.approx(3.0 / 8.0)
    assert discretized_conditional(0.5, 4) == 0.5  # dyadic p is unchanged
    assert discretized_conditional(1.0, 5) == 1.0
    assert discretized_conditional(0.0, 5) == 0.0
    assert discretized_conditional(1e-9, 8) == pytest.approx(1.0 / 256.0)


def test_threshold_identity_discretization():
    """frac < p and frac < ceil-discretized p agree on every dyadic frac."""
    rng = np.random.default_rng(3)
    for s in (2, 4, 7):
        for p in rng.random(50):
            p_hat = discretized_conditional(p, s)
            for k in range(1 << s):
                frac = k / (1 << s)
                assert (frac < p) == (frac < p_hat)


# --- seeds -----------------------------------------------------------------


def test_seed_fraction_matches_binary_fraction():
    rng = streams(0).child("seed").generator()
    sd = Seed.from_rng(rng, 3, 5)
    for v in range(3):
        assert sd.fraction(v) == binary_fraction(sd.bits[v])
    assert sd.fractions() == pytest.approx([sd.fraction(v) for v in range(3)])


def test_seed_flip_changes_single_fraction():
    rng = streams(1).child("seed").generator()
    sd = Seed.from_rng(rng, 2, 6)
    flipped = sd.with_flipped_bit(1, 2)
    assert flipped.fraction(0) == sd.fraction(0)
    assert abs(flipped.fraction(1) - sd.fraction(1)) == 2.0 ** -3


def test_seed_block_length_guard():
    rng = streams(2).child("seed").generator()
    with pytest.raises(ValueError, match="exceeds"):
        Seed.from_rng(rng, 2, MAX_SEED_BITS_PER_BLOCK + 1)


# --- iterative sampler plans -------------------------------------------------


def test_build_ssm_plan_formulas_path5():
    m = fixture_model("path5")
    eta = diagnostics(m).eta
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.3)
    assert plan.r == max(1, math.ceil(math.log(4.0 * 1.0 * 5 / (eta * 0.5)) / 0.3))
    assert plan.r == 17
    assert plan.s == math.ceil(math.log2(8.0 * 5 / (eta * 0.5)))
    assert plan.s == 9
    # r beyond the diameter forces singleton parts in index order
    assert plan.partition == ((0,), (1,), (2,), (3,), (4,))


def test_build_ssm_plan_rejects_bad_delta():
    m = fixture_model("path5")
    with pytest.raises(ValueError):
        build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.0)
    with pytest.raises(ValueError):
        build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=1.0)


def test_plan_cond_sets_are_earlier_and_within_ball():
    m = fixture_model("grid3x3")
    plan = build_ssm_plan(m, eps=0.3, c_ssm=1.5, delta=0.7)
    g = m.graph
    earlier = set()
    part_of = {}
    for pi, part in enumerate(plan.partition):
        for v in part:
            part_of[v] = pi
    for v in plan.order:
        ball = set(g.ball(v, plan.r))
        for u in plan.cond_sets[v]:
            assert u in earlier and u in ball
        # everything conditioned on comes from strictly earlier parts
        for u in plan.cond_sets[v]:
            assert part_of[u] < part_of[v]
        if set(plan.partition[part_of[v]]) <= earlier | {v}:
            earlier.add(v)
        else:
            earlier.add(v)
    assert greedy_r_partition(g, plan.r) == plan.partition


def test_sampler_law_equals_seed_enumeration():
    """Exhaustive check: the output law is exactly the seed-space pushforward."""
    m = fixture_model("single_edge")
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=3)
    counts = np.zeros(4)
    cache = ConditionalCache(m)
    for sd in all_seeds(2, 3):
        y, _ = ssm_samp(plan, m, sd, cache)
        counts[(y[0] > 0) + 2 * (y[1] > 0)] += 1
    law = sampler_output_distribution(plan, m)
    assert law.probs == pytest.approx(counts / counts.sum(), abs=1e-15)


def test_sampler_law_is_product_of_discretized_conditionals():
    m = fixture_model("path3_tilted")
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=5)
    law = sampler_output_distribution(plan, m)
    for idx, y in enumerate(all_configs(3)):
        prob = 1.0
        for v in plan.order:
            pin = {u: int(y[u]) for u in plan.cond_sets[v]}
            p_hat = discretized_conditional(conditional_prob(m, v, pin), plan.s)
            prob *= p_hat if y[v] > 0 else 1.0 - p_hat
        assert law.probs[idx] == pytest.approx(prob, abs=1e-12)


def test_sampler_tv_within_eps_on_fit_plans():
    from spinlearn.harness import fit_plan

    for name, eps in (("grid2x2", 0.2), ("path5", 0.3)):
        m = fixture_model(name)
        plan, _ = fit_plan(m, eps)
        tv = tv_distance(sampler_output_distribution(plan, m),
                         exact_distribution(m))
        assert tv <= eps


def test_trace_records_every_vertex_in_order():
    m = fixture_model("path5")
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.3)
    sd = Seed.from_rng(streams(3).child("tr").generator(), plan.n, plan.s)
    y, trace = ssm_samp(plan, m, sd)
    assert tuple(e[0] for e in trace.entries) == plan.order
    for v, p, frac, spin in trace.entries:
        assert spin == (1 if frac < p else -1)
        assert y[v] == spin


# --- static locality ----------------------------------------------------------


def hand_plan_path5_r2():
    m = fixture_model("path5")
    partition = greedy_r_partition(m.graph, 2)
    order, cond_sets, earlier = [], {}, []
    for part in partition:
        for v in part:
            ball = set(m.graph.ball(v, 2))
            cond_sets[v] = tuple(u for u in earlier if u in ball)
            order.append(v)
        earlier.extend(part)
    return m, SamplerPlan(r=2, s=4, eps=0.5, partition=partition,
                          order=tuple(order),
                          cond_sets=tuple(cond_sets[v] for v in range(5)))


def test_static_dependency_sets_frozen_path5_r2():
    m, plan = hand_plan_path5_r2()
    deps = static_dependency_sets(plan)
    assert deps[0] == frozenset({0})
    assert deps[3] == frozenset({3})
    assert deps[1] == frozenset({0, 1, 3})
    assert deps[4] == frozenset({3, 4})
    assert deps[2] == frozenset({0, 1, 2, 3, 4})
    assert seed_bit_chi(plan) == 5 * 4


def test_seed_bit_flips_stay_inside_static_sets():
    m, plan = hand_plan_path5_r2()
    deps = static_dependency_sets(plan)
    cache = ConditionalCache(m)
    rng = streams(5).child("flip").generator()
    for _ in range(25):
        sd = Seed.from_rng(rng, plan.n, plan.s)
        y0, _ = ssm_samp(plan, m, sd, cache)
        for v in range(plan.n):
            for k in range(plan.s):
                y1, _ = ssm_samp(plan, m, sd.with_flipped_bit(v, k), cache)
                changed = {u for u in range(plan.n) if y0[u] != y1[u]}
                for u in changed:
                    assert v in deps[u]


# --- tree sampler ---------------------------------------------------------------


def table_conditional(model, v, pinning):
    t = exact_distribution(model)
    x = all_configs(model.n)
    mask = np.ones(len(x), dtype=bool)
    for u, sp in pinning.items():
        mask &= x[:, u] == sp
    return t.probs[mask & (x[:, v] == 1)].sum() / t.probs[mask].sum()


def test_tree_plan_conditionals_match_table_oracle():
    m = fixture_model("tree10")
    plan = build_tree_plan(m)
    t = exact_distribution(m)
    x = all_configs(m.n)
    root_marg = t.probs[x[:, plan.root] == 1].sum()
    assert plan.root_marginal == pytest.approx(root_marg, abs=1e-10)
    for v in range(m.n):
        pa = plan.parent[v]
        if pa < 0:
            continue
        lo, hi = plan.p_given_parent[v]
        assert lo == pytest.approx(table_conditional(m, v, {pa: -1}), abs=1e-10)
        assert hi == pytest.approx(table_conditional(m, v, {pa: 1}), abs=1e-10)


def test_tree_law_equals_seed_enumeration():
    m = IsingModel(n=2, couplings=((0, 1, 0.4),), fields=(0.15, -0.1),
                   kind="tree")
    plan = build_tree_plan(m, s=3)
    counts = np.zeros(4)
    for sd in all_seeds(2, 3):
        y, _ = tree_samp(plan, sd)
        counts[(y[0] > 0) + 2 * (y[1] > 0)] += 1
    law = tree_output_distribution(plan)
    assert law.probs == pytest.approx(counts / counts.sum(), abs=1e-15)


def test_tree_tv_shrinks_with_block_length():
    m = fixture_model("path3_tilted")
    mu = exact_distribution(m)
    tv10 = tv_distance(tree_output_distribution(build_tree_plan(m, s=10)), mu)
    tv14 = tv_distance(tree_output_distribution(build_tree_plan(m, s=14)), mu)
    assert tv14 <= tv10 / 8.0 + 1e-15


def test_sigma_star_frozen_cases():
    two = IsingModel(n=2, couplings=((0, 1, 0.5),), fields=(0.0, 0.0),
                     kind="tree")
    assert build_tree_plan(two).sigma_star == (1, 0)
    tilted = fixture_model("path3_tilted")
    assert build_tree_plan(tilted).sigma_star == (1, 1, 1)
    neg = IsingModel(n=2, couplings=((0, 1, 0.3),), fields=(-0.5, -0.5),
                     kind="tree")
    assert build_tree_plan(neg).sigma_star[1] == -1


def test_local_tree_plan_radius_formula():
    m = fixture_model("tree50")
    eta = diagnostics(m).eta
    plan = build_local_tree_plan(m, eps_prime=0.05)
    assert plan.r == math.ceil(2.0 * math.log(50 / (2 * 0.05)) / eta)


def test_local_tree_plan_block_length_guard():
    m = fixture_model("tree50")
    with pytest.raises(ValueError, match="block length"):
        build_local_tree_plan(m, eps_prime=0.05, s=2)


def test_local_tree_agrees_when_premise_holds():
    """Non-vacuous check: radius 7 splits seeds into both populations, and
    every premise-holding seed reproduces the full tree sampler exactly."""
    m = fixture_model("tree50")
    tp = build_tree_plan(m)
    lp = build_local_tree_plan(m, eps_prime=0.05, s=tp.s, r_override=7)
    rng = streams(11).child("imp").generator()
    holds = fails = disagreements_under_premise = 0
    for _ in range(300):
        sd = Seed.from_rng(rng, 50, tp.s)
        same = np.array_equal(tree_samp(tp, sd)[0], local_tree_samp(lp, sd)[0])
        if niceness_holds(lp, sd):
            holds += 1
            disagreements_under_premise += int(not same)
        else:
            fails += 1
    assert holds > 20
    assert fails > 100
    assert disagreements_under_premise == 0


def test_local_tree_branch_labels():
    m = fixture_model("tree50")
    tp = build_tree_plan(m)
    lp = build_local_tree_plan(m, eps_prime=0.05, s=tp.s, r_override=1)
    rng = streams(12).child("br").generator()
    seen = set()
    for _ in range(40):
        sd = Seed.from_rng(rng, 50, tp.s)
        _, branches = local_tree_samp(lp, sd)
        seen.update(branches)
    assert "shallow" in seen
    assert "fallback" in seen or "replay" in seen


def test_local_tree_shallow_nodes_always_exact():
    # depth <= r nodes replay the full sampler even at a tiny radius
    m = fixture_model("tree50")
    tp = build_tree_plan(m)
    lp = build_local_tree_plan(m, eps_prime=0.05, s=tp.s, r_override=2)
    rng = streams(13).child("sh").generator()
    shallow = [u for u in range(50) if lp.depth[u] <= 2]
    for _ in range(60):
        sd = Seed.from_rng(rng, 50, tp.s)
        y_full, _ = tree_samp(tp, sd)
        y_loc, _ = local_tree_samp(lp, sd)
        for u in shallow:
            assert y_loc[u] == y_full[u]


# --- reference samplers -----------------------------------------------------


def test_exact_sample_batch_matches_law():
    m = fixture_model("path3_tilted")
    mu = exact_distribution(m)
    x = exact_sample_batch(m, 400_000, streams(4).child("b").generator())
    idx = ((x > 0).astype(np.int64) << np.arange(3)).sum(axis=1)
    emp = np.bincount(idx, minlength=8) / len(x)
    assert tv_distance(emp, mu.probs) < 0.005


def test_iterative_and_batch_samplers_agree_in_law():
    m = fixture_model("grid2x2")
    mu = exact_distribution(m)
    rng = streams(6).child("it").generator()
    rows = np.array([exact_iterative_sample(m, rng) for _ in range(6000)])
    idx = ((rows > 0).astype(np.int64) << np.arange(4)).sum(axis=1)
    emp = np.bincount(idx, minlength=16) / len(rows)
    assert tv_distance(emp, mu.probs) < 0.03


def test_glauber_chain_mixes_to_stationarity():
    m = fixture_model("grid2x2")
    mu = exact_distribution(m)
    rng = streams(7).child("gl").generator()
    finals = glauber_chain_batch(m, steps=400, chains=4000, rng=rng)
    idx = ((finals > 0).astype(np.int64) << np.arange(4)).sum(axis=1)
    emp = np.bincount(idx, minlength=16) / len(finals)
    assert tv_distance(emp, mu.probs) < 0.04


def test_glauber_chain_single_start_default():
    m = fixture_model("grid2x2")
    rng = streams(8).child("g1").generator()
    x = glauber_chain(m, steps=0, rng=rng)
    assert list(x) == [-1, -1, -1, -1]
