import itertools
import math

import numpy as np
import pytest
from scipy.special import expit

from spinlearn.concepts import Halfspace, MonotoneDNF, TableConcept, majority
from spinlearn.harness import fixture_model, fit_plan
from spinlearn.inference import glauber_gap
from spinlearn.influence import (
    CliqueLaw,
    clique_majority_fixture,
    clique_majority_influence,
    influence_transfer_rhs,
    monotone_influence_bound,
    monotone_influence_formula,
    mu_influence,
    uniform_influence_of_composition,
)
from spinlearn.models import IsingModel, diagnostics
from spinlearn.rng import streams
from spinlearn.samplers import build_ssm_plan, seed_bit_chi


def uniform_model(n):
    return IsingModel(n=n, couplings=(), fields=(0.0,) * n)


def random_mdnf(rng, n, max_terms=3, max_len=3):
    terms = tuple(tuple(sorted(rng.choice(n, size=rng.integers(1, max_len + 1),
                                          replace=False)))
                  for _ in range(rng.integers(1, max_terms + 1)))
    return MonotoneDNF(n=n, terms=terms)


# --- influence under the model law ------------------------------------------


def test_majority9_uniform_influence_frozen():
    res = mu_influence(uniform_model(9), majority(9))
    assert res["total"] == pytest.approx(630.0 / 256.0, abs=1e-12)
    assert res["per_coordinate"] == pytest.approx([70.0 / 256.0] * 9, abs=1e-12)


def test_dictator_influence_under_field():
    for h in (0.0, 0.3, -0.8):
        m = IsingModel(n=1, couplings=(), fields=(h,))
        f = TableConcept(n=1, table=(-1, 1))
        res = mu_influence(m, f)
        assert res["total"] == pytest.approx(4 * expit(2 * h) * expit(-2 * h),
                                             abs=1e-12)


def test_monotone_formula_matches_resampling_influence():
    rng = np.random.default_rng(50)
    for name in ("path5", "grid2x3", "tree10"):
        m = fixture_model(name)
        for _ in range(5):
            f = random_mdnf(rng, m.n)
            direct = mu_influence(m, f)["total"]
            alt = monotone_influence_formula(m, f)
            assert alt == pytest.approx(direct, abs=1e-12)


def test_monotone_influence_bound_battery():
    rng = np.random.default_rng(51)
    for name in ("grid2x3", "grid3x3"):
        m = fixture_model(name)
        bound = monotone_influence_bound(m.graph.max_degree(), m.n)
        for _ in range(10):
            f = random_mdnf(rng, m.n)
            assert mu_influence(m, f)["total"] <= bound + 1e-12


def test_nonmonotone_concept_can_break_the_formula():
    """The identity is a monotonicity certificate, not a general fact."""
    m = uniform_model(2)
    parity = TableConcept(n=2, table=(1, -1, -1, 1))
    direct = mu_influence(m, parity)["total"]
    alt = monotone_influence_formula(m, parity)
    assert direct == pytest.approx(2.0, abs=1e-12)
    assert abs(alt - direct) > 1.0


def test_mc_influence_agrees_with_exact():
    m = fixture_model("grid2x3")
    f = MonotoneDNF(n=6, terms=((0, 1), (4, 5)))
    exact = mu_influence(m, f)["total"]
    mc = mu_influence(m, f, mode="monte_carlo", trials=20_000,
                      streams=streams(52).child("mc"))
    assert abs(mc["total"] - exact) <= 4 * mc["stderr"]
    with pytest.raises(ValueError, match="unknown mode"):
        mu_influence(m, f, mode="bogus")


# --- clique-majority fixture ---------------------------------------------------


def clique_influence_oracle(law: CliqueLaw) -> float:
    """Direct enumeration over clique states with Bayes-rule conditionals."""
    k, c = law.num_cliques, law.clique_size
    state_probs = law.clique_state_probs()
    total = 0.0
    for state in itertools.product(range(c + 1), repeat=k):
        prob = float(np.prod([state_probs[s] for s in state]))
        count = sum(1 for s in state if s > 0)
        f = law.majority_value(count)
        for q in range(k):
            for i in range(1, c + 1):
                occupied_here = state[q] == i
                blocked = state[q] not in (0, i)
                p_plus = 0.0 if blocked else 1.0 / (c + 1)
                q_flip = (1.0 - p_plus) if occupied_here else p_plus
                new_count = count + (-1 if occupied_here else 1)
                f_flip = law.majority_value(new_count)
                total += 0.5 * prob * q_flip * (f - f_flip) ** 2
    return total


def test_clique_majority_closed_form_vs_enumeration():
    for k, c in ((2, 2), (3, 2), (4, 3), (5, 1)):
        law = clique_majority_fixture(k, c)
        assert clique_majority_influence(law) == pytest.approx(
            clique_influence_oracle(law), abs=1e-12)


def test_clique_fixture_guard():
    with pytest.raises(ValueError, match="at least two"):
        clique_majority_fixture(1, 3)


def test_clique_state_probs_normalized():
    law = clique_majority_fixture(4, 5)
    probs = law.clique_state_probs()
    assert probs.sum() == pytest.approx(1.0)
    assert law.n == 20


# --- composition with a sampler ----------------------------------------------


def test_dictator_composition_influence_exact():
    """y depends only on the top seed bit, so the total bit influence is 1."""
    m = IsingModel(n=1, couplings=(), fields=(0.0,))
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=3)
    f = TableConcept(n=1, table=(-1, 1))
    res = uniform_influence_of_composition(plan, m, f, mode="exact")
    assert res["total"] == pytest.approx(1.0, abs=1e-12)
    mc = uniform_influence_of_composition(plan, m, f, mode="monte_carlo",
                                          trials=50,
                                          streams=streams(53).child("d"))
    assert mc["total"] == pytest.approx(1.0, abs=1e-12)


def test_composition_mc_agrees_with_exact_enumeration():
    m = fixture_model("single_edge")
    plan = build_ssm_plan(m, eps=0.5, c_ssm=1.0, delta=0.5, s=4)
    f = MonotoneDNF(n=2, terms=((0, 1),))
    exact = uniform_influence_of_composition(plan, m, f, mode="exact")
    mc = uniform_influence_of_composition(plan, m, f, mode="monte_carlo",
                                          trials=600,
                                          streams=streams(54).child("c"))
    assert abs(mc["total"] - exact["total"]) <= 4 * mc["stderr"] + 1e-9
    with pytest.raises(ValueError, match="unknown mode"):
        uniform_influence_of_composition(plan, m, f, mode="bogus")


def test_composition_exact_mode_guard():
    m = fixture_model("grid2x2")
    plan = build_ssm_plan(m, eps=0.3, c_ssm=1.0, delta=0.7, s=8)
    f = MonotoneDNF(n=4, terms=((0,),))
    with pytest.raises(ValueError, match="too large"):
        uniform_influence_of_composition(plan, m, f, mode="exact")


def test_transfer_rhs_arithmetic():
    assert influence_transfer_rhs(10, 2.0, 1.5, 4, 0.1) == pytest.approx(61.6)
    assert influence_transfer_rhs(0, 5.0, 9.0, 3, 0.0) == 0.0


def test_transfer_inequality_small_battery():
    m = fixture_model("grid2x2")
    plan, _ = fit_plan(m, 0.2)
    _, c_pi = glauber_gap(m)
    chi = seed_bit_chi(plan)
    rng = np.random.default_rng(55)
    fam = streams(56).child("tr")
    for t in range(3):
        f = random_mdnf(rng, m.n)
        i_mu = mu_influence(m, f)["total"]
        rhs = influence_transfer_rhs(chi, c_pi, i_mu, m.n, plan.eps)
        got = uniform_influence_of_composition(plan, m, f, trials=60,
                                               streams=fam.child(t))
        assert got["total"] <= rhs + 4 * got["stderr"]
