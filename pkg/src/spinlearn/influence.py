"""Influence of concepts under a model law and under sampler composition.

The influence of coordinate j is half the expected squared change of f when
x_j is redrawn from its conditional given the rest. For seed-to-output
compositions the law is uniform over seed bits, so redrawing a bit flips it
with probability one half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .inference import ExactTable, all_configs, exact_distribution
from .models import IsingModel
from .rng import StreamFamily
from .samplers import ConditionalCache, SamplerPlan, Seed, ssm_samp, static_dependency_sets

__all__ = [
    "mu_influence",
    "monotone_influence_formula",
    "monotone_influence_bound",
    "CliqueLaw",
    "clique_majority_fixture",
    "clique_majority_influence",
    "uniform_influence_of_composition",
    "influence_transfer_rhs",
]


def _flip_tables(model: IsingModel, concept) -> tuple:
    n = model.n
    table = exact_distribution(model)
    x = all_configs(n)
    f = concept.eval_batch(x).astype(float)
    field = x.astype(float) @ model.coupling_matrix + model.field_vector
    return table, x, f, field


def mu_influence(model: IsingModel, concept, mode: str = "exact",
                 trials: int = 0, streams: StreamFamily = None) -> dict:
    """Per-coordinate and total influence of the concept under the model law."""
    if mode == "exact":
        table, x, f, field = _flip_tables(model, concept)
        idx = np.arange(1 << model.n)
        per = []
        for j in range(model.n):
            f_flip = f[idx ^ (1 << j)]
            # chance the redraw lands on the opposite spin
            q_flip = expit(-2.0 * x[:, j].astype(float) * field[:, j])
            per.append(0.5 * float(np.sum(table.probs * q_flip * (f - f_flip) ** 2)))
        return {"per_coordinate": per, "total": float(sum(per)), "stderr": 0.0}
    if mode == "monte_carlo":
        rng = streams.generator()
        table = exact_distribution(model)
        x = table.sample(rng, trials)
        f = concept.eval_batch(x).astype(float)
        field = x.astype(float) @ model.coupling_matrix + model.field_vector
        contrib = np.zeros(trials)
        per = []
        for j in range(model.n):
            x_flip = x.copy()
            x_flip[:, j] = -x_flip[:, j]
            f_flip = concept.eval_batch(x_flip).astype(float)
            q_flip = expit(-2.0 * x[:, j].astype(float) * field[:, j])
            term = 0.5 * q_flip * (f - f_flip) ** 2
            per.append(float(term.mean()))
            contrib += term
        total = float(contrib.mean())
        stderr = float(contrib.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("inf")
        return {"per_coordinate": per, "total": total, "stderr": stderr}
    raise ValueError(f"unknown mode {mode!r}")


def monotone_influence_formula(model: IsingModel, concept) -> float:
    """Alternative total influence E[f(X) (X_j - E[X_j | rest])], summed over j.

    Agrees with mu_influence for monotone f; used to prove the sqrt bound.
    """
    table, x, f, field = _flip_tables(model, concept)
    cond_mean = np.tanh(field)
    gaps = x.astype(float) - cond_mean
    return float(np.sum(table.probs[:, None] * f[:, None] * gaps))


def monotone_influence_bound(max_degree: int, n: int) -> float:
    return math.sqrt(2.0 * (1 + max_degree) * n)


# ---------------------------------------------------------------------------
# Disjoint-clique occupancy fixture


@dataclass(frozen=True)
class CliqueLaw:
    """Independent cliques; each is empty w.p. 1/2, else one uniform occupant.

    Spin +1 marks the occupied vertex. This is the occupancy law of the
    hardcore model at fugacity 1/clique_size on disjoint cliques.
    """

    num_cliques: int
    clique_size: int

    @property
    def n(self) -> int:
        return self.num_cliques * self.clique_size

    def clique_state_probs(self) -> np.ndarray:
        c = self.clique_size
        return np.array([0.5] + [0.5 / c] * c)

    def majority_value(self, occupied_count: int) -> int:
        return 1 if occupied_count > self.num_cliques / 2 else -1


def clique_majority_fixture(num_cliques: int, clique_size: int) -> CliqueLaw:
    if num_cliques < 2:
        raise ValueError("need at least two cliques")
    return CliqueLaw(num_cliques=num_cliques, clique_size=clique_size)


def clique_majority_influence(law: CliqueLaw) -> float:
    """Exact total influence of strict clique-majority under the product law.

    A vertex matters only when the other cliques split floor(K/2) occupied;
    redrawing it toggles its clique's occupancy with probability
    1/(clique_size + 1) from either pivotal state, giving
    2 n / (c + 1) * C(K-1, floor(K/2)) / 2^(K-1).
    """
    k, c = law.num_cliques, law.clique_size
    pivot = math.comb(k - 1, k // 2) / 2.0 ** (k - 1)
    return 2.0 * law.n * pivot / (c + 1)


# ---------------------------------------------------------------------------
# Influence of f composed with a seeded sampler, over uniform seed bits


def _affected_map(plan: SamplerPlan):
    deps = static_dependency_sets(plan)
    affected = {v: [] for v in range(plan.n)}
    for u in plan.order:
        for v in deps[u]:
            affected[v].append(u)
    order_pos = {v: k for k, v in enumerate(plan.order)}
    for v in affected:
        affected[v].sort(key=lambda u: order_pos[u])
    return affected


def uniform_influence_of_composition(plan: SamplerPlan, model: IsingModel,
                                     concept, mode: str = "monte_carlo",
                                     trials: int = 200,
                                     streams: StreamFamily = None) -> dict:
    """Total influence of concept(sampler(seed)) over the seed's bits.

    exact mode enumerates every seed (tiny plans only); monte_carlo averages
    over sampled seeds but flips each of the s*n bits exhaustively, recomputing
    only the outputs whose static dependency set contains the flipped block.
    """
    cache = ConditionalCache(model)
    n, s = plan.n, plan.s
    if mode == "exact":
        total_bits = n * s
        if total_bits > 20:
            raise ValueError("seed space too large for exact mode")
        g = np.empty(1 << total_bits, dtype=np.int8)
        for m in range(1 << total_bits):
            flat = np.array([1 if (m >> b) & 1 else -1 for b in range(total_bits)],
                            dtype=np.int8)
            y, _ = ssm_samp(plan, model, Seed.from_flat(flat, n, s), cache)
            g[m] = concept.eval(y)
        idx = np.arange(1 << total_bits)
        total = 0.0
        for b in range(total_bits):
            total += float(np.mean(g != g[idx ^ (1 << b)]))
        return {"total": total, "stderr": 0.0, "trials": 1 << total_bits}
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    affected = _affected_map(plan)
    rng = streams.generator()
    per_seed = np.zeros(trials)
    for t in range(trials):
        seed = Seed.from_rng(rng, n, s)
        y0, _ = ssm_samp(plan, model, seed, cache)
        f0 = concept.eval(y0)
        fracs = seed.fractions()
        count = 0
        for v in range(n):
            for k in range(s):
                new_frac = fracs[v] + (-1 if seed.bits[v, k] > 0 else 1) * 2.0 ** -(k + 1)
                y = y0.copy()
                changed = False
                for u in affected[v]:
                    if u != v:
                        if not any(y[w] != y0[w] for w in plan.cond_sets[u]):
                            continue
                    items = tuple((w, int(y[w])) for w in plan.cond_sets[u])
                    p = cache.prob(u, items)
                    frac = new_frac if u == v else fracs[u]
                    new_spin = 1 if frac < p else -1
                    if new_spin != y[u]:
                        y[u] = new_spin
                        changed = True
                if changed and concept.eval(y) != f0:
                    count += 1
        per_seed[t] = count
    total = float(per_seed.mean())
    stderr = float(per_seed.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("inf")
    return {"total": total, "stderr": stderr, "trials": trials}


def influence_transfer_rhs(chi_bits: int, c_pi: float, i_mu: float, n: int,
                           eps: float) -> float:
    """Upper bound on composed influence in terms of the source influence."""
    return 2.0 * chi_bits * c_pi * i_mu + 4.0 * n * eps
