"""Seeded samplers whose outputs are local functions of their random bits.

The main sampler assigns each variable an s-bit block, schedules variables in
parts that are pairwise far in the dependency graph, and thresholds the
block's binary fraction against an exact conditional given the already-drawn
spins inside a radius-r ball. Tree models get a cheaper parent-conditional
variant plus a localized version whose deep nodes re-derive their value from
the nearest seed-determined ancestor. Exact sequential and single-site-chain
samplers serve as references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .inference import ExactTable, all_configs, conditional_prob, exact_distribution
from .models import IsingModel, diagnostics, greedy_r_partition

__all__ = [
    "Seed",
    "SamplerPlan",
    "TreePlan",
    "SampleTrace",
    "ConditionalCache",
    "binary_fraction",
    "discretized_conditional",
    "build_ssm_plan",
    "ssm_samp",
    "sampler_output_distribution",
    "static_dependency_sets",
    "seed_bit_chi",
    "build_tree_plan",
    "tree_samp",
    "build_local_tree_plan",
    "local_tree_samp",
    "tree_output_distribution",
    "glauber_chain",
    "glauber_chain_batch",
    "exact_iterative_sample",
    "exact_sample_batch",
]

MAX_SEED_BITS_PER_BLOCK = 52  # binary fractions stay exact in a double


def binary_fraction(bits) -> float:
    """Sum of 2^-(i+1) over positions i whose bit is +1 (exact dyadic)."""
    k = 0
    for b in bits:
        k = (k << 1) | (1 if b > 0 else 0)
    return k * 2.0 ** -len(bits)


def discretized_conditional(p: float, s: int) -> float:
    """Probability that an s-bit block's fraction lands below p."""
    return min(math.ceil(p * (1 << s)), 1 << s) / (1 << s)


@dataclass(frozen=True)
class Seed:
    """One s-bit block of +-1 bits per variable."""

    bits: np.ndarray  # shape (n, s), entries +-1

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def s(self) -> int:
        return self.bits.shape[1]

    @classmethod
    def from_rng(cls, rng: np.random.Generator, n: int, s: int) -> "Seed":
        if s > MAX_SEED_BITS_PER_BLOCK:
            raise ValueError(f"block length {s} exceeds exact-fraction limit")
        bits = (2 * rng.integers(0, 2, size=(n, s)) - 1).astype(np.int8)
        return cls(bits=bits)

    @classmethod
    def from_flat(cls, flat, n: int, s: int) -> "Seed":
        bits = np.asarray(flat, dtype=np.int8).reshape(n, s)
        return cls(bits=bits)

    def fraction(self, v: int) -> float:
        return binary_fraction(self.bits[v])

    def fractions(self) -> np.ndarray:
        weights = 2.0 ** -np.arange(1, self.s + 1)
        return (self.bits > 0).astype(float) @ weights

    def with_flipped_bit(self, v: int, k: int) -> "Seed":
        bits = self.bits.copy()
        bits[v, k] = -bits[v, k]
        return Seed(bits=bits)


class ConditionalCache:
    """Memoizes conditional_prob keyed by (variable, pinned spins)."""

    def __init__(self, model: IsingModel):
        self.model = model
        self._memo = {}

    def prob(self, v: int, items: tuple) -> float:
        key = (v, items)
        p = self._memo.get(key)
        if p is None:
            p = conditional_prob(self.model, v, dict(items))
            self._memo[key] = p
        return p


@dataclass(frozen=True)
class SamplerPlan:
    """Schedule for the radius-r sampler.

    order concatenates the partition's parts; cond_sets[v] lists the earlier
    -part variables within distance r of v, in ascending order.
    """

    r: int
    s: int
    eps: float
    partition: tuple
    order: tuple
    cond_sets: tuple

    @property
    def n(self) -> int:
        return len(self.order)

    @property
    def num_parts(self) -> int:
        return len(self.partition)


@dataclass(frozen=True)
class SampleTrace:
    """Per-variable record (v, conditional, fraction, spin) in draw order."""

    entries: tuple

    def to_dict(self) -> dict:
        return {"entries": [
            {"v": v, "p": p, "fraction": f, "spin": spin}
            for v, p, f, spin in self.entries
        ]}


def build_ssm_plan(model: IsingModel, eps: float, c_ssm: float, delta: float,
                   s: Optional[int] = None) -> SamplerPlan:
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    if eps <= 0 or c_ssm <= 0:
        raise ValueError("eps and c_ssm must be positive")
    eta = diagnostics(model).eta
    r = max(1, math.ceil(math.log(4.0 * c_ssm * model.n / (eta * eps)) / delta))
    if s is None:
        s = max(1, math.ceil(math.log2(8.0 * model.n / (eta * eps))))
    graph = model.graph
    partition = greedy_r_partition(graph, r)
    order = tuple(v for part in partition for v in part)
    earlier = set()
    cond = [()] * model.n
    for part in partition:
        for v in part:
            cond[v] = tuple(u for u in graph.ball(v, r) if u in earlier)
        earlier.update(part)
    return SamplerPlan(r=r, s=s, eps=eps, partition=partition, order=order,
                       cond_sets=tuple(cond))


def ssm_samp(plan: SamplerPlan, model: IsingModel, seed: Seed,
             cache: Optional[ConditionalCache] = None):
    """Run the plan on one seed; returns (spins, trace)."""
    if seed.n != plan.n or seed.s != plan.s:
        raise ValueError("seed shape does not match plan")
    if cache is None:
        cache = ConditionalCache(model)
    y = np.zeros(plan.n, dtype=np.int8)
    entries = []
    for v in plan.order:
        items = tuple((u, int(y[u])) for u in plan.cond_sets[v])
        p = cache.prob(v, items)
        frac = seed.fraction(v)
        y[v] = 1 if frac < p else -1
        entries.append((v, p, frac, int(y[v])))
    return y, SampleTrace(entries=tuple(entries))


def sampler_output_distribution(plan: SamplerPlan, model: IsingModel,
                                max_n: int = 20) -> ExactTable:
    """Exact output law: product of discretized conditionals in plan order."""
    n = plan.n
    if n > max_n:
        raise ValueError(f"refusing output law over 2^{n} configurations")
    cache = ConditionalCache(model)
    x = all_configs(n)
    probs = np.ones(1 << n)
    for v in plan.order:
        t = plan.cond_sets[v]
        table = np.empty(1 << len(t))
        for m, sigma in enumerate(all_configs(len(t))):
            items = tuple(zip(t, map(int, sigma)))
            table[m] = discretized_conditional(cache.prob(v, items), plan.s)
        if t:
            sub = np.zeros(1 << n, dtype=np.int64)
            for pos, u in enumerate(t):
                sub |= ((x[:, u] > 0).astype(np.int64)) << pos
            pv = table[sub]
        else:
            pv = np.full(1 << n, table[0])
        probs *= np.where(x[:, v] > 0, pv, 1.0 - pv)
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise AssertionError(f"output law sums to {total}")
    return ExactTable(n=n, probs=probs / total)


def static_dependency_sets(plan: SamplerPlan) -> tuple:
    """Block-level dependency closure: deps[v] = {v} union deps over cond set."""
    deps = [frozenset()] * plan.n
    for v in plan.order:
        d = {v}
        for u in plan.cond_sets[v]:
            d.update(deps[u])
        deps[v] = frozenset(d)
    return tuple(deps)


def seed_bit_chi(plan: SamplerPlan) -> int:
    """Max number of seed bits any single output can read."""
    deps = static_dependency_sets(plan)
    return max((len(d) for d in deps), default=0) * plan.s


# ---------------------------------------------------------------------------
# Tree samplers


@dataclass(frozen=True)
class TreePlan:
    root: int
    order: tuple          # parents before children
    parent: tuple         # -1 at the root
    depth: tuple
    s: int
    eta: float
    root_marginal: float
    p_given_parent: tuple  # per node (p if parent -1, p if parent +1)
    sigma_star: tuple      # +1 / -1 / 0 when neither sign qualifies
    r: Optional[int] = None

    @property
    def n(self) -> int:
        return len(self.order)


def _bp_pass(model: IsingModel, root: int):
    """Upward messages on the tree; returns order, parent, depth, conditionals."""
    graph = model.graph
    if not graph.is_tree():
        raise ValueError("model graph is not a tree")
    n = model.n
    parent = [-1] * n
    depth = [0] * n
    order = [root]
    seen = {root}
    for u in order:
        for w in graph.neighbors[u]:
            if w not in seen:
                seen.add(w)
                parent[w] = u
                depth[w] = depth[u] + 1
                order.append(w)
    a, h = model.coupling_matrix, model.field_vector
    # log message child -> parent evaluated at parent spin (-1, +1)
    msg = np.zeros((n, 2))
    for u in reversed(order):
        if parent[u] < 0:
            continue
        inc = np.zeros(2)
        for w in graph.neighbors[u]:
            if w != parent[u]:
                inc += msg[w]
        p = parent[u]
        for k, sp in enumerate((-1.0, 1.0)):
            terms = [a[u, p] * su * sp + h[u] * su + inc[(int(su) + 1) // 2]
                     for su in (-1.0, 1.0)]
            m = max(terms)
            msg[u, k] = m + math.log(math.exp(terms[0] - m) + math.exp(terms[1] - m))
        msg[u] -= msg[u].max()
    cond = []
    for u in range(n):
        inc = np.zeros(2)
        for w in graph.neighbors[u]:
            if parent[w] == u:
                inc += msg[w]
        pair = []
        for sp in (-1.0, 1.0):
            feed = a[u, parent[u]] * sp if parent[u] >= 0 else 0.0
            log_odds = 2.0 * (h[u] + feed) + (inc[1] - inc[0])
            pair.append(1.0 / (1.0 + math.exp(-log_odds)))
        cond.append(tuple(pair))
    root_marginal = cond[root][0]  # feed is 0 on both entries at the root
    return tuple(order), tuple(parent), tuple(depth), tuple(cond), root_marginal


def build_tree_plan(model: IsingModel, s: Optional[int] = None, root: int = 0,
                    eps: float = 0.5) -> TreePlan:
    eta = diagnostics(model).eta
    if s is None:
        s = max(1, math.ceil(math.log2(8.0 * model.n / (eta * eps))))
    order, parent, depth, cond, root_marginal = _bp_pass(model, root)
    sigma = []
    for u in range(model.n):
        lo_plus = root_marginal if parent[u] < 0 else min(cond[u])
        lo_minus = 1.0 - root_marginal if parent[u] < 0 else min(1.0 - cond[u][0], 1.0 - cond[u][1])
        sigma.append(1 if lo_plus >= eta else (-1 if lo_minus >= eta else 0))
    return TreePlan(root=root, order=order, parent=parent, depth=depth, s=s,
                    eta=eta, root_marginal=root_marginal, p_given_parent=cond,
                    sigma_star=tuple(sigma))


def _node_conditional(plan: TreePlan, u: int, y) -> float:
    if plan.parent[u] < 0:
        return plan.root_marginal
    return plan.p_given_parent[u][(int(y[plan.parent[u]]) + 1) // 2]


def tree_samp(plan: TreePlan, seed: Seed):
    """Level-by-level sampler: root from its marginal, others given the parent."""
    y = np.zeros(plan.n, dtype=np.int8)
    entries = []
    for u in plan.order:
        p = _node_conditional(plan, u, y)
        frac = seed.fraction(u)
        y[u] = 1 if frac < p else -1
        entries.append((u, p, frac, int(y[u])))
    return y, SampleTrace(entries=tuple(entries))


def build_local_tree_plan(model: IsingModel, eps_prime: float,
                          s: Optional[int] = None, root: int = 0,
                          r_override: Optional[int] = None) -> TreePlan:
    plan = build_tree_plan(model, s=s, root=root, eps=eps_prime)
    if plan.s < math.log2(4.0 / plan.eta):
        raise ValueError("block length too short for the determinism threshold")
    r = r_override
    if r is None:
        r = math.ceil(2.0 * math.log(model.n / (2.0 * eps_prime)) / plan.eta)
    return TreePlan(root=plan.root, order=plan.order, parent=plan.parent,
                    depth=plan.depth, s=plan.s, eta=plan.eta,
                    root_marginal=plan.root_marginal,
                    p_given_parent=plan.p_given_parent,
                    sigma_star=plan.sigma_star, r=r)


def _determined(plan: TreePlan, seed: Seed, w: int) -> bool:
    """Seed block forces node w's spin regardless of its parent."""
    star = plan.sigma_star[w]
    frac = seed.fraction(w)
    if star == 1:
        return frac < plan.eta
    if star == -1:
        return frac >= 1.0 - plan.eta
    return False


def local_tree_samp(plan: TreePlan, seed: Seed):
    """Depth-limited variant; returns (spins, per-node branch labels).

    Nodes within depth r replay the level sampler. A deeper node walks at most
    r ancestors looking for one whose seed block alone fixes its spin, then
    replays the parent-conditional chain from there; with no determined
    ancestor it falls back to the first bit of its own block.
    """
    if plan.r is None:
        raise ValueError("plan has no locality radius")
    y = np.zeros(plan.n, dtype=np.int8)
    branch = [""] * plan.n
    for u in plan.order:
        if plan.depth[u] <= plan.r:
            p = _node_conditional(plan, u, y)
            y[u] = 1 if seed.fraction(u) < p else -1
            branch[u] = "shallow"
            continue
        chain = [u]
        w = u
        found = -1
        for _ in range(plan.r + 1):
            if _determined(plan, seed, w):
                found = w
                break
            if plan.parent[w] < 0:
                break
            w = plan.parent[w]
            chain.append(w)
        if found < 0:
            y[u] = seed.bits[u, 0]
            branch[u] = "fallback"
            continue
        val = plan.sigma_star[found]
        for node in reversed(chain[:-1]):  # walk back down toward u
            p = plan.p_given_parent[node][(val + 1) // 2]
            val = 1 if seed.fraction(node) < p else -1
        y[u] = val
        branch[u] = "replay"
    return y, tuple(branch)


def niceness_holds(plan: TreePlan, seed: Seed) -> bool:
    """Every node deeper than r has a determined ancestor within r hops."""
    if plan.r is None:
        raise ValueError("plan has no locality radius")
    for u in range(plan.n):
        if plan.depth[u] <= plan.r:
            continue
        w, ok = u, False
        for _ in range(plan.r + 1):
            if _determined(plan, seed, w):
                ok = True
                break
            if plan.parent[w] < 0:
                break
            w = plan.parent[w]
        if not ok:
            return False
    return True


def tree_output_distribution(plan: TreePlan, max_n: int = 20) -> ExactTable:
    """Exact law of tree_samp: product of discretized parent conditionals."""
    n = plan.n
    if n > max_n:
        raise ValueError(f"refusing output law over 2^{n} configurations")
    x = all_configs(n)
    probs = np.ones(1 << n)
    for u in plan.order:
        if plan.parent[u] < 0:
            pv = np.full(1 << n, discretized_conditional(plan.root_marginal, plan.s))
        else:
            pair = plan.p_given_parent[u]
            lookup = np.array([discretized_conditional(pair[0], plan.s),
                               discretized_conditional(pair[1], plan.s)])
            pv = lookup[(x[:, plan.parent[u]] > 0).astype(int)]
        probs *= np.where(x[:, u] > 0, pv, 1.0 - pv)
    return ExactTable(n=n, probs=probs / probs.sum())


# ---------------------------------------------------------------------------
# Reference samplers


def glauber_chain(model: IsingModel, steps: int, rng: np.random.Generator,
                  start=None) -> np.ndarray:
    x = np.full(model.n, -1, dtype=np.int8) if start is None else np.asarray(start, np.int8).copy()
    a, h = model.coupling_matrix, model.field_vector
    sites = rng.integers(0, model.n, size=steps)
    unif = rng.random(steps)
    for t in range(steps):
        i = sites[t]
        p = 1.0 / (1.0 + math.exp(-2.0 * (a[i] @ x + h[i])))
        x[i] = 1 if unif[t] < p else -1
    return x


def glauber_chain_batch(model: IsingModel, steps: int, chains: int,
                        rng: np.random.Generator, start=None) -> np.ndarray:
    """Independent chains advanced in lockstep (one site draw per chain/step)."""
    if start is None:
        x = np.full((chains, model.n), -1, dtype=np.int8)
    else:
        x = np.tile(np.asarray(start, np.int8), (chains, 1))
    a, h = model.coupling_matrix, model.field_vector
    for _ in range(steps):
        sites = rng.integers(0, model.n, size=chains)
        unif = rng.random(chains)
        fields = np.einsum("cj,cj->c", x.astype(float), a[sites]) + h[sites]
        spins = np.where(unif < 1.0 / (1.0 + np.exp(-2.0 * fields)), 1, -1)
        x[np.arange(chains), sites] = spins
    return x


def exact_iterative_sample(model: IsingModel, rng: np.random.Generator,
                           cache: Optional[ConditionalCache] = None) -> np.ndarray:
    """Gold-standard draw: chain rule over variables in index order."""
    if cache is None:
        cache = ConditionalCache(model)
    x = np.zeros(model.n, dtype=np.int8)
    for v in range(model.n):
        items = tuple((u, int(x[u])) for u in range(v))
        p = cache.prob(v, items)
        x[v] = 1 if rng.random() < p else -1
    return x


def exact_sample_batch(model: IsingModel, size: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Vectorized twin of exact_iterative_sample (identical law)."""
    table = exact_distribution(model)
    n = model.n
    masks = np.arange(1 << n, dtype=np.int64)
    idx = np.zeros(size, dtype=np.int64)
    prefix = [np.bincount(masks & ((1 << i) - 1), weights=table.probs,
                          minlength=1 << i) for i in range(n + 1)]
    for i in range(n):
        num = prefix[i + 1][idx | (1 << i)]
        den = prefix[i][idx]
        p = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        idx |= (rng.random(size) < p).astype(np.int64) << i
    return all_configs(n)[idx]
