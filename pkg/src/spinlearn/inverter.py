"""Rejection inversion of the seeded samplers.

Given an output configuration, each coordinate redraws its s-bit block from
its own substream until the sampler's threshold rule reproduces that
coordinate's spin. The accepted block is uniform on the per-coordinate factor
set, so the whole inverted seed is uniform on the preimage, which factorizes
as the Cartesian product of those sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .inference import exact_distribution
from .models import IsingModel
from .rng import StreamFamily
from .samplers import (
    ConditionalCache,
    SamplerPlan,
    Seed,
    TreePlan,
    discretized_conditional,
    sampler_output_distribution,
    tree_output_distribution,
)

__all__ = [
    "InversionResult",
    "Preimage",
    "inv_samp",
    "preimage_enumerate",
    "block_from_int",
    "likelihood_ratio_audit",
    "pushforward_bound_audit",
    "preimage_uniformity_audit",
    "inverter_degree_audit",
]

DEFAULT_ATTEMPT_CAP = 10**6
PREIMAGE_GUARD_BITS = 26


def _schedule(plan, model, y, cache):
    """Yield (v, conditional) pairs in the plan's draw order."""
    if isinstance(plan, SamplerPlan):
        for v in plan.order:
            items = tuple((u, int(y[u])) for u in plan.cond_sets[v])
            yield v, cache.prob(v, items)
    elif isinstance(plan, TreePlan):
        for v in plan.order:
            if plan.parent[v] < 0:
                yield v, plan.root_marginal
            else:
                yield v, plan.p_given_parent[v][(int(y[plan.parent[v]]) + 1) // 2]
    else:
        raise TypeError(f"unsupported plan type {type(plan)!r}")


@dataclass(frozen=True)
class InversionResult:
    seed: Optional[Seed]           # None when some coordinate hit the cap
    attempts: tuple                # per coordinate, plan order
    failed_at: Optional[int] = None


def inv_samp(plan, model: Optional[IsingModel], y: Sequence[int],
             streams: StreamFamily,
             attempt_cap: int = DEFAULT_ATTEMPT_CAP) -> InversionResult:
    """Invert one output; coordinate v draws from streams.child("coord", v)."""
    cache = ConditionalCache(model) if isinstance(plan, SamplerPlan) else None
    bits = np.zeros((plan.n, plan.s), dtype=np.int8)
    attempts = []
    for v, p in _schedule(plan, model, y, cache):
        gen = streams.child("coord", v).generator()
        want_plus = y[v] > 0
        tries = 0
        while True:
            tries += 1
            if tries > attempt_cap:
                return InversionResult(seed=None, attempts=tuple(attempts),
                                       failed_at=v)
            block = (2 * gen.integers(0, 2, size=plan.s) - 1).astype(np.int8)
            frac = _fraction(block)
            if (frac < p) == want_plus:
                break
        bits[v] = block
        attempts.append(tries)
    return InversionResult(seed=Seed(bits=bits), attempts=tuple(attempts))


def _fraction(block) -> float:
    k = 0
    for b in block:
        k = (k << 1) | (1 if b > 0 else 0)
    return k * 2.0 ** -len(block)


def block_from_int(code: int, s: int) -> np.ndarray:
    """Integer code -> bit block; the block's fraction is code / 2^s."""
    bits = [(code >> (s - 1 - i)) & 1 for i in range(s)]
    return np.array([1 if b else -1 for b in bits], dtype=np.int8)


@dataclass(frozen=True)
class Preimage:
    """Factorized preimage of one output configuration."""

    factors: tuple   # per variable (index order), tuple of block codes
    order: tuple     # plan order, for reference
    size: int

    def seeds(self, s: int, cap: int = 1 << 20):
        if self.size > cap:
            raise ValueError(f"preimage of size {self.size} too large to list")
        n = len(self.factors)
        for combo in product(*self.factors):
            bits = np.stack([block_from_int(c, s) for c in combo])
            yield Seed(bits=bits.reshape(n, s))


def preimage_enumerate(plan, model: Optional[IsingModel],
                       y: Sequence[int]) -> Preimage:
    """Per-coordinate factor sets whose product is the exact preimage."""
    if plan.n * plan.s > PREIMAGE_GUARD_BITS:
        raise ValueError("seed space too large to enumerate")
    cache = ConditionalCache(model) if isinstance(plan, SamplerPlan) else None
    factors = [()] * plan.n
    size = 1
    for v, p in _schedule(plan, model, y, cache):
        cut = math.ceil(p * (1 << plan.s))  # codes below cut threshold to +1
        cut = min(cut, 1 << plan.s)
        if y[v] > 0:
            codes = tuple(range(cut))
        else:
            codes = tuple(range(cut, 1 << plan.s))
        factors[v] = codes
        size *= len(codes)
    return Preimage(factors=tuple(factors), order=tuple(plan.order), size=size)


def _preimage_size_table(plan, model) -> np.ndarray:
    """|preimage(y)| for every y, via the factor cardinalities."""
    from .inference import all_configs

    n = plan.n
    cache = ConditionalCache(model) if isinstance(plan, SamplerPlan) else None
    sizes = np.ones(1 << n)
    x = all_configs(n)
    if isinstance(plan, SamplerPlan):
        for v in plan.order:
            t = plan.cond_sets[v]
            card = np.empty(1 << len(t))
            for m, sigma in enumerate(all_configs(len(t))):
                p_hat = discretized_conditional(
                    cache.prob(v, tuple(zip(t, map(int, sigma)))), plan.s)
                card[m] = p_hat * (1 << plan.s)
            if t:
                sub = np.zeros(1 << n, dtype=np.int64)
                for pos, u in enumerate(t):
                    sub |= ((x[:, u] > 0).astype(np.int64)) << pos
                plus = card[sub]
            else:
                plus = np.full(1 << n, card[0])
            sizes *= np.where(x[:, v] > 0, plus, (1 << plan.s) - plus)
    else:
        for v in plan.order:
            if plan.parent[v] < 0:
                plus = np.full(1 << n, discretized_conditional(
                    plan.root_marginal, plan.s) * (1 << plan.s))
            else:
                pair = plan.p_given_parent[v]
                lookup = np.array([
                    discretized_conditional(pair[0], plan.s) * (1 << plan.s),
                    discretized_conditional(pair[1], plan.s) * (1 << plan.s)])
                plus = lookup[(x[:, plan.parent[v]] > 0).astype(int)]
            sizes *= np.where(x[:, v] > 0, plus, (1 << plan.s) - plus)
    return sizes


def likelihood_ratio_audit(plan, model: IsingModel) -> dict:
    """Pointwise mu(y) / Pr(sampler = y); 0/0 counts as ratio 1."""
    mu = exact_distribution(model).probs
    if isinstance(plan, SamplerPlan):
        law = sampler_output_distribution(plan, model).probs
    else:
        law = tree_output_distribution(plan).probs
    ratios = np.full_like(mu, np.nan)
    both_zero = (mu == 0) & (law == 0)
    ratios[both_zero] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        rest = ~both_zero
        ratios[rest] = np.divide(mu[rest], law[rest])
    worst = int(np.nanargmax(ratios))
    return {"max_ratio": float(np.nanmax(ratios)), "argmax": worst,
            "ratios": ratios}


def pushforward_bound_audit(plan, model: IsingModel) -> dict:
    """Max density of inverted seeds against uniform, over the whole seed space.

    The inverted-seed law at any seed in preimage(y) is mu(y)/|preimage(y)|,
    so the pointwise maximum over seeds equals the maximum over outputs of
    mu(y) * 2^(s n) / |preimage(y)|; the factor cardinalities give the sizes.
    """
    mu = exact_distribution(model).probs
    sizes = _preimage_size_table(plan, model)
    total_bits = plan.n * plan.s
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(mu == 0, 0.0, mu * (2.0 ** total_bits) / sizes)
    worst = int(np.argmax(dens))
    return {"max_density_ratio": float(np.max(dens)), "argmax": worst}


def preimage_uniformity_audit(plan, model: Optional[IsingModel],
                              y: Sequence[int], trials: int,
                              streams: StreamFamily,
                              max_preimage: int = 64) -> dict:
    """TV between the inverter's seed draws and uniform on the preimage."""
    pre = preimage_enumerate(plan, model, y)
    if pre.size > max_preimage:
        raise ValueError(f"preimage size {pre.size} exceeds audit guard")
    index = {}
    for k, seed in enumerate(pre.seeds(plan.s)):
        index[seed.bits.tobytes()] = k
    counts = np.zeros(len(index))
    for t in range(trials):
        res = inv_samp(plan, model, y, streams.child("trial", t))
        if res.seed is None:
            raise AssertionError("inversion failed on a supported output")
        counts[index[res.seed.bits.tobytes()]] += 1
    emp = counts / trials
    tv = 0.5 * float(np.abs(emp - 1.0 / len(index)).sum())
    return {"tv": tv, "preimage_size": len(index), "trials": trials}


def inverter_degree_audit(plan, model: Optional[IsingModel],
                          y: Sequence[int], streams: StreamFamily) -> dict:
    """Check each inverted block reads only its own and its cond-set spins.

    Replays inv_samp with the same pinned stream family while flipping output
    spins outside T_v union {v}; the accepted block for v must not move.
    Returns the distribution of |T_v| as well.
    """
    y = np.asarray(y, dtype=np.int8)
    base = inv_samp(plan, model, y, streams)
    if base.seed is None:
        raise AssertionError("inversion failed on the base output")
    if isinstance(plan, SamplerPlan):
        cond_sets = {v: set(plan.cond_sets[v]) for v in plan.order}
    else:
        cond_sets = {v: ({plan.parent[v]} if plan.parent[v] >= 0 else set())
                     for v in plan.order}
    violations = []
    for v in plan.order:
        allowed = cond_sets[v] | {v}
        for j in range(plan.n):
            if j in allowed:
                continue
            flipped = y.copy()
            flipped[j] = -flipped[j]
            res = inv_samp(plan, model, flipped, streams)
            if res.seed is None:
                continue  # flipped output may be unsupported; nothing to compare
            if not np.array_equal(res.seed.bits[v], base.seed.bits[v]):
                violations.append((v, j))
    sizes = sorted(len(cond_sets[v]) for v in plan.order)
    return {"violations": violations, "cond_set_sizes": sizes}
