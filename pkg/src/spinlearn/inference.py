"""Exact inference at desk scale.

Everything here is an oracle for the samplers and learners: full distribution
tables by enumeration, conditional probabilities (closed form on a pinned
Markov blanket, belief propagation on trees, brute force otherwise), the
spectral gap of the single-site dynamics, and an empirical decay profile of
boundary influence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logsumexp

from .models import IsingModel, dependency_graph

__all__ = [
    "ExactTable",
    "SsmProfile",
    "all_configs",
    "config_index",
    "exact_distribution",
    "conditional_prob",
    "tv_distance",
    "glauber_transition",
    "glauber_gap",
    "estimate_ssm",
]

BRUTE_FORCE_MAX_FREE = 22


def all_configs(n: int) -> np.ndarray:
    """All spin configurations; row m has x_i = +1 iff bit i of m is set."""
    masks = np.arange(1 << n, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(n)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def config_index(x: Sequence[int]) -> int:
    idx = 0
    for i, s in enumerate(x):
        if s > 0:
            idx |= 1 << i
    return idx


@dataclass(frozen=True)
class ExactTable:
    """Probability vector over {-1,+1}^n indexed by config_index."""

    n: int
    probs: np.ndarray
    log_z: float = float("nan")

    def prob(self, x: Sequence[int]) -> float:
        return float(self.probs[config_index(x)])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(len(self.probs), size=size, p=self.probs)
        return all_configs(self.n)[idx]


def _log_weights_batch(model: IsingModel, x: np.ndarray) -> np.ndarray:
    xf = x.astype(float)
    lw = xf @ model.field_vector
    for i, j, w in model.couplings:
        lw += w * xf[:, i] * xf[:, j]
    return lw


def exact_distribution(model: IsingModel, max_n: int = 24) -> ExactTable:
    if model.n > max_n:
        raise ValueError(f"refusing to enumerate 2^{model.n} configurations")
    lw = _log_weights_batch(model, all_configs(model.n))
    log_z = float(logsumexp(lw))
    probs = np.exp(lw - log_z)
    probs /= probs.sum()
    return ExactTable(n=model.n, probs=probs, log_z=log_z)


def tv_distance(p, q) -> float:
    pa = p.probs if isinstance(p, ExactTable) else np.asarray(p, dtype=float)
    qa = q.probs if isinstance(q, ExactTable) else np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(pa - qa).sum())


def conditional_prob(model: IsingModel, v: int, pinning: Mapping[int, int]) -> float:
    """Pr(x_v = +1 | pinned spins). Dispatch: blanket / tree / brute force."""
    if v in pinning:
        raise ValueError(f"variable {v} is pinned")
    graph = model.graph
    nbrs = graph.neighbors[v]
    if all(u in pinning for u in nbrs):
        field = model.field_vector[v]
        for u in nbrs:
            field += model.coupling_matrix[v, u] * pinning[u]
        return float(expit(2.0 * field))
    if graph.is_tree():
        return _tree_conditional(model, v, pinning)
    return _brute_conditional(model, v, pinning)


def _logaddexp2(a: float, b: float) -> float:
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def _tree_conditional(model: IsingModel, v: int, pinning: Mapping[int, int]) -> float:
    """Belief propagation with evidence, rooted at v."""
    graph = model.graph
    a = model.coupling_matrix
    h = model.field_vector
    order = []  # (child, parent) pairs, leaves first
    parent = {v: None}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in graph.neighbors[u]:
            if w not in parent:
                parent[w] = u
                order.append(w)
                stack.append(w)
    # log message from u to parent[u], evaluated at parent spin -1 / +1
    msg = {}
    for u in reversed(order):
        p = parent[u]
        inc0 = inc1 = 0.0
        for w in graph.neighbors[u]:
            if w != p and w in msg:
                inc0 += msg[w][0]
                inc1 += msg[w][1]
        spins = (pinning[u],) if u in pinning else (-1, 1)
        out = []
        for sp_p in (-1, 1):
            terms = [a[u, p] * su * sp_p + h[u] * su
                     + (inc1 if su > 0 else inc0) for su in spins]
            out.append(terms[0] if len(terms) == 1
                       else _logaddexp2(terms[0], terms[1]))
        top = max(out)
        msg[u] = (out[0] - top, out[1] - top)
    inc0 = inc1 = 0.0
    for w in graph.neighbors[v]:
        inc0 += msg[w][0]
        inc1 += msg[w][1]
    log_odds = 2.0 * h[v] + (inc1 - inc0)
    return float(expit(log_odds))


@lru_cache(maxsize=2048)
def _brute_setup(model: IsingModel, v: int, pinned: tuple):
    """Pinned-set-level tables for conditional queries; values enter later.

    Splitting the log weight as (free-free part) + x_f^T C sigma_p +
    x_v (h_v + A_vf x_f + A_vp sigma_p) makes each distinct pinning of the
    same vertex set a single matvec instead of a fresh enumeration.
    """
    pinned_set = set(pinned)
    free = [u for u in range(model.n) if u != v and u not in pinned_set]
    if len(free) > BRUTE_FORCE_MAX_FREE:
        raise ValueError(f"{len(free)} free variables exceeds brute-force limit")
    cfg = all_configs(len(free)).astype(float)
    a = model.coupling_matrix
    h = model.field_vector
    base = cfg @ h[free] if free else np.zeros(1)
    pos = {u: i for i, u in enumerate(free)}
    for i, j, w in model.couplings:
        if i in pos and j in pos:
            base += w * cfg[:, pos[i]] * cfg[:, pos[j]]
    cross = cfg @ a[np.ix_(free, pinned)] if free and pinned else np.zeros(
        (len(cfg), len(pinned)))
    av = h[v] + (cfg @ a[v, free] if free else 0.0)
    return base, cross, np.asarray(av) + np.zeros(len(cfg)), a[v, list(pinned)]


def _brute_conditional(model: IsingModel, v: int, pinning: Mapping[int, int]) -> float:
    pinned = tuple(sorted(pinning))
    base, cross, av, apin = _brute_setup(model, v, pinned)
    sigma = np.array([pinning[u] for u in pinned], dtype=float)
    shared = base + (cross @ sigma if len(pinned) else 0.0)
    tilt = av + float(apin @ sigma)
    lp = shared + tilt
    lm = shared - tilt
    top = max(lp.max(), lm.max())
    log_plus = top + math.log(np.exp(lp - top).sum())
    log_minus = top + math.log(np.exp(lm - top).sum())
    return float(expit(log_plus - log_minus))


def glauber_transition(model: IsingModel, max_n: int = 14) -> tuple:
    """Sparse single-site kernel and its stationary law; returns (P, pi)."""
    if model.n > max_n:
        raise ValueError(f"refusing 2^{model.n} x 2^{model.n} kernel")
    n = model.n
    table = exact_distribution(model)
    x = all_configs(n).astype(float)
    field = x @ model.coupling_matrix + model.field_vector
    p_plus = expit(2.0 * field)  # resampled value of coordinate i, any source
    masks = np.arange(1 << n, dtype=np.int64)
    rows, cols, vals = [], [], []
    for i in range(n):
        bit = np.int64(1 << i)
        rows.append(masks)
        cols.append(masks | bit)
        vals.append(p_plus[:, i] / n)
        rows.append(masks)
        cols.append(masks & ~bit)
        vals.append((1.0 - p_plus[:, i]) / n)
    kernel = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(1 << n, 1 << n),
    ).tocsr()
    return kernel, table.probs


def glauber_gap(model: IsingModel, tol: float = 1e-10, max_iter: int = 200_000) -> tuple:
    """Spectral gap of the single-site kernel and the induced Poincare constant.

    The kernel is an average of projections, hence PSD, so deflated power
    iteration on the pi-symmetrized matrix converges to the second-largest
    eigenvalue. Returns (gap, poincare) with poincare = 1 / (n * gap).
    """
    kernel, pi = glauber_transition(model)
    sqrt_pi = np.sqrt(pi)
    d = sp.diags(sqrt_pi) @ kernel @ sp.diags(1.0 / sqrt_pi)
    d = (d + d.T) * 0.5
    top = sqrt_pi / np.linalg.norm(sqrt_pi)
    rng = np.random.Generator(np.random.Philox(key=2_0240_131))
    v = rng.normal(size=kernel.shape[0])
    v -= (top @ v) * top
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = d @ v
        w -= (top @ w) * top
        lam = float(v @ w)
        resid = float(np.linalg.norm(w - lam * v))
        norm = float(np.linalg.norm(w))
        if norm == 0.0:  # second eigenvalue exactly zero
            lam = 0.0
            break
        v = w / norm
        if resid <= tol:
            break
    else:
        raise RuntimeError("power iteration did not converge")
    gap = 1.0 - lam
    return gap, 1.0 / (model.n * gap)


@dataclass(frozen=True)
class SsmProfile:
    """Boundary-influence decay: worst-case conditional swing per radius."""

    v: int
    radii: tuple
    discrepancies: tuple
    c_ssm: float
    delta: object  # float, or None when the fit is degenerate

    def rows(self):
        return list(zip(self.radii, self.discrepancies))


def estimate_ssm(model: IsingModel, v: int, radii: Sequence[int],
                 max_boundary: int = 16) -> SsmProfile:
    """Scan pinning pairs on spheres around v and fit an exponential decay.

    Radius r uses the sphere at graph distance r + 1, so the pinnings agree on
    B_r(v) and disagree beyond it. For the binary spin at v the worst TV over
    pinning pairs is max-minus-min of the conditional over all pinnings.
    """
    graph = model.graph
    dist = graph.distances_from(v)
    discrepancies = []
    for r in radii:
        sphere = [u for u in range(model.n) if dist[u] == r + 1]
        if not sphere:
            discrepancies.append(0.0)
            continue
        if len(sphere) > max_boundary:
            raise ValueError(f"boundary of size {len(sphere)} too large to scan")
        lo, hi = 1.0, 0.0
        for sigma in all_configs(len(sphere)):
            p = conditional_prob(model, v, dict(zip(sphere, map(int, sigma))))
            lo, hi = min(lo, p), max(hi, p)
        discrepancies.append(max(0.0, hi - lo))
    pts = [(r + 1, d) for r, d in zip(radii, discrepancies) if d > 1e-14]
    c_ssm, delta = max(1.0, max(discrepancies, default=0.0)), None
    if len(pts) >= 2:
        ds = np.array([p[0] for p in pts], dtype=float)
        logs = np.log([p[1] for p in pts])
        slope, intercept = np.polyfit(ds, logs, 1)
        if slope < 0:
            delta = min(1.0 - math.exp(slope), 0.99)
            c_ssm = float(math.exp(intercept))
    return SsmProfile(v=v, radii=tuple(radii), discrepancies=tuple(discrepancies),
                      c_ssm=c_ssm, delta=delta)
