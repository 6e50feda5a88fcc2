"""Spin-system models over {-1,+1}^n and their dependency graphs.

A model assigns every configuration x the unnormalized log weight
sum_{i<j} A_ij x_i x_j + sum_i h_i x_i; the dependency graph has an edge
wherever a coupling is nonzero. Everything downstream (conditionals, sampler
plans, partition schedules) is phrased in terms of this graph.
"""

from __future__ import annotations

import json
import hashlib
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "IsingModel",
    "DependencyGraph",
    "ModelDiagnostics",
    "log_weight",
    "validate_model",
    "dependency_graph",
    "ball",
    "graph_distance",
    "diagnostics",
    "greedy_r_partition",
    "load_model",
    "save_model",
    "model_from_dict",
    "model_to_dict",
    "model_hash",
]


@dataclass(frozen=True)
class IsingModel:
    """Pairwise model: couplings is a tuple of (i, j, weight) with i < j."""

    n: int
    couplings: tuple
    fields: tuple
    kind: str = "ising"

    def __post_init__(self):
        bad = validate_model(self)
        if bad:
            raise ValueError("; ".join(bad))

    @cached_property
    def coupling_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j, w in self.couplings:
            a[i, j] = a[j, i] = w
        a.setflags(write=False)
        return a

    @cached_property
    def field_vector(self) -> np.ndarray:
        h = np.asarray(self.fields, dtype=float)
        h.setflags(write=False)
        return h

    @cached_property
    def graph(self) -> "DependencyGraph":
        return dependency_graph(self)


class DependencyGraph:
    """Adjacency structure of the nonzero couplings."""

    def __init__(self, n: int, edges: Iterable[tuple]):
        self.n = n
        nbrs = [[] for _ in range(n)]
        self.edges = tuple(sorted({(min(i, j), max(i, j)) for i, j in edges}))
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        self.neighbors = tuple(tuple(sorted(b)) for b in nbrs)

    def distances_from(self, v: int) -> np.ndarray:
        """BFS distances; unreachable vertices get -1."""
        dist = np.full(self.n, -1, dtype=int)
        dist[v] = 0
        q = deque([v])
        while q:
            u = q.popleft()
            for w in self.neighbors[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return dist

    def ball(self, v: int, r: int) -> tuple:
        dist = self.distances_from(v)
        return tuple(int(u) for u in range(self.n) if 0 <= dist[u] <= r)

    def max_degree(self) -> int:
        return max((len(b) for b in self.neighbors), default=0)

    def is_tree(self) -> bool:
        if len(self.edges) != self.n - 1:
            return False
        return bool(np.all(self.distances_from(0) >= 0)) if self.n > 0 else True

    def is_connected(self) -> bool:
        return self.n == 0 or bool(np.all(self.distances_from(0) >= 0))


@dataclass(frozen=True)
class ModelDiagnostics:
    width: float
    eta: float
    max_degree: int
    growth_profile: tuple  # max ball size at radius 0, 1, ... until saturation


def log_weight(model: IsingModel, x: Sequence[int]) -> float:
    x = np.asarray(x, dtype=float)
    total = float(model.field_vector @ x)
    for i, j, w in model.couplings:
        total += w * x[i] * x[j]
    return total


def validate_model(model: IsingModel) -> list:
    """Structured violations; an empty list means the model is well formed."""
    bad = []
    if model.n < 1:
        bad.append(f"nonpositive size {model.n}")
    if len(model.fields) != model.n:
        bad.append(f"field length {len(model.fields)} != n {model.n}")
    for h in model.fields:
        if not math.isfinite(h):
            bad.append(f"non-finite field {h}")
    seen = set()
    for i, j, w in model.couplings:
        if i == j:
            bad.append(f"self-loop at {i}")
            continue
        if not (0 <= i < model.n and 0 <= j < model.n):
            bad.append(f"index out of range ({i}, {j})")
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            bad.append(f"duplicate edge {key}")
        seen.add(key)
        if not math.isfinite(w):
            bad.append(f"non-finite weight at ({i}, {j})")
    if model.kind not in ("ising", "tree"):
        bad.append(f"unknown kind {model.kind!r}")
    elif model.kind == "tree" and not bad:
        if not dependency_graph(model).is_tree():
            bad.append("kind is tree but dependency graph is not a tree")
    return bad


def dependency_graph(model: IsingModel) -> DependencyGraph:
    return DependencyGraph(model.n, [(i, j) for i, j, w in model.couplings if w != 0.0])


def ball(graph: DependencyGraph, v: int, r: int) -> tuple:
    return graph.ball(v, r)


def graph_distance(graph: DependencyGraph, u: int, v: int) -> int:
    return int(graph.distances_from(u)[v])


def diagnostics(model: IsingModel) -> ModelDiagnostics:
    a = np.abs(model.coupling_matrix)
    width = float(np.max(a.sum(axis=1) + np.abs(model.field_vector))) if model.n else 0.0
    eta = min(math.exp(-2.0 * width), 0.5)
    g = model.graph
    profile = []
    r = 0
    while True:
        size = max(len(g.ball(v, r)) for v in range(model.n))
        profile.append(size)
        if len(profile) >= 2 and profile[-1] == profile[-2]:
            break
        r += 1
    return ModelDiagnostics(width=width, eta=eta, max_degree=g.max_degree(),
                            growth_profile=tuple(profile))


def greedy_r_partition(graph: DependencyGraph, r: int) -> tuple:
    """Split vertices into parts with pairwise graph distance > r.

    Greedy coloring over ascending vertex index: each vertex takes the lowest
    color not used by any earlier vertex within distance r. The number of
    parts is at most max_v |B_r(v)| + 1.
    """
    color = [-1] * graph.n
    for v in range(graph.n):
        near = set(graph.ball(v, r))
        taken = {color[u] for u in near if u < v}
        c = 0
        while c in taken:
            c += 1
        color[v] = c
    k = max(color) + 1 if graph.n else 0
    parts = [[] for _ in range(k)]
    for v, c in enumerate(color):
        parts[c].append(v)
    return tuple(tuple(p) for p in parts)


def model_to_dict(model: IsingModel) -> dict:
    return {
        "n": model.n,
        "couplings": [[int(i), int(j), float(w)] for i, j, w in model.couplings],
        "fields": [float(h) for h in model.fields],
        "kind": model.kind,
    }


def model_from_dict(obj: dict) -> IsingModel:
    couplings = tuple(
        (min(int(i), int(j)), max(int(i), int(j)), float(w))
        for i, j, w in obj["couplings"]
    )
    model = IsingModel(
        n=int(obj["n"]),
        couplings=couplings,
        fields=tuple(float(h) for h in obj["fields"]),
        kind=obj.get("kind", "ising"),
    )
    bad = validate_model(model)
    if bad:
        raise ValueError("invalid model: " + "; ".join(bad))
    return model


def save_model(model: IsingModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> IsingModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def model_hash(model: IsingModel) -> str:
    blob = json.dumps(model_to_dict(model), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
