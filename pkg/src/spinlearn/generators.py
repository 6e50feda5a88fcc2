"""Deterministic model and concept generators for experiments and fixtures."""

from __future__ import annotations

import numpy as np

from .concepts import Halfspace, MonotoneDNF, TableConcept
from .influence import CliqueLaw, clique_majority_fixture
from .models import IsingModel, validate_model
from .rng import StreamFamily

__all__ = [
    "grid2d_model",
    "path_model",
    "random_tree_model",
    "random_bounded_degree_model",
    "generate_model",
    "random_monotone_dnf",
    "random_halfspace",
    "random_table_concept",
]


def _build(n, couplings, fields=None, kind="ising") -> IsingModel:
    model = IsingModel(
        n=n,
        couplings=tuple(sorted((min(i, j), max(i, j), float(w)) for i, j, w in couplings)),
        fields=tuple(float(h) for h in (fields if fields is not None else np.zeros(n))),
        kind=kind,
    )
    bad = validate_model(model)
    if bad:
        raise AssertionError("generator produced invalid model: " + "; ".join(bad))
    return model


def grid2d_model(rows: int, cols: int, beta: float, field: float = 0.0) -> IsingModel:
    n = rows * cols
    couplings = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                couplings.append((v, v + 1, beta))
            if r + 1 < rows:
                couplings.append((v, v + cols, beta))
    return _build(n, couplings, np.full(n, field))


def path_model(n: int, beta: float, field: float = 0.0) -> IsingModel:
    couplings = [(i, i + 1, beta) for i in range(n - 1)]
    return _build(n, couplings, np.full(n, field), kind="tree")


def random_tree_model(n: int, beta: float, streams: StreamFamily,
                      field: float = 0.0) -> IsingModel:
    """Random attachment: node i joins a uniformly chosen earlier node."""
    rng = streams.generator()
    couplings = [(int(rng.integers(0, i)), i, beta) for i in range(1, n)]
    return _build(n, couplings, np.full(n, field), kind="tree")


def random_bounded_degree_model(n: int, max_degree: int, beta: float,
                                streams: StreamFamily, fill: float = 0.6,
                                field: float = 0.0) -> IsingModel:
    """Greedy random graph respecting a degree cap; ferromagnetic weights."""
    rng = streams.generator()
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    rng.shuffle(pairs)
    deg = np.zeros(n, dtype=int)
    couplings = []
    for i, j in pairs:
        if deg[i] < max_degree and deg[j] < max_degree and rng.random() < fill:
            couplings.append((i, j, beta))
            deg[i] += 1
            deg[j] += 1
    return _build(n, couplings, np.full(n, field))


def generate_model(kind: str, params: dict, streams: StreamFamily):
    """Dispatch for the CLI generator; clique_hardcore yields the product law."""
    if kind == "grid2d":
        return grid2d_model(params["rows"], params["cols"], params["beta"],
                            params.get("field", 0.0))
    if kind == "path":
        return path_model(params["n"], params["beta"], params.get("field", 0.0))
    if kind == "random_tree":
        return random_tree_model(params["n"], params["beta"],
                                 streams.child("tree"), params.get("field", 0.0))
    if kind == "random_bounded_degree":
        return random_bounded_degree_model(
            params["n"], params["max_degree"], params["beta"],
            streams.child("graph"), params.get("fill", 0.6),
            params.get("field", 0.0))
    if kind == "clique_hardcore":
        return clique_majority_fixture(params["num_cliques"], params["clique_size"])
    raise ValueError(f"unknown model kind {kind!r}")


def random_monotone_dnf(streams: StreamFamily, n: int, num_terms: int,
                        width: int) -> MonotoneDNF:
    rng = streams.generator()
    terms = []
    for _ in range(num_terms):
        size = int(rng.integers(1, width + 1))
        terms.append(tuple(sorted(map(int, rng.choice(n, size=min(size, n),
                                                      replace=False)))))
    return MonotoneDNF(n=n, terms=tuple(terms))


def random_halfspace(streams: StreamFamily, n: int) -> Halfspace:
    rng = streams.generator()
    return Halfspace.from_raw(rng.normal(size=n), theta=float(rng.normal() * 0.2))


def random_table_concept(streams: StreamFamily, n: int) -> TableConcept:
    rng = streams.generator()
    table = tuple(int(v) for v in 2 * rng.integers(0, 2, size=1 << n) - 1)
    return TableConcept(n=n, table=table)
