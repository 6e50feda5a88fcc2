"""Boolean concept classes over {-1,+1}^n.

Circuits (unbounded fan-in AND/OR/NOT over literals), monotone DNFs,
halfspaces with weights kept in decreasing magnitude order, and raw truth
tables. All evaluate to +-1; sign(0) is +1 throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .inference import all_configs

__all__ = [
    "Circuit",
    "MonotoneDNF",
    "Halfspace",
    "TableConcept",
    "majority",
    "concept_to_dict",
    "concept_from_dict",
    "save_concept",
    "load_concept",
    "regularity_and_critical_index",
]


class _ConceptBase:
    def eval(self, x) -> int:
        return int(self.eval_batch(np.asarray(x, dtype=np.int8)[None, :])[0])

    def truth_table(self, max_n: int = 20) -> np.ndarray:
        if self.n > max_n:
            raise ValueError(f"refusing truth table over 2^{self.n} inputs")
        return self.eval_batch(all_configs(self.n))


@dataclass(frozen=True)
class Circuit(_ConceptBase):
    """Gate list in topological order; gate = ("input", i) | ("not", g)
    | ("and", (g, ...)) | ("or", (g, ...)). Output is gates[output]."""

    n: int
    gates: tuple
    output: int

    def __post_init__(self):
        for k, gate in enumerate(self.gates):
            kind, arg = gate
            if kind == "input":
                if not 0 <= arg < self.n:
                    raise ValueError(f"gate {k}: input index {arg} out of range")
            elif kind == "not":
                if not 0 <= arg < k:
                    raise ValueError(f"gate {k}: argument must precede the gate")
            elif kind in ("and", "or"):
                if not arg or any(not 0 <= g < k for g in arg):
                    raise ValueError(f"gate {k}: bad fan-in {arg}")
            else:
                raise ValueError(f"gate {k}: unknown kind {kind!r}")

    def eval_batch(self, x: np.ndarray) -> np.ndarray:
        vals = []
        for kind, arg in self.gates:
            if kind == "input":
                vals.append(x[:, arg] > 0)
            elif kind == "not":
                vals.append(~vals[arg])
            elif kind == "and":
                acc = vals[arg[0]].copy()
                for g in arg[1:]:
                    acc &= vals[g]
                vals.append(acc)
            else:
                acc = vals[arg[0]].copy()
                for g in arg[1:]:
                    acc |= vals[g]
                vals.append(acc)
        return np.where(vals[self.output], 1, -1).astype(np.int8)

    @cached_property
    def depth(self) -> int:
        """Levels of AND/OR nesting; NOT gates are free."""
        d = []
        for kind, arg in self.gates:
            if kind == "input":
                d.append(0)
            elif kind == "not":
                d.append(d[arg])
            else:
                d.append(1 + max(d[g] for g in arg))
        return d[self.output]

    @cached_property
    def size(self) -> int:
        return sum(1 for kind, _ in self.gates if kind != "input")


@dataclass(frozen=True)
class MonotoneDNF(_ConceptBase):
    """Disjunction of positive terms; a term is a tuple of variable indices."""

    n: int
    terms: tuple

    def __post_init__(self):
        for t in self.terms:
            if any(not 0 <= i < self.n for i in t):
                raise ValueError(f"term {t} out of range")

    def eval_batch(self, x: np.ndarray) -> np.ndarray:
        hit = np.zeros(x.shape[0], dtype=bool)
        for t in self.terms:
            if len(t) == 0:
                hit[:] = True
                break
            hit |= np.all(x[:, list(t)] > 0, axis=1)
        return np.where(hit, 1, -1).astype(np.int8)

    def as_circuit(self) -> Circuit:
        gates = [("input", i) for i in range(self.n)]
        term_ids = []
        for t in self.terms:
            gates.append(("and", tuple(t)))
            term_ids.append(len(gates) - 1)
        if not term_ids:  # constant -1: OR of an empty set has no gate form
            gates.append(("and", (0,)))
            gates.append(("not", len(gates) - 1))
            gates.append(("and", (len(gates) - 2, len(gates) - 1)))
            return Circuit(n=self.n, gates=tuple(gates), output=len(gates) - 1)
        gates.append(("or", tuple(term_ids)))
        return Circuit(n=self.n, gates=tuple(gates), output=len(gates) - 1)


@dataclass(frozen=True)
class Halfspace(_ConceptBase):
    """sign(w . x - theta) with sign(0) = +1.

    weights are stored sorted by decreasing magnitude; perm[k] is the original
    coordinate the k-th stored weight belongs to.
    """

    n: int
    weights: tuple
    perm: tuple
    theta: float

    @classmethod
    def from_raw(cls, w: Sequence[float], theta: float = 0.0,
                 normalize: bool = True) -> "Halfspace":
        w = np.asarray(w, dtype=float)
        norm = float(np.linalg.norm(w))
        if normalize and norm > 0:
            w = w / norm
            theta = theta / norm
        order = np.argsort(-np.abs(w), kind="stable")
        return cls(n=len(w), weights=tuple(float(x) for x in w[order]),
                   perm=tuple(int(i) for i in order), theta=float(theta))

    @cached_property
    def raw_weights(self) -> np.ndarray:
        w = np.zeros(self.n)
        for k, i in enumerate(self.perm):
            w[i] = self.weights[k]
        w.setflags(write=False)
        return w

    def eval_batch(self, x: np.ndarray) -> np.ndarray:
        margin = x.astype(float) @ self.raw_weights - self.theta
        return np.where(margin >= 0, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class TableConcept(_ConceptBase):
    n: int
    table: tuple  # +-1 per config index

    def __post_init__(self):
        if len(self.table) != 1 << self.n:
            raise ValueError("table length must be 2^n")

    def eval_batch(self, x: np.ndarray) -> np.ndarray:
        idx = ((x > 0).astype(np.int64) << np.arange(x.shape[1])).sum(axis=1)
        return np.asarray(self.table, dtype=np.int8)[idx]


def majority(n: int) -> Halfspace:
    """Strict-tie-to-plus majority as a uniform-weight halfspace."""
    return Halfspace.from_raw(np.ones(n), theta=0.0)


def regularity_and_critical_index(w: Sequence[float], eps: float) -> tuple:
    """(is_regular, H): H is the first 1-based index whose weight suffix,
    renormalized, has sup-norm at most eps; an all-zero (or empty) suffix is
    regular by convention."""
    w = np.abs(np.asarray(w, dtype=float))
    w = np.sort(w)[::-1]
    n = len(w)
    h = n + 1
    for i in range(n):
        tail = w[i:]
        norm = float(np.linalg.norm(tail))
        if norm == 0.0 or float(tail.max()) <= eps * norm:
            h = i + 1
            break
    return h == 1, h


def concept_to_dict(c) -> dict:
    if isinstance(c, Circuit):
        return {"type": "circuit", "n": c.n, "output": c.output,
                "gates": [[kind, list(arg) if isinstance(arg, tuple) else arg]
                          for kind, arg in c.gates]}
    if isinstance(c, MonotoneDNF):
        return {"type": "monotone_dnf", "n": c.n,
                "terms": [list(t) for t in c.terms]}
    if isinstance(c, Halfspace):
        return {"type": "halfspace", "n": c.n, "weights": list(c.weights),
                "perm": list(c.perm), "theta": c.theta}
    if isinstance(c, TableConcept):
        bits = "".join("1" if v > 0 else "0" for v in c.table)
        return {"type": "table", "n": c.n,
                "hex": f"{int(bits[::-1], 2):x}" if "1" in bits else "0"}
    raise TypeError(f"not a concept: {type(c)!r}")


def concept_from_dict(obj: dict):
    kind = obj["type"]
    if kind == "circuit":
        gates = tuple((k, tuple(a) if isinstance(a, list) else a)
                      for k, a in obj["gates"])
        return Circuit(n=obj["n"], gates=gates, output=obj["output"])
    if kind == "monotone_dnf":
        return MonotoneDNF(n=obj["n"], terms=tuple(tuple(t) for t in obj["terms"]))
    if kind == "halfspace":
        return Halfspace(n=obj["n"], weights=tuple(obj["weights"]),
                         perm=tuple(obj["perm"]), theta=obj["theta"])
    if kind == "table":
        size = 1 << obj["n"]
        val = int(obj["hex"], 16)
        table = tuple(1 if (val >> k) & 1 else -1 for k in range(size))
        return TableConcept(n=obj["n"], table=table)
    raise ValueError(f"unknown concept type {kind!r}")


def save_concept(c, path) -> None:
    with open(path, "w") as fh:
        json.dump(concept_to_dict(c), fh, indent=1)
        fh.write("\n")


def load_concept(path):
    with open(path) as fh:
        return concept_from_dict(json.load(fh))
