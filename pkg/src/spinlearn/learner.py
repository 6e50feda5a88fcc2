"""Low-degree polynomial regression against sampled spin data.

Hypotheses are multilinear polynomials over monomials of degree at most k.
The square-loss fit solves ridge-stabilized normal equations; the
absolute-loss fit runs iteratively reweighted least squares down a Huber
smoothing schedule and must pass a subgradient stationarity audit. Population
versions weight every configuration by its exact probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .concepts import _ConceptBase
from .inference import all_configs, exact_distribution
from .models import IsingModel
from .rng import StreamFamily
from .samplers import Seed, SamplerPlan, ConditionalCache, exact_sample_batch, ssm_samp

__all__ = [
    "LearnedPredictor",
    "monomials_up_to",
    "feature_matrix",
    "fit_l2",
    "fit_l1",
    "kkt_report",
    "best_weighted_error",
    "degree_budget",
    "learn_and_test",
]

BASIS_CAP = 5 * 10**6
RIDGE = 1e-10
HUBER_SCHEDULE = tuple(10.0 ** -e for e in range(1, 9))


def monomials_up_to(n: int, k: int) -> tuple:
    k = min(k, n)
    count = sum(math.comb(n, j) for j in range(k + 1))
    if count > BASIS_CAP:
        raise ValueError(f"basis of {count} monomials exceeds cap")
    basis = []
    for j in range(k + 1):
        basis.extend(combinations(range(n), j))
    return tuple(basis)


def feature_matrix(x: np.ndarray, basis) -> np.ndarray:
    phi = np.ones((x.shape[0], len(basis)))
    xf = x.astype(float)
    for col, subset in enumerate(basis):
        for i in subset:
            phi[:, col] *= xf[:, i]
    return phi


@dataclass(frozen=True)
class LearnedPredictor:
    basis: tuple
    coeffs: np.ndarray
    threshold: float = 0.0

    def value(self, x: np.ndarray) -> np.ndarray:
        return feature_matrix(np.atleast_2d(x), self.basis) @ self.coeffs

    def classify(self, x: np.ndarray) -> np.ndarray:
        return np.where(self.value(x) - self.threshold >= 0, 1, -1).astype(np.int8)

    def to_dict(self) -> dict:
        return {"basis": [list(b) for b in self.basis],
                "coeffs": [float(c) for c in self.coeffs],
                "threshold": float(self.threshold)}


def _normalize_weights(n_rows: int, weights) -> np.ndarray:
    if weights is None:
        return np.full(n_rows, 1.0 / n_rows)
    w = np.asarray(weights, dtype=float)
    return w / w.sum()


def fit_l2(phi: np.ndarray, y: np.ndarray, weights=None) -> np.ndarray:
    w = _normalize_weights(phi.shape[0], weights)
    gram = phi.T @ (phi * w[:, None]) + RIDGE * np.eye(phi.shape[1])
    rhs = phi.T @ (w * y)
    return np.linalg.solve(gram, rhs)


def fit_l1(phi: np.ndarray, y: np.ndarray, weights=None,
           schedule=HUBER_SCHEDULE, max_inner: int = 60,
           tol: float = 1e-10, kkt_tol: float = 1e-6) -> tuple:
    """IRLS over a shrinking Huber floor; returns (coeffs, diagnostics)."""
    w = _normalize_weights(phi.shape[0], weights)
    coeffs = fit_l2(phi, y, weights=w)
    objective = float(w @ np.abs(y - phi @ coeffs))
    for delta in schedule:
        for _ in range(max_inner):
            resid = y - phi @ coeffs
            omega = w / np.maximum(np.abs(resid), delta)
            gram = phi.T @ (phi * omega[:, None]) + RIDGE * np.eye(phi.shape[1])
            coeffs = np.linalg.solve(gram, phi.T @ (omega * y))
            new_obj = float(w @ np.abs(y - phi @ coeffs))
            if objective - new_obj < tol:
                objective = min(objective, new_obj)
                break
            objective = new_obj
    diag = kkt_report(phi, y, coeffs, w, schedule[-1], tol=kkt_tol)
    diag["objective"] = objective
    return coeffs, diag


def kkt_report(phi: np.ndarray, y: np.ndarray, coeffs: np.ndarray,
               weights: np.ndarray, delta: float, tol: float = 1e-6) -> dict:
    """Subgradient stationarity certificate for the weighted absolute loss.

    Rows with |residual| <= delta are ties; a tie row's loss term contributes
    any subgradient in [-w_i |phi_ij|, w_i |phi_ij|] to coordinate j, so the
    point is stationary once the tie columns can absorb the sign gradient of
    the remaining rows. kkt_gap is the worst uncovered coordinate; at an exact
    IRLS fixed point it is nonpositive, because the small-residual rows carry
    weight w_i resid_i / delta with |resid_i / delta| <= 1 there.
    """
    resid = y - phi @ coeffs
    small = np.abs(resid) <= delta
    active_grad = phi.T @ (weights * np.where(small, 0.0, np.sign(resid)))
    tie_cover = np.abs(phi.T) @ (weights * small)
    kkt_gap = float(np.max(np.abs(active_grad) - tie_cover))
    return {"kkt_gap": kkt_gap, "kkt_tol": tol, "kkt_ok": kkt_gap <= tol,
            "small_residual_weight": float(weights[small].sum()),
            "delta": delta}


def best_weighted_error(model: IsingModel, concept: _ConceptBase, k: int,
                        norm: str = "l2", max_n: int = 16) -> float:
    """Population optimum of degree-k regression under the exact law."""
    if model.n > max_n:
        raise ValueError(f"refusing population fit at n = {model.n}")
    table = exact_distribution(model)
    x = all_configs(model.n)
    f = concept.eval_batch(x).astype(float)
    basis = monomials_up_to(model.n, k)
    phi = feature_matrix(x, basis)
    if norm == "l2":
        coeffs = fit_l2(phi, f, weights=table.probs)
        resid = f - phi @ coeffs
        return float(table.probs @ resid**2)
    if norm == "l1":
        coeffs, diag = fit_l1(phi, f, weights=table.probs)
        if not diag["kkt_ok"]:
            raise AssertionError("population L1 fit failed its KKT audit")
        return float(table.probs @ np.abs(f - phi @ coeffs))
    raise ValueError(f"unknown norm {norm!r}")


def degree_budget(kind: str, **p) -> int:
    """Sufficient polynomial degree per regime, all hidden constants set to 1."""
    if kind == "circuits_ssm":
        base = p["c_gr"] ** p["growth_deg"] * (
            math.log(p["c_ssm"] * p["n"] / p["eta"]) / p["delta"]
        ) ** ((p["growth_deg"] + 1) ** 2)
        return math.ceil(base ** (p["d"] + 2) * math.log(2.0 / p["eps"]))
    if kind == "circuits_tree":
        base = math.log(p["n"] / p["eps"]) ** 2 / p["eta"]
        return math.ceil(base ** (p["d"] + 1) * math.log(8.0 / p["eps"]))
    if kind == "low_influence":
        if p["influence"] == 0:
            return 0
        lead = p["c_gr"] ** (p["growth_deg"] + 1) * (
            math.log(p["c_ssm"] * p["n"] / p["eta"]) / p["delta"]
        ) ** ((p["growth_deg"] + 2) ** 2)
        return math.ceil(lead * p["c_pi"] * p["influence"] / p["eps"])
    if kind == "halfspace_dobrushin":
        return math.ceil(p.get("c_zeta", 1.0) * math.log(1.0 / p["eps"]) ** 2
                         / p["eps"] ** 2)
    raise ValueError(f"unknown budget kind {kind!r}")


def _draw_samples(model, size, streams, source, plan):
    if source == "exact":
        return exact_sample_batch(model, size, streams.generator())
    if source == "ssm":
        if plan is None:
            raise ValueError("ssm source needs a plan")
        cache = ConditionalCache(model)
        rng = streams.generator()
        rows = np.empty((size, model.n), dtype=np.int8)
        for t in range(size):
            y, _ = ssm_samp(plan, model, Seed.from_rng(rng, plan.n, plan.s), cache)
            rows[t] = y
        return rows
    raise ValueError(f"unknown source {source!r}")


def _best_threshold(values: np.ndarray, labels: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    vals, labs = values[order], labels[order]
    cuts = [vals[0] - 1.0]
    cuts.extend((vals[i] + vals[i + 1]) / 2.0 for i in range(len(vals) - 1))
    cuts.append(vals[-1] + 1.0)
    best_cut, best_err = cuts[0], float("inf")
    for cut in cuts:
        pred = np.where(vals - cut >= 0, 1, -1)
        err = float(np.mean(pred != labs))
        if err < best_err - 1e-12:
            best_err, best_cut = err, cut
    return best_cut


def learn_and_test(model: IsingModel, concept: _ConceptBase, k: int,
                   n_train: int, n_test: int, streams: StreamFamily,
                   norm: str = "l2", source: str = "exact",
                   plan: SamplerPlan = None, label_flip: float = 0.0) -> dict:
    """Fit on fresh draws, pick the threshold, report misclassification."""
    x_train = _draw_samples(model, n_train, streams.child("train"), source, plan)
    x_test = _draw_samples(model, n_test, streams.child("test"), source, plan)
    y_train = concept.eval_batch(x_train).astype(float)
    y_test = concept.eval_batch(x_test).astype(float)
    if label_flip > 0:
        gen = streams.child("noise").generator()
        y_train = y_train * np.where(gen.random(n_train) < label_flip, -1, 1)
        y_test = y_test * np.where(gen.random(n_test) < label_flip, -1, 1)
    basis = monomials_up_to(model.n, k)
    diag = {}
    if norm == "l2":
        phi = feature_matrix(x_train, basis)
        coeffs = fit_l2(phi, y_train)
        predictor = LearnedPredictor(basis=basis, coeffs=coeffs, threshold=0.0)
    elif norm == "l1":
        cut_at = max(1, n_train // 5)
        fit_x, hold_x = x_train[cut_at:], x_train[:cut_at]
        fit_y, hold_y = y_train[cut_at:], y_train[:cut_at]
        coeffs, diag = fit_l1(feature_matrix(fit_x, basis), fit_y)
        hold_vals = feature_matrix(hold_x, basis) @ coeffs
        threshold = _best_threshold(hold_vals, hold_y)
        predictor = LearnedPredictor(basis=basis, coeffs=coeffs, threshold=threshold)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    train_err = float(np.mean(predictor.classify(x_train) != y_train))
    test_err = float(np.mean(predictor.classify(x_test) != y_test))
    out = {"k": k, "train_error": train_err, "test_error": test_err,
           "threshold": predictor.threshold, "predictor": predictor}
    out.update(diag)
    return out
