"""Experiment drivers, the fixture registry, and canonical report emission.

Every experiment turns a JSON-able config plus a master seed into a list of
flat records, a set of pass/fail invariants, and optionally figure specs. The
CSV layout is canonical and fully deterministic for a fixed config: columns
are experiment, model_hash, the sorted union of parameter names, metric,
value, stderr, seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .analytics import anticoncentration_profile, dobrushin_check, subgaussian_tail_audit
from .concepts import concept_from_dict, load_concept, MonotoneDNF
from .generators import (
    generate_model,
    grid2d_model,
    path_model,
    random_halfspace,
    random_monotone_dnf,
    random_table_concept,
    random_tree_model,
)
from .inference import estimate_ssm, exact_distribution, glauber_gap, tv_distance
from .influence import (
    CliqueLaw,
    clique_majority_influence,
    influence_transfer_rhs,
    monotone_influence_bound,
    mu_influence,
    uniform_influence_of_composition,
)
from .inverter import (
    inv_samp,
    likelihood_ratio_audit,
    preimage_enumerate,
    preimage_uniformity_audit,
    pushforward_bound_audit,
)
from .learner import best_weighted_error, degree_budget, learn_and_test
from .models import (
    IsingModel,
    diagnostics,
    model_from_dict,
    model_hash,
    model_to_dict,
    load_model,
    save_model,
)
from .rng import StreamFamily, streams
from .samplers import (
    ConditionalCache,
    Seed,
    build_ssm_plan,
    sampler_output_distribution,
    seed_bit_chi,
    ssm_samp,
)

__all__ = [
    "FIXTURES",
    "fixture_model",
    "fit_plan",
    "ExperimentResult",
    "run_experiment",
    "emit_report",
    "config_hash",
]


# Named fixtures shared by the acceptance suite and the CLI configs.
FIXTURES = {
    "single_edge": {"kind": "grid2d", "rows": 1, "cols": 2, "beta": 0.5},
    "path3_tilted": {"kind": "path", "n": 3, "beta": 0.37, "field": 0.12},
    "path5": {"kind": "path", "n": 5, "beta": 0.3},
    "grid2x2": {"kind": "grid2d", "rows": 2, "cols": 2, "beta": 0.25},
    "grid2x3": {"kind": "grid2d", "rows": 2, "cols": 3, "beta": 0.2},
    "grid3x3": {"kind": "grid2d", "rows": 3, "cols": 3, "beta": 0.2},
    "grid2x4": {"kind": "grid2d", "rows": 2, "cols": 4, "beta": 0.2},
    "grid3x4": {"kind": "grid2d", "rows": 3, "cols": 4, "beta": 0.2},
    "grid4x4": {"kind": "grid2d", "rows": 4, "cols": 4, "beta": 0.2},
    "tree50": {"kind": "random_tree", "n": 50, "beta": 0.3, "seed": 707},
    "tree10": {"kind": "random_tree", "n": 10, "beta": 0.3, "seed": 11},
}


def fixture_model(name: str) -> IsingModel:
    spec = dict(FIXTURES[name])
    kind = spec.pop("kind")
    if kind == "grid2d":
        return grid2d_model(spec["rows"], spec["cols"], spec["beta"],
                            spec.get("field", 0.0))
    if kind == "path":
        return path_model(spec["n"], spec["beta"], spec.get("field", 0.0))
    if kind == "random_tree":
        return random_tree_model(spec["n"], spec["beta"],
                                 streams(spec["seed"]).child("fixture", name))
    raise ValueError(f"fixture kind {kind!r} unhandled")


def _center_vertex(model: IsingModel) -> int:
    graph = model.graph
    best, best_ecc = 0, None
    for v in range(model.n):
        ecc = int(graph.distances_from(v).max())
        if best_ecc is None or ecc < best_ecc:
            best, best_ecc = v, ecc
    return best


def fit_plan(model: IsingModel, eps: float, s=None, profile_radii=None):
    """Profile boundary decay at a central vertex and build the sampler plan."""
    v = _center_vertex(model)
    if profile_radii is None:
        ecc = int(model.graph.distances_from(v).max())
        profile_radii = list(range(0, max(ecc, 1)))
    profile = estimate_ssm(model, v, profile_radii)
    delta = profile.delta if profile.delta is not None else 0.99
    delta = min(max(delta, 1e-3), 0.99)
    plan = build_ssm_plan(model, eps=eps, c_ssm=profile.c_ssm, delta=delta, s=s)
    return plan, profile


@dataclass
class ExperimentResult:
    experiment: str
    records: list
    invariants: list = field(default_factory=list)  # (name, ok, detail)
    extra: dict = field(default_factory=dict)
    figures: list = field(default_factory=list)     # (filename, render_fn)

    @property
    def invariants_ok(self) -> bool:
        return all(ok for _, ok, _ in self.invariants)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _resolve_model(spec, streams_node):
    if "fixture" in spec:
        return fixture_model(spec["fixture"])
    if "file" in spec:
        return load_model(spec["file"])
    if "inline" in spec:
        return model_from_dict(spec["inline"])
    if "generator" in spec:
        return generate_model(spec["generator"], spec.get("params", {}),
                              streams_node)
    raise ValueError("model spec needs fixture, file, inline, or generator")


def _resolve_concept(spec, streams_node, n):
    if "file" in spec:
        return load_concept(spec["file"])
    if "inline" in spec:
        return concept_from_dict(spec["inline"])
    gen = spec.get("generator", "monotone_dnf")
    if gen == "monotone_dnf":
        return random_monotone_dnf(streams_node, n, spec.get("terms", 3),
                                   spec.get("width", 3))
    if gen == "halfspace":
        return random_halfspace(streams_node, n)
    if gen == "table":
        return random_table_concept(streams_node, n)
    raise ValueError(f"unknown concept generator {gen!r}")


def _rec(experiment, mh, seed, metric, value, stderr="", **params):
    return {"experiment": experiment, "model_hash": mh, "seed": seed,
            "metric": metric, "value": value, "stderr": stderr,
            "params": params}


def run_experiment(config: dict, master_seed=None) -> ExperimentResult:
    kind = config["experiment"]
    seed = int(config.get("seed", 0) if master_seed is None else master_seed)
    root = streams(seed).child(kind, config_hash(config))
    runner = _RUNNERS.get(kind)
    if runner is None:
        raise ValueError(f"unknown experiment {kind!r}")
    return runner(config, seed, root)


def _sample_experiment(config, seed, root) -> ExperimentResult:
    model = _resolve_model(config["model"], root.child("model"))
    eps = float(config.get("eps", 0.1))
    mh = model_hash(model)
    plan, profile = fit_plan(model, eps, s=config.get("s"))
    diag = diagnostics(model)
    records = [
        _rec("sample", mh, seed, "width", diag.width, eps=eps),
        _rec("sample", mh, seed, "eta", diag.eta, eps=eps),
        _rec("sample", mh, seed, "radius", plan.r, eps=eps),
        _rec("sample", mh, seed, "block_bits", plan.s, eps=eps),
        _rec("sample", mh, seed, "num_parts", plan.num_parts, eps=eps),
        _rec("sample", mh, seed, "c_ssm_fit", profile.c_ssm, eps=eps),
        _rec("sample", mh, seed, "delta_fit",
             profile.delta if profile.delta is not None else "", eps=eps),
    ]
    for r, d in profile.rows():
        records.append(_rec("sample", mh, seed, "ssm_discrepancy", d,
                            eps=eps, radius=r))
    invariants = []
    if model.n <= 16:
        law = sampler_output_distribution(plan, model)
        mu = exact_distribution(model)
        tv = tv_distance(law, mu)
        ratio = likelihood_ratio_audit(plan, model)["max_ratio"]
        records.append(_rec("sample", mh, seed, "tv_to_exact", tv, eps=eps))
        records.append(_rec("sample", mh, seed, "max_likelihood_ratio", ratio,
                            eps=eps))
        invariants.append(("tv_within_eps", tv <= eps, f"tv={tv:.3g} eps={eps}"))
        invariants.append(("ratio_within_exp_eps", ratio <= math.exp(eps),
                           f"ratio={ratio:.6g} cap={math.exp(eps):.6g}"))
    fig = ("sample_decay.png",
           lambda path, p=profile: plots.decay_figure(
               list(p.radii), list(p.discrepancies), p.c_ssm, p.delta, path))
    return ExperimentResult("sample", records, invariants, figures=[fig])


def _invert_experiment(config, seed, root) -> ExperimentResult:
    model = _resolve_model(config["model"], root.child("model"))
    eps = float(config.get("eps", 0.5))
    trials = int(config.get("trials", 1000))
    mh = model_hash(model)
    plan, _ = fit_plan(model, eps, s=config.get("s"))
    cache = ConditionalCache(model)
    rng = root.child("seeds").generator()
    failures = 0
    attempts_all = []
    for t in range(trials):
        s0 = Seed.from_rng(rng, plan.n, plan.s)
        y, _ = ssm_samp(plan, model, s0, cache)
        res = inv_samp(plan, model, y, root.child("invert", t))
        if res.seed is None:
            failures += 1
            continue
        y2, _ = ssm_samp(plan, model, res.seed, cache)
        if not np.array_equal(y, y2):
            failures += 1
        attempts_all.extend(res.attempts)
    records = [
        _rec("invert-audit", mh, seed, "roundtrip_failures", failures,
             trials=trials, eps=eps),
        _rec("invert-audit", mh, seed, "mean_attempts",
             float(np.mean(attempts_all)) if attempts_all else 0.0,
             trials=trials, eps=eps),
    ]
    invariants = [("roundtrip_exact", failures == 0, f"{failures}/{trials} failed")]
    extra = {"trials": trials, "failures": failures}
    if model.n <= 12:
        ratio = likelihood_ratio_audit(plan, model)["max_ratio"]
        push = pushforward_bound_audit(plan, model)["max_density_ratio"]
        records.append(_rec("invert-audit", mh, seed, "max_likelihood_ratio",
                            ratio, trials=trials, eps=eps))
        records.append(_rec("invert-audit", mh, seed, "pushforward_max", push,
                            trials=trials, eps=eps))
        invariants.append(("likelihood_ratio", ratio <= math.exp(eps),
                           f"{ratio:.6g} vs exp(eps)={math.exp(eps):.6g}"))
        invariants.append(("pushforward_bound", push <= math.exp(eps),
                           f"{push:.6g} vs exp(eps)={math.exp(eps):.6g}"))
        extra.update({"max_likelihood_ratio": ratio, "pushforward_max": push})
    if plan.n * plan.s <= 26:
        y_ref, _ = ssm_samp(plan, model, Seed.from_rng(rng, plan.n, plan.s), cache)
        pre = preimage_enumerate(plan, model, y_ref)
        if pre.size <= 64:
            uni = preimage_uniformity_audit(
                plan, model, y_ref, int(config.get("uniformity_trials", 20000)),
                root.child("uniformity"))
            records.append(_rec("invert-audit", mh, seed, "uniformity_tv",
                                uni["tv"], trials=trials, eps=eps))
            invariants.append(("preimage_uniform", uni["tv"] <= 0.02,
                               f"tv={uni['tv']:.4f}"))
            extra["uniformity"] = uni
    return ExperimentResult("invert-audit", records, invariants, extra=extra)


def _learn_experiment(config, seed, root) -> ExperimentResult:
    model = _resolve_model(config["model"], root.child("model"))
    mh = model_hash(model)
    concept = _resolve_concept(config.get("concept", {}), root.child("concept"),
                               model.n)
    k = int(config.get("k", 2))
    norm = config.get("norm", "l2")
    res = learn_and_test(
        model, concept, k,
        n_train=int(config.get("n_train", 2000)),
        n_test=int(config.get("n_test", 2000)),
        streams=root.child("data"), norm=norm,
        source=config.get("source", "exact"),
        label_flip=float(config.get("label_flip", 0.0)))
    params = {"k": k, "norm": norm}
    records = [
        _rec("learn", mh, seed, "train_error", res["train_error"], **params),
        _rec("learn", mh, seed, "test_error", res["test_error"], **params),
        _rec("learn", mh, seed, "threshold", res["threshold"], **params),
    ]
    invariants = []
    if norm == "l1":
        records.append(_rec("learn", mh, seed, "kkt_gap", res["kkt_gap"], **params))
        records.append(_rec("learn", mh, seed, "kkt_tol", res["kkt_tol"], **params))
        invariants.append(("kkt_subgradient", res["kkt_ok"],
                           f"gap={res['kkt_gap']:.3g} tol={res['kkt_tol']:.3g}"))
    if model.n <= 12 and config.get("include_oracle", True):
        oracle = best_weighted_error(model, concept, k, norm=norm)
        records.append(_rec("learn", mh, seed, "population_optimum", oracle,
                            **params))
    extra = {"predictor": res["predictor"].to_dict()}
    return ExperimentResult("learn", records, invariants, extra=extra)


def _influence_experiment(config, seed, root) -> ExperimentResult:
    mode = config.get("mode", "mu")
    if mode == "clique":
        records, invariants = [], []
        ratios = []
        for num, size in config["grid"]:
            law = CliqueLaw(num_cliques=num, clique_size=size)
            total = clique_majority_influence(law)
            ratio = total / math.sqrt((size - 1) * law.n)
            ratios.append(ratio)
            records.append(_rec("influence", "clique_product_law", seed,
                                "influence_ratio", ratio, num_cliques=num,
                                clique_size=size))
        spread = max(ratios) / min(ratios)
        records.append(_rec("influence", "clique_product_law", seed,
                            "ratio_spread", spread))
        invariants.append(("ratio_spread_2x", spread <= 2.0, f"spread={spread:.3f}"))
        return ExperimentResult("influence", records, invariants)
    model = _resolve_model(config["model"], root.child("model"))
    mh = model_hash(model)
    count = int(config.get("concepts", 10))
    diag = diagnostics(model)
    records, invariants = [], []
    values = []
    bound = monotone_influence_bound(diag.max_degree, model.n)
    if mode == "mu":
        for c in range(count):
            concept = random_monotone_dnf(root.child("concept", c), model.n,
                                          config.get("terms", 3),
                                          config.get("width", 3))
            total = mu_influence(model, concept)["total"]
            values.append(total)
            records.append(_rec("influence", mh, seed, "mu_influence", total,
                                concept=c))
            invariants.append((f"monotone_bound_{c}", total <= bound + 1e-9,
                               f"{total:.4f} <= {bound:.4f}"))
    elif mode == "transfer":
        eps = float(config.get("eps", 0.1))
        plan, _ = fit_plan(model, eps)
        chi = seed_bit_chi(plan)
        _, c_pi = glauber_gap(model)
        for c in range(count):
            concept = random_monotone_dnf(root.child("concept", c), model.n,
                                          config.get("terms", 3),
                                          config.get("width", 3))
            i_mu = mu_influence(model, concept)["total"]
            comp = uniform_influence_of_composition(
                plan, model, concept, trials=int(config.get("trials", 60)),
                streams=root.child("comp", c))
            rhs = influence_transfer_rhs(chi, c_pi, i_mu, model.n, eps)
            values.append(comp["total"])
            records.append(_rec("influence", mh, seed, "composed_influence",
                                comp["total"], stderr=comp["stderr"], concept=c))
            records.append(_rec("influence", mh, seed, "transfer_bound", rhs,
                                concept=c))
            invariants.append((f"transfer_{c}", comp["total"] <= rhs,
                               f"{comp['total']:.3f} <= {rhs:.3f}"))
    else:
        raise ValueError(f"unknown influence mode {mode!r}")
    fig = ("influence.png",
           lambda path, v=tuple(values), b=bound if mode == "mu" else None:
           plots.influence_figure(list(v), b, path))
    return ExperimentResult("influence", records, invariants, figures=[fig])


def _anticonc_experiment(config, seed, root) -> ExperimentResult:
    model = _resolve_model(config["model"], root.child("model"))
    mh = model_hash(model)
    w_spec = config.get("w", "uniform")
    w = (np.full(model.n, 1.0 / math.sqrt(model.n))
         if w_spec == "uniform" else np.asarray(w_spec, dtype=float))
    widths = [float(x) for x in config.get("widths", (0.05, 0.1, 0.2, 0.4))]
    mc = int(config.get("mc_samples", 100_000))
    prof = anticoncentration_profile(model, w, widths, mc_samples=mc,
                                     streams=root.child("mc"))
    records = [
        _rec("anticonc", mh, seed, "eps_regularity", prof.eps_regularity),
        _rec("anticonc", mh, seed, "fitted_c", prof.fitted_c),
    ]
    for wd, b in prof.rows():
        records.append(_rec("anticonc", mh, seed, "band", b, width=wd))
    invariants = [("fitted_c_finite", math.isfinite(prof.fitted_c),
                   f"C={prof.fitted_c:.3g}")]
    if model.n <= 20:
        exact = anticoncentration_profile(model, w, widths, mc_samples=0)
        tol = max(0.02, 5.0 / math.sqrt(mc))
        worst = max(abs(a - b) for a, b in zip(prof.bands, exact.bands))
        for wd, b in exact.rows():
            records.append(_rec("anticonc", mh, seed, "band_exact", b, width=wd))
        records.append(_rec("anticonc", mh, seed, "band_mc_gap", worst))
        invariants.append(("mc_matches_exact", worst <= tol,
                           f"gap={worst:.4f} tol={tol:.4f}"))
    if config.get("subgaussian", False):
        tail = subgaussian_tail_audit(model, w, mc_samples=0)
        records.append(_rec("anticonc", mh, seed, "c_subgaussian", tail["c_sg"]))
    fig = ("anticonc_bands.png",
           lambda path, p=prof: plots.band_figure(
               list(p.widths), list(p.bands), p.fitted_c, p.eps_regularity, path))
    return ExperimentResult("anticonc", records, invariants, figures=[fig])


def _sweep_experiment(config, seed, root) -> ExperimentResult:
    model = _resolve_model(config["model"], root.child("model"))
    mh = model_hash(model)
    concept = _resolve_concept(config.get("concept", {}), root.child("concept"),
                               model.n)
    ks = [int(k) for k in config.get("ks", (1, 2, 3))]
    norm = config.get("norm", "l2")
    include_oracle = config.get("include_oracle", model.n <= 12)
    test_errors, oracle_errors = [], []
    records = []
    for k in ks:
        res = learn_and_test(
            model, concept, k,
            n_train=int(config.get("n_train", 2000)),
            n_test=int(config.get("n_test", 2000)),
            streams=root.child("data", k), norm=norm,
            source=config.get("source", "exact"),
            label_flip=float(config.get("label_flip", 0.0)))
        test_errors.append(res["test_error"])
        records.append(_rec("sweep", mh, seed, "test_error", res["test_error"],
                            k=k, norm=norm))
        if include_oracle:
            oracle = best_weighted_error(model, concept, k, norm=norm)
            oracle_errors.append(oracle)
            records.append(_rec("sweep", mh, seed, "population_optimum", oracle,
                                k=k, norm=norm))
    invariants = []
    if include_oracle:
        mono = all(oracle_errors[i + 1] <= oracle_errors[i] + 1e-9
                   for i in range(len(oracle_errors) - 1))
        invariants.append(("oracle_nonincreasing", mono,
                           " -> ".join(f"{e:.4f}" for e in oracle_errors)))
    fig = ("sweep.png",
           lambda path, kk=tuple(ks), te=tuple(test_errors),
                  oe=tuple(oracle_errors) if include_oracle else None:
           plots.sweep_figure(list(kk), list(te),
                              list(oe) if oe is not None else None, path))
    return ExperimentResult("sweep", records, invariants, figures=[fig])


def _generate_experiment(config, seed, root) -> ExperimentResult:
    kind = config["kind"]
    params = config.get("params", {})
    out_model = config.get("out_model", "model.json")
    made = generate_model(kind, params, root.child("gen"))
    records, invariants = [], []
    if isinstance(made, CliqueLaw):
        blob = {"kind": "clique_hardcore", "num_cliques": made.num_cliques,
                "clique_size": made.clique_size}
        Path(out_model).write_text(json.dumps(blob, indent=1) + "\n")
        records.append(_rec("generate", "clique_product_law", seed, "n", made.n,
                            kind=kind))
        invariants.append(("generated", True, out_model))
    else:
        save_model(made, out_model)
        diag = diagnostics(made)
        mh = model_hash(made)
        records.extend([
            _rec("generate", mh, seed, "n", made.n, kind=kind),
            _rec("generate", mh, seed, "edges", len(made.couplings), kind=kind),
            _rec("generate", mh, seed, "width", diag.width, kind=kind),
            _rec("generate", mh, seed, "eta", diag.eta, kind=kind),
            _rec("generate", mh, seed, "max_degree", diag.max_degree, kind=kind),
        ])
        zeta = config.get("check_dobrushin")
        if zeta is not None:
            chk = dobrushin_check(made, float(zeta))
            records.append(_rec("generate", mh, seed, "dobrushin_margin",
                                chk["margin"], kind=kind))
            invariants.append(("dobrushin", chk["ok"], f"width={chk['width']:.3f}"))
        invariants.append(("generated", True, out_model))
    return ExperimentResult("generate", records, invariants)


_RUNNERS = {
    "sample": _sample_experiment,
    "invert-audit": _invert_experiment,
    "learn": _learn_experiment,
    "influence": _influence_experiment,
    "anticonc": _anticonc_experiment,
    "sweep": _sweep_experiment,
    "generate": _generate_experiment,
}


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(records: list, path, fmt: str = "csv") -> str:
    """Write records with the canonical stable column order."""
    param_keys = sorted({k for r in records for k in r["params"]})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        rows = []
        for r in records:
            row = {"experiment": r["experiment"], "model_hash": r["model_hash"]}
            row.update({k: r["params"].get(k, "") for k in param_keys})
            row.update({"metric": r["metric"], "value": r["value"],
                        "stderr": r["stderr"], "seed": r["seed"]})
            rows.append(row)
        path.write_text(json.dumps(rows, indent=1, default=_format_value) + "\n")
        return str(path)
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment", "model_hash", *param_keys,
                         "metric", "value", "stderr", "seed"])
        for r in records:
            row = [r["experiment"], r["model_hash"]]
            row.extend(_format_value(r["params"].get(k, "")) for k in param_keys)
            row.extend([r["metric"], _format_value(r["value"]),
                        _format_value(r["stderr"]), r["seed"]])
            writer.writerow(row)
    return str(path)
