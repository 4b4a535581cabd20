"""Experiment runners behind the command line.

Each runner takes the validated parameter table and the seed and returns an
:class:`Outcome`: a JSON-ready result table, named verdicts with their
tolerances, and rows for the flat CSV table.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundary import condenser_capacity, koebe_cuts, koebe_experiment, lindelof_experiment
from .chains import (canonical_chain_ball, chain_validate, impression_estimate, map_chain,
                     uniformity_check)
from .config import build_map
from .curves import geodesic_length, sr_distance_estimate
from .domain import ball, domain_from_config
from .families import qc_invariance_check, ring_ray_family, ring_value
from .group import Invert, RadialStretch, dist_h, inverse, multiply
from .modulus import GridSpec, discrete_modulus
from .polar import (UNIT_BALL_VOLUME, ball_indicator, cartesian_integrate, polar_integrate,
                    rho_one, rho_one_integral, sphere_points)


@dataclass
class Outcome:
    results: dict
    verdicts: dict
    tolerances: dict
    columns: list
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _f(x) -> float:
    return float(x)


def _pmap(fn: Callable, items, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def _sigma_points(rng: np.random.Generator, n: int) -> np.ndarray:
    alpha = rng.uniform(-math.pi / 2, math.pi / 2, n)
    theta = rng.uniform(0, 2 * math.pi, n)
    return sphere_points(alpha, theta)


def _slope(ratios, values) -> float:
    return float(np.polyfit(np.log(np.log(ratios)), np.log(values), 1)[0])


# --------------------------------------------------------------------------

def ring_decay(p: dict, seed: int, threads: int = 1) -> Outcome:
    a = p["a"]
    ratios = [p["b"] / a] if "b" in p else list(p["ratios"])
    rows, mods, gaps = [], [], []
    for q in ratios:
        b = a * q
        fam = ring_ray_family(a, b, p["n_alpha"], p["n_theta"], p["nodes_per_log"])
        w = p["rel_width"] * a
        width = (w, w, w * a) if p["grid"] == "graded" else None
        grid = GridSpec(tuple(p["dims"]), min_width=width)
        res = discrete_modulus(fam, grid, check_rectifiable=False)
        ref = ring_value(a, b)
        mods.append(res.value)
        gaps.append(res.gap)
        rows.append([_f(q), res.value, ref, (res.value - ref) / ref])
    verdicts, tols = {}, {}
    results = {"b_over_a": ratios, "mod_estimate": mods,
               "analytic_2pi2_log3": [r[2] for r in rows], "rel_err": [r[3] for r in rows],
               "duality_gap": gaps}
    if len(ratios) >= 2:
        s = _slope(ratios, mods)
        results["slope"] = s
        verdicts["slope"] = abs(s + 3.0) <= p["slope_tol"]
        tols["slope"] = p["slope_tol"]
    if "value_tol" in p:
        verdicts["value"] = all(abs(r[3]) <= p["value_tol"] for r in rows)
        tols["value"] = p["value_tol"]
    return Outcome(results, verdicts, tols,
                   ["b_over_a", "mod_estimate", "analytic_2pi2_log3", "rel_err"], rows)


def _image_grid(m, fam, dims, rel_width: float = 0.2) -> GridSpec:
    """Grid graded towards the image of the origin, smallest cells scaled to
    the nearest image node."""
    try:
        focus = np.asarray(m(np.zeros(3)), dtype=float)
        if not np.all(np.isfinite(focus)):
            raise ValueError
    except Exception:  # the origin may be the pole of an inversion
        focus = np.zeros(3)
    nodes = np.vstack([c.nodes for c in fam.curves])
    a = float(dist_h(focus, nodes).min())
    return GridSpec(tuple(dims), focus=tuple(focus),
                    min_width=(rel_width * a, rel_width * a, rel_width * a * a))


def qc_invariance(p: dict, seed: int, threads: int = 1) -> Outcome:
    m = build_map(p["map"])
    fam = ring_ray_family(p["a"], p["b"], p["n_alpha"], p["n_theta"])
    w = 0.2 * p["a"]
    before = GridSpec(tuple(p["dims"]), min_width=(w, w, w * p["a"]))
    out = qc_invariance_check(m, fam, before, _image_grid(m, fam.mapped(m), p["dims"]))
    gens = m.generators
    if "bounds" in p:
        lo, hi = p["bounds"]
    elif any(isinstance(g, RadialStretch) for g in gens):
        lo, hi = None, None
    elif any(isinstance(g, Invert) for g in gens):
        lo, hi = 0.8, 1.25
    else:
        lo, hi = 0.95, 1.05
    verdicts = {} if lo is None else {"ratio": lo <= out["ratio"] <= hi}
    tols = {} if lo is None else {"ratio": [lo, hi]}
    row = [out["mod_before"], out["mod_after"], out["ratio"], out["gap_before"], out["gap_after"]]
    return Outcome({k: _f(v) for k, v in out.items()}, verdicts, tols,
                   ["mod_before", "mod_after", "ratio", "gap_before", "gap_after"], [row])


def metric_sandwich(p: dict, seed: int, threads: int = 1) -> Outcome:
    rng = np.random.default_rng(seed)
    P = rng.uniform(-p["scale"], p["scale"], (p["n_pairs"], 3))
    Q = rng.uniform(-p["scale"], p["scale"], (p["n_pairs"], 3))
    dH = dist_h(P, Q)
    g = multiply(inverse(P), Q)
    if p["budget"] == 0:
        dS = np.array([geodesic_length(complex(x, y), t) for x, y, t in g])
    else:
        dS = np.array([sr_distance_estimate(a, b, p["budget"]).value for a, b in zip(P, Q)])
    lower = dS / math.sqrt(math.pi) <= dH * (1 + 1e-12)
    upper = dH <= dS + p["upper_slack"]
    sharp = sr_distance_estimate((0, 0, 0), (0, 0, 1), p["sharpness_budget"]).value
    rel = abs(sharp - math.sqrt(math.pi)) / math.sqrt(math.pi)
    ratio = dS / dH
    results = {"n_pairs": p["n_pairs"], "lower_failures": int((~lower).sum()),
               "upper_failures": int((~upper).sum()), "ratio_min": _f(ratio.min()),
               "ratio_max": _f(ratio.max()), "sharpness_value": _f(sharp), "sharpness_rel_err": _f(rel)}
    verdicts = {"lower": bool(lower.all()), "upper": bool(upper.all()),
                "sharpness": rel <= p["sharpness_tol"]}
    tols = {"upper": p["upper_slack"], "sharpness": p["sharpness_tol"]}
    edges = np.linspace(1.0, math.sqrt(math.pi), 11)
    counts, _ = np.histogram(np.clip(ratio, 1.0, math.sqrt(math.pi)), edges)
    rows = [[_f(lo), _f(hi), int(c)] for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    return Outcome(results, verdicts, tols, ["ratio_lo", "ratio_hi", "count"], rows)


def polar_volume(p: dict, seed: int, threads: int = 1) -> Outcome:
    polar = polar_integrate(ball_indicator(1.0), 1.0, p["n_s"], p["n_alpha"], p["n_theta"])
    n = p["cartesian_n"]
    cart = cartesian_integrate(ball_indicator(1.0), ((-1, 1), (-1, 1), (-1, 1)), n)
    rho = polar_integrate(lambda q: rho_one(q) ** 4, math.inf, 400, 4, 4)
    ref_rho = rho_one_integral()
    rel = abs(polar - UNIT_BALL_VOLUME) / UNIT_BALL_VOLUME
    agree = abs(polar - cart) / abs(cart)
    rel_rho = abs(rho - ref_rho) / ref_rho
    rtol = p["rtol"]
    results = {"value": polar, "reference": UNIT_BALL_VOLUME, "rel_err": rel, "cartesian": cart,
               "cartesian_rel_diff": agree, "rho_one_integral": rho, "rho_one_reference": ref_rho,
               "rho_one_rel_err": rel_rho}
    verdicts = {"volume": rel <= rtol, "cartesian": agree <= rtol, "rho_one": rel_rho <= rtol}
    rows = [["ball_volume", polar, UNIT_BALL_VOLUME, rel], ["cartesian", cart, UNIT_BALL_VOLUME,
                                                            abs(cart - UNIT_BALL_VOLUME) / UNIT_BALL_VOLUME],
            ["rho_one_4", rho, ref_rho, rel_rho]]
    return Outcome(results, verdicts, {k: rtol for k in verdicts}, ["quantity", "value", "reference",
                                                                     "rel_err"], rows)


def koebe(p: dict, seed: int, threads: int = 1) -> Outcome:
    m = build_map(p["map"])
    cuts = koebe_cuts(n_radial=p["n_radial"], n_spiral=p["n_spiral"], seed=seed)
    rep = koebe_experiment(m, cuts=cuts, tol=p["tol"], spot_checks=p["spot_checks"], seed=seed)
    rows = []
    for i, (kind, ok, tails) in enumerate(zip(rep.kinds, rep.verdicts, rep.tail_diameters)):
        rows.append([i, kind, _f(tails[-1]), ok])
    verdicts = {"singleton": rep.passed}
    if rep.spot_moduli:
        verdicts["image_spot_moduli"] = all(v > 0 for v in rep.spot_moduli)
    return Outcome(rep.to_dict(), verdicts, {"singleton": p["tol"]},
                   ["cut", "kind", "tail_diameter", "verdict"], rows)


def lindelof(p: dict, seed: int, threads: int = 1) -> Outcome:
    m = build_map(p["map"])
    if "x0" in p:
        pts = np.asarray([p["x0"]], dtype=float)
    else:
        pts = _sigma_points(np.random.default_rng(seed), p["n_points"])
    reps = _pmap(lambda x: lindelof_experiment(m, x, ks=p["ks"], tol=p["tol"]), pts, threads)
    frac = sum(r.agree for r in reps) / len(reps)
    per = [r.to_dict() for r in reps]
    results = {"points": per, "agree_fraction": frac, "agree": frac >= p["min_agree"],
               "cluster_pt": [d["cluster_pt"] for d in per],
               "principal_set": [d["principal_set"] for d in per],
               "inclusion_ok": all(r.inclusion_ok for r in reps),
               "contractible": all(r.contractible for r in reps)}
    rows = [[i, *map(_f, x), r.hausdorff, r.agree, r.contractible, r.inclusion_ok, _f(r.overshoot)]
            for i, (x, r) in enumerate(zip(pts, reps))]
    return Outcome(results, {"agree": results["agree"]}, {"hausdorff": p["tol"], "agree": p["min_agree"]},
                   ["point", "x", "y", "t", "hausdorff", "agree", "contractible", "inclusion_ok",
                    "overshoot_over_s"], rows)


def _ring_samples(a: float, n_alpha: int, n_theta: int) -> np.ndarray:
    alpha = -math.pi / 2 + math.pi * (np.arange(n_alpha) + 0.5) / n_alpha
    theta = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
    al, th = np.meshgrid(alpha, theta, indexing="ij")
    v = sphere_points(al.ravel(), th.ravel())
    return np.column_stack([a * v[:, 0], a * v[:, 1], a * a * v[:, 2]])


def capacity(p: dict, seed: int, threads: int = 1) -> Outcome:
    a = p["a"]
    K = _ring_samples(a, p["n_alpha"], p["n_theta"])
    rows, caps = [], []
    for q in p["ratios"]:
        R = a * q
        grid = GridSpec(tuple(p["dims"]), bbox=ball((0, 0, 0), R).bbox,
                        min_width=(p["rel_width"] * a, p["rel_width"] * a, p["rel_width"] * a * a))
        cap = condenser_capacity(K, R, grid)
        ring = discrete_modulus(ring_ray_family(a, R, p["n_alpha"], p["n_theta"]), grid,
                                check_rectifiable=False).value
        caps.append(cap)
        rows.append([_f(q), cap, ring, cap / ring - 1.0, ring_value(a, R)])
    results = {"b_over_a": list(p["ratios"]), "capacity": caps, "ring_modulus": [r[2] for r in rows],
               "rel_diff": [r[3] for r in rows], "analytic_2pi2_log3": [r[4] for r in rows]}
    verdicts = {"identity": all(abs(r[3]) <= p["identity_tol"] for r in rows)}
    tols = {"identity": p["identity_tol"]}
    if len(caps) >= 2:
        s = _slope(p["ratios"], caps)
        results["slope"] = s
        verdicts["slope"] = abs(s + 3.0) <= p["slope_tol"]
        tols["slope"] = p["slope_tol"]
    return Outcome(results, verdicts, tols,
                   ["b_over_a", "capacity", "ring_modulus", "rel_diff", "analytic_2pi2_log3"], rows)


def chain_demo(p: dict, seed: int, threads: int = 1) -> Outcome:
    m = build_map(p["map"])
    pts = _sigma_points(np.random.default_rng(seed), p["n_points"])

    def one(x0):
        c = canonical_chain_ball(x0, p["ks"], dims=p["dims"])
        rep = chain_validate(c, mod_budget=p["mod_budget"], seed=seed, grid_dims=p["grid_dims"])
        imp = impression_estimate(c)
        mc = map_chain(m, c)
        mrep = chain_validate(mc, mod_budget=p["mod_budget"], seed=seed, grid_dims=p["grid_dims"])
        mimp = impression_estimate(mc)
        err = _f(dist_h(imp.center, x0)) if imp.center is not None else math.inf
        merr = _f(dist_h(mimp.center, m(x0))) if mimp.center is not None else math.inf
        return {"x0": list(map(_f, x0)), "report": rep.to_dict(), "impression_error": err,
                "impression_tol": imp.tolerance, "impression_ok": bool(imp.singleton and err <= imp.tolerance),
                "mapped_report": mrep.to_dict(), "mapped_impression_error": merr,
                "mapped_impression_tol": mimp.tolerance,
                "mapped_impression_ok": bool(mimp.singleton and merr <= mimp.tolerance)}

    per = _pmap(one, pts, threads)
    verdicts = {"chains_valid": all(r["report"]["passed"] for r in per),
                "impressions": all(r["impression_ok"] for r in per),
                "mapped_valid": all(r["mapped_report"]["passed"] for r in per),
                "mapped_impressions": all(r["mapped_impression_ok"] for r in per)}
    rows = [[i, r["report"]["passed"], r["impression_error"], r["impression_tol"],
             r["mapped_report"]["passed"], r["mapped_impression_error"], r["mapped_impression_tol"]]
            for i, r in enumerate(per)]
    return Outcome({"points": per}, verdicts, {"impression": "2 cell + 2 s0/k_max"},
                   ["point", "valid", "impression_error", "impression_tol", "mapped_valid",
                    "mapped_impression_error", "mapped_impression_tol"], rows)


def uniformity(p: dict, seed: int, threads: int = 1) -> Outcome:
    omega = domain_from_config(p["domain"])
    if "pairs" in p:
        pairs = [(np.asarray(a, float), np.asarray(b, float)) for a, b in p["pairs"]]
    else:
        rng = np.random.default_rng(seed)
        box = omega.bbox
        pool = []
        while len(pool) < 2 * p["n_pairs"]:
            q = rng.uniform(box[:, 0], box[:, 1], (256, 3))
            pool.extend(q[omega.contains(q)])
        pool = pool[:2 * p["n_pairs"]]
        pairs = list(zip(pool[::2], pool[1::2]))
    rep = uniformity_check(omega, pairs, p["budget"], seed)
    rows = [[i, w["beta"], w["cigar"], w["candidate"]] for i, w in enumerate(rep.witnesses)]
    return Outcome(rep.to_dict(), {"finite": math.isfinite(rep.beta_hat) and rep.alpha_hat > 0},
                   {}, ["pair", "beta", "cigar", "candidate"], rows)


RUNNERS = {"ring_decay": ring_decay, "qc_invariance": qc_invariance,
           "metric_sandwich": metric_sandwich, "polar_volume": polar_volume, "koebe": koebe,
           "lindelof": lindelof, "capacity": capacity, "chain_demo": chain_demo,
           "uniformity": uniformity}


def run(experiment: str, params: dict, seed: int = 0, threads: int = 1) -> Outcome:
    return RUNNERS[experiment](params, seed, threads)

