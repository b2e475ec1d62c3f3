"""Stage runner shared by the CLI subcommands.

Each stage reads what earlier stages left on a :class:`Run`, writes one JSON
report (plus CSV tables and figures when asked) and returns a
:class:`StageResult` whose ``checks`` are the certificates that decide the
exit code.  Reports carry no timings or host data, so identical configs and
seeds give identical files.
"""
from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import plotting
from .config import ExperimentConfig
from .errors import NotASource, SignalBelowNoise, ZoomTowerError
from .induced import build_base, build_induced_map, certify_markov
from .maps import build_perturbed_example, map_from_dict, volume_expansion
from .orbits import (
    arc_escape_falsifier,
    find_periodic_points,
    preorbit_density_certificate,
    verify_expanding_off_U0,
    verify_irg,
    verify_preimages_off_U1,
)
from .stats import correlation_decay, substep_classes, lebesgue_sampler, lyapunov_exponents, observable, tail_decay_fit, tower_sampler
from .torus import Ball, torus_distance
from .tower import TowerMeasure, bootstrap_mean, cylinder_consistency, kac_chi_square, make_weights, sample_mu_a
from .zooming import LAMBDA1, ZoomingContraction, check_zooming_axioms, compute_source_zooming_data, zooming_frequency

EXIT_CODES = {
    "map": 10,
    "periodic": 11,
    "source-zooming": 12,
    "induced": 13,
    "measures": 14,
    "stats": 15,
    "preorbit-density": 16,
    "verify-example": 17,
    "zooming-scan": 18,
}


def jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def dump_json(doc, path):
    text = json.dumps(jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"
    Path(path).write_text(text)


def sub_seed(seed: int, k: int) -> int:
    """Independent 64-bit seed for use ``k`` of a run seeded with ``seed``."""
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])


def diag(stage, message):
    print(f"[{stage}] {message}", file=sys.stderr)


@dataclass
class StageResult:
    name: str
    checks: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(self.checks.values())

    def to_dict(self):
        return {"passed": self.passed, "checks": self.checks, "files": self.files, "error": self.error}


class Run:
    def __init__(self, cfg: ExperimentConfig, out: Path, seed: int | None = None, fmt: str = "json", figures: bool = True, threads: int = 1):
        self.cfg = cfg
        self.out = Path(out)
        self.seed = cfg.seed if seed is None else seed
        self.fmt = fmt
        self.figures = figures
        self.threads = threads
        self.results: list[StageResult] = []
        self.f = self.orbits = self.source = self.zooming = self.alpha = None
        self.base = self.induced = self.weights = self.measure = None

    # helpers ---------------------------------------------------------------

    def write(self, res: StageResult, name: str, doc):
        dump_json(doc, self.out / name)
        res.files.append(name)

    def table(self, res: StageResult, name: str, header, rows):
        if self.fmt != "csv":
            return
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        res.files.append(name)

    def figure(self, res: StageResult, name: str, fn, *args):
        if self.figures:
            fn(*args, self.out / name)
            res.files.append(name)

    def execute(self, name, fn):
        res = StageResult(name)
        try:
            fn(res)
        except ZoomTowerError as e:
            res.error = f"{type(e).__name__}: {e}"
        if res.passed:
            diag(name, "passed")
        else:
            failed = [k for k, v in res.checks.items() if not v]
            diag(name, "FAILED: " + (res.error or ", ".join(failed)))
        self.results.append(res)
        return res

    def summary(self):
        first_fail = next((r for r in self.results if not r.passed), None)
        code = 0 if first_fail is None else EXIT_CODES.get(first_fail.name, 1)
        return {
            "passed": first_fail is None,
            "exit_code": code,
            "failed_stage": None if first_fail is None else first_fail.name,
            "seed": self.seed,
            "config": self.cfg.to_dict(),
            "stages": {r.name: r.to_dict() for r in self.results},
        }

    # stages ----------------------------------------------------------------

    def stage_map(self, res):
        self.f = map_from_dict(self.cfg.map)
        f = self.f
        res_grid = {1: 4096, 2: 512}.get(f.dim, 32)
        sigma = getattr(f, "sigma", None) or volume_expansion(f, res_grid)
        _, min_sv = verify_expanding_off_U0(f, None, res_grid)
        doc = {"map": f.to_dict(), "dim": f.dim, "degree": f.degree, "grid": res_grid, "min_abs_det": sigma, "min_singular_value": min_sv}
        res.checks["volume_expanding"] = bool(sigma > 1.0)
        self.write(res, "map.json", doc)

    def stage_periodic(self, res):
        sec = self.cfg["periodic"]
        self.orbits = find_periodic_points(self.f, sec["period"], sec["grid"])
        sources = [o for o in self.orbits if o.classification == "source"]
        if sources:
            if sec["source"] is not None:
                target = np.asarray(sec["source"], float)
                self.source = min(sources, key=lambda o: float(torus_distance(o.point.array(), target)))
            else:
                self.source = sources[0]
        counts = {c: sum(o.classification == c for o in self.orbits) for c in ("source", "sink", "saddle", "nonhyperbolic")}
        doc = {
            "period": sec["period"],
            "n_points": len(self.orbits),
            "dropped_seeds": self.orbits.dropped,
            "counts": counts,
            "orbits": [o.to_dict() for o in self.orbits],
            "selected_source": None if self.source is None else self.source.to_dict(),
        }
        res.checks["source_found"] = self.source is not None
        self.write(res, "periodic.json", doc)
        self.table(
            res,
            "periodic.csv",
            ["index", "point", "classification", "eigenvalue_moduli"],
            [[i, " ".join(repr(float(c)) for c in o.point.coords), o.classification, " ".join(repr(float(m)) for m in sorted(np.abs(o.eigenvalues)))] for i, o in enumerate(self.orbits)],
        )
        if self.source is None:
            raise NotASource(f"no source among the period-{sec['period']} points")

    def stage_source_zooming(self, res):
        sec = self.cfg["zooming"]
        self.alpha = ZoomingContraction(sec["rate"])
        axioms = check_zooming_axioms(self.alpha)
        self.zooming = compute_source_zooming_data(self.f, self.source, sec["delta_search"], sec["horizon"])
        sd = self.zooming
        res.checks["zooming_axioms"] = axioms["passed"]
        res.checks["branch_contraction"] = bool(sd.contraction <= math.exp(-sd.lambda0))
        self.write(res, "source_zooming.json", {"axioms": axioms, "alpha": self.alpha.to_dict(), "source_data": sd.to_dict()})

    def stage_induced(self, res):
        sec = self.cfg["induced"]
        sd = self.zooming
        self.base = build_base(self.f, sd, sec["r_fraction"] * sd.delta)
        self.induced = build_induced_map(self.f, self.base, self.alpha, sec["max_R"], sec["cell_budget"], sec["n_seeds"], exhaustive_nodes=sec["exhaustive_nodes"])
        F = self.induced
        cert = certify_markov(F, sec["samples_per_cell"])
        levels, counts = np.unique(F.return_times, return_counts=True)
        res.checks["markov"] = bool(cert["passed"])
        res.checks["expansion_above_e_lambda1"] = bool(cert["min_derivative_bound"] > math.exp(LAMBDA1))
        doc = {
            "base": self.base.to_dict(),
            "n_cells": len(F.cells),
            "return_time_histogram": {"levels": levels, "counts": counts},
            "build": F.report,
            "certificate": cert,
        }
        self.write(res, "induced.json", doc)
        self.write(res, "induced_map.json", F.to_dict())
        self.table(
            res,
            "cells.csv",
            ["id", "return_time", "center", "radius", "volume", "derivative_bound"],
            [[c.id, c.return_time, " ".join(repr(float(v)) for v in c.center), c.radius, c.volume, c.derivative_bound] for c in F.cells],
        )
        self.figure(res, "cells.png", plotting.plot_cells, F)
        self.figure(res, "return_times.png", plotting.plot_return_histogram, levels, counts)

    def stage_measures(self, res):
        sec = self.cfg["measures"]
        F = self.induced
        threads = max(self.threads, sec["threads"])
        self.weights = make_weights(F, sec["family"], sec["theta"] if sec["family"] == "geometric" else None)
        self.measure = TowerMeasure(self.weights, F, sec["cascade_depth"])
        cyl = cylinder_consistency(self.weights, sec["cylinder_depth"], seed=sub_seed(self.seed, 1))
        x, info = sample_mu_a(self.measure, sec["n_samples"], sub_seed(self.seed, 2), return_info=True, threads=threads)
        kac = kac_chi_square(self.measure, info["cells"])
        dim = F.base.dim
        bins = sec["bins"]
        hist, _ = np.histogramdd(x, bins=[bins] * dim, range=[(0.0, 1.0)] * dim)
        hist = hist.astype(np.int64)

        y = sample_mu_a(self.measure, sec["invariance_samples"], sub_seed(self.seed, 3), threads=threads)
        psi = observable(sec["invariance_observable"])
        diff = psi(F.f.evaluate(y)) - psi(y)
        inv_res = float(np.mean(diff))
        inv_se = float(np.std(diff, ddof=1) / math.sqrt(len(diff)))
        in_base = (torus_distance(y, F.base.center.array()) < F.base.r).astype(float)
        base_mass, base_se = bootstrap_mean(in_base, sub_seed(self.seed, 4))
        base_lower = math.fsum(self.weights.a.tolist()) / (F.ell * self.measure.mean_return)
        first = y[:, 0]
        x_mean, x_se = bootstrap_mean(first, sub_seed(self.seed, 5))

        res.checks["cylinder_additivity"] = bool(cyl["additivity_residual"] <= 1e-14)
        res.checks["shift_invariance"] = bool(cyl["invariance_residual"] <= 1e-14)
        res.checks["kac_marginal"] = bool(kac["p_value"] > 0.01)
        res.checks["full_support"] = bool(hist.min() > 0)
        res.checks["f_invariance"] = bool(abs(inv_res) < 3 * inv_se) if inv_se > 0 else bool(inv_res == 0)
        res.checks["base_mass_lower_bound"] = bool(base_mass >= base_lower)
        doc = {
            "weights": {k: v for k, v in self.weights.to_dict().items() if k != "a"},
            "tower": self.measure.to_dict(),
            "cylinders": cyl,
            "kac": kac,
            "histogram": {"bins_per_axis": bins, "n_samples": sec["n_samples"], "min_count": int(hist.min()), "max_count": int(hist.max())},
            "invariance": {"observable": sec["invariance_observable"], "n_samples": sec["invariance_samples"], "residual": inv_res, "std_error": inv_se},
            "base_indicator": {"estimate": base_mass, "std_error": base_se, "lower_bound": base_lower},
            "first_coordinate_mean": {"estimate": x_mean, "std_error": x_se},
        }
        self.write(res, "measures.json", doc)
        flat = hist.reshape(-1)
        self.table(res, "mu_histogram.csv", ["bin", "count"], [[i, int(c)] for i, c in enumerate(flat)])
        self.figure(res, "mu_histogram.png", plotting.plot_sample_histogram, x, bins)

    def stage_stats(self, res, parts=("lyapunov", "correlations", "tail")):
        sec = self.cfg["stats"]
        F = self.induced
        doc = {}
        if "lyapunov" in parts:
            leb = lyapunov_exponents(F.f, lebesgue_sampler(F.f.dim), sec["lyapunov_iterates"], sec["lyapunov_samples"], sub_seed(self.seed, 6))
            mu = lyapunov_exponents(F.f, tower_sampler(self.measure), sec["lyapunov_iterates"], sec["lyapunov_samples"], sub_seed(self.seed, 7))
            bound = LAMBDA1 / F.ell
            res.checks["mu_a_expanding"] = bool(min(mu.exponents) > bound)
            doc["lyapunov"] = {"lebesgue": leb.to_dict(), "mu_a": mu.to_dict(), "per_step_bound": bound}
        if "correlations" in parts:
            doc["correlations"] = {}
            for key, sampler, obs, lag, n, k in (
                ("lebesgue", lebesgue_sampler(F.f.dim), sec["lebesgue_observable"], sec["lebesgue_max_lag"], sec["lebesgue_samples"], 8),
                ("mu_a", tower_sampler(self.measure), sec["mu_observable"], sec["mu_max_lag"], sec["mu_samples"], 9),
            ):
                fn = observable(obs)
                try:
                    curve = correlation_decay(F.f, sampler, fn, fn, lag, n, sub_seed(self.seed, k), obs, obs)
                    below = False
                except SignalBelowNoise as e:
                    curve, below = e.curve, True
                entry = curve.to_dict()
                entry["signal_below_noise"] = below
                doc["correlations"][key] = entry
                if key == "mu_a":
                    decays = (not below) and curve.fit["slope"] < 0 and curve.fit["r2"] > 0.9
                    entry["decay_fit_passed"] = decays
                    if sec["gate_correlations"]:
                        res.checks["mu_a_correlation_decay"] = decays
                    pts, info = sample_mu_a(self.measure, sec["mu_samples"], sub_seed(self.seed, 11), return_info=True, threads=self.threads)
                    entry["substep_classes"] = substep_classes(F.f, fn, pts, info["offsets"], F.ell, lag)
                self.table(res, f"correlations_{key}.csv", ["lag", "correlation", "error"], [[r["lag"], r["correlation"], r["error"]] for r in curve.to_rows()])
                self.figure(res, f"correlations_{key}.png", plotting.plot_correlations, curve)
        if "tail" in parts:
            fit = tail_decay_fit(F, self.weights, sec["tail_n_max"])
            if self.weights.family == "geometric":
                res.checks["tail_exponential"] = bool(not fit.degenerate and fit.r2 > 0.99)
            doc["tail"] = fit.to_dict()
            self.table(res, "tail.csv", ["n", "tail"], list(zip(fit.ns, fit.tails)))
            self.figure(res, "tail.png", plotting.plot_tail, fit)
        name = "stats.json" if len(parts) == 3 else f"{parts[0]}.json"
        self.write(res, name, doc)

    # standalone tasks ------------------------------------------------------

    def task_preorbit_density(self, res):
        sec = self.cfg["density"]
        point = sec["point"] if sec["point"] is not None else self.source.point.array()
        cert = preorbit_density_certificate(self.f, point, sec["eps"], sec["depth_max"], sec["node_budget"])
        res.checks["dense_preorbit"] = cert.certified
        self.write(res, "preorbit_density.json", {"point": point, **cert.to_dict()})

    def task_zooming_scan(self, res):
        sec = self.cfg["zooming_scan"]
        point = sec["point"] if sec["point"] is not None else [0.1234] * self.f.dim
        zf = zooming_frequency(self.f, np.asarray(point, float), ZoomingContraction(sec["rate"]), sec["delta"], sec["n_max"])
        tail = zf.running[len(zf.running) // 2 :]
        doc = {"point": point, "rate": sec["rate"], "delta": sec["delta"], "n_max": sec["n_max"], "limsup_tail_max": max(tail), **zf.to_dict()}
        res.checks["positive_frequency"] = zf.frequency > 0
        self.write(res, "zooming_scan.json", doc)

    def task_verify_example(self, res):
        sec = self.cfg["verify"]
        f = self.f
        doc = {"map": f.to_dict()}
        if f.name == "perturbed_example":
            g = build_perturbed_example({k: v for k, v in f.to_dict().items() if k != "family"}, grid_resolution=sec["grid"])
            sigma = g.sigma
        else:
            sigma = volume_expansion(f, sec["grid"] if f.dim == 2 else 4096)
        doc["volume_expansion"] = {"grid": sec["grid"], "sigma": sigma}
        res.checks["volume_expanding"] = bool(sigma > 1.0)
        U0 = getattr(f, "U0", None)
        ok, mn = verify_expanding_off_U0(f, U0, sec["grid"])
        doc["expanding_off_U0"] = {"U0": None if U0 is None else U0.to_dict(), "expanding": ok, "min_singular_value": mn, "diam_U0": None if U0 is None else 2 * U0.radius}
        res.checks["expanding_off_U0"] = ok and (U0 is None or 2 * U0.radius < 1)

        fixed = find_periodic_points(f, 1, 64)
        doc["fixed_points"] = [o.to_dict() for o in fixed]

        def nearest(pt):
            return min(fixed, key=lambda o: float(torus_distance(o.point.array(), np.asarray(pt, float))))

        sources = [o for o in fixed if o.classification == "source"]
        r1 = sources[0] if sources else None
        if f.name == "perturbed_example":
            p = nearest(f.p.array())
            reps = f.pitchfork_repellers()
            rs = [nearest(r.array()) for r in reps]
            qs = [nearest(q.array()) for q in f.q_list]
            doc["pitchfork"] = {"p": p.to_dict(), "repellers": [r.to_dict() for r in rs]}
            doc["complex_sites"] = [q.to_dict() for q in qs]
            res.checks["saddle_at_p"] = p.classification == "saddle"
            res.checks["repellers_are_sources"] = len(rs) == 2 and all(r.classification == "source" for r in rs)
            res.checks["complex_expanding_pairs"] = all(q.classification == "source" and q.to_dict()["complex_pair"] for q in qs)
            r1 = rs[0] if rs else r1
            U1 = Ball(U0.center.coords, sec["U1_radius"] if sec["U1_radius"] is not None else 1.1 * U0.radius)
            ok1, margin = verify_preimages_off_U1(f, U1)
            doc["preimages_off_U1"] = {"U1": U1.to_dict(), "ok": ok1, "worst_margin": margin}
            res.checks["preimages_off_U1"] = ok1
            arcs = arc_escape_falsifier(f, U1, sec["arc_length"], sec["arcs"], horizon=sec["arc_horizon"], seed=sub_seed(self.seed, 10), U0=U0)
            doc["arc_escape"] = arcs
            res.checks["arc_escape_sampled"] = arcs["passed"]
        irg_x = sec["irg_point"]
        if irg_x is None:
            irg_x = f.q_list[0].array() if f.name == "perturbed_example" and f.q_list else [1 / 3] * f.dim
        irg_ok, N = verify_irg(f, np.asarray(irg_x, float), sec["irg_steps"], sec["irg_eps"], sec["irg_R"], U0)
        doc["irg"] = {"point": irg_x, "eps": sec["irg_eps"], "R": sec["irg_R"], "holds": irg_ok, "N": N}
        res.checks["irg"] = irg_ok
        dsec = self.cfg["density"]
        point = dsec["point"] if dsec["point"] is not None else (None if r1 is None else r1.point.array())
        if point is not None:
            cert = preorbit_density_certificate(f, point, dsec["eps"], dsec["depth_max"], dsec["node_budget"])
            doc["preorbit_density"] = {"point": point, **cert.to_dict()}
            res.checks["dense_preorbit"] = cert.certified
        doc["checks"] = {k: v for k, v in res.checks.items()}
        self.write(res, "verify_example.json", doc)


STAGE_METHODS = {
    "map": Run.stage_map,
    "periodic": Run.stage_periodic,
    "source-zooming": Run.stage_source_zooming,
    "induced": Run.stage_induced,
    "measures": Run.stage_measures,
    "stats": Run.stage_stats,
}


def run_stages(run: Run, stages, extra=None):
    """Run ``stages`` in order, stopping at the first stage that raises.

    A stage whose certificates fail still hands its objects on; the summary
    records the failure and the exit code names the first failing stage.

    ``extra`` is an optional ``(name, callable)`` run after the stages.
    """
    run.out.mkdir(parents=True, exist_ok=True)
    for name in stages:
        res = run.execute(name, lambda r, m=STAGE_METHODS[name]: m(run, r))
        if res.error is not None:
            return run.summary()
    if extra is not None:
        name, fn = extra
        run.execute(name, lambda r: fn(run, r))
    return run.summary()
