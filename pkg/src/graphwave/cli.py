"""Command line front end: build graphs, run hypothesis checks, verify cutoffs, simulate."""
from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .calculus import distance_laplacian_report
from .conditions import (CONDITIONS, Potential, growth_check, initial_data_report,
                         potential_from_tag, xdelta_norm)
from .cutoff import cutoff_family, verify_cutoff_bounds
from .graph import (homogeneous_tree, lattice_zn, path_graph, product_graph,
                    random_connected_graph, read_graph, write_graph)
from .metric import KINDS, distance_map
from .simulate import integrate_wave, stable_dt, write_series

CHECK_IDS = CONDITIONS + ("distance_laplacian", "initial_data", "xdelta",
                          "cutoff_compact", "cutoff_exponential")
GRAPH_FAMILIES = ("lattice", "tree", "product", "path", "random", "file")


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"config key '{key}': {msg}")
        self.key = key


PRESETS: dict[str, dict] = {
    "example-6.1": {
        "name": "example-6.1",
        "graph": {"family": "lattice", "N": 1, "radius": 60},
        "metric": "euclidean",
        "sigma": 2.0, "alpha": 1.0, "delta": 0.5, "R0": 2.0,
        "R_grid": [5, 8, 12, 18, 25],
        "potential": {"kind": "one"},
        "initial_data": {"u0": {"kind": "delta", "amplitude": 10.0},
                         "u1": {"kind": "delta", "amplitude": 10.0}},
        "checks": ["distance_laplacian", "ball_volume", "annulus", "initial_data", "xdelta"],
        "simulation": {"safety": 0.5, "T": 5.0},
    },
    "example-6.2": {
        "name": "example-6.2",
        "graph": {"family": "tree", "N": 2, "depth": 14},
        "metric": "combinatorial",
        "sigma": 2.0, "alpha": 0.0, "delta": 0.5, "R0": 2.0,
        "R_grid": [2, 3, 5, 8, 12],
        "potential": {"kind": "formula", "tag": "tree_exponential", "params": {"c": 1.0}},
        "initial_data": {"u0": {"kind": "zero"}, "u1": {"kind": "delta", "amplitude": 1.0}},
        "checks": ["distance_laplacian", "ball_g_weighted",
                   {"id": "ball_g_weighted", "label": "ball_g_weighted_exp", "delta": 0.5},
                   {"id": "initial_data", "R_grid": [2, 3, 4, 5, 7]}],
    },
    "example-6.3": {
        "name": "example-6.3",
        "graph": {"family": "product", "N": 2, "radius": 30,
                  "fiber": {"family": "path", "n": 3}},
        "metric": "product",
        "sigma": 2.0, "alpha": 1.0, "delta": 0.5, "R0": 2.0,
        "R_grid": [6, 9, 12, 18, 27],
        "potential": {"kind": "one"},
        "checks": ["distance_laplacian", "ball_volume", "annulus"],
    },
    "finite-7.1": {
        "name": "finite-7.1",
        "graph": {"family": "random", "n": 10, "extra_edges": 5},
        "metric": "combinatorial",
        "sigma": 2.0, "alpha": 0.0, "R0": 2.0,
        "R_grid": [2, 4, 8, 16, 32],
        "potential": {"kind": "one"},
        "initial_data": {"u0": {"kind": "zero"}, "u1": {"kind": "constant", "value": 1.0}},
        "checks": ["finite_time_slab", "initial_data"],
    },
}


@dataclass
class ExperimentConfig:
    graph: dict
    name: str = "experiment"
    metric: str = "combinatorial"
    x0: Optional[int] = None
    sigma: float = 2.0
    alpha: float = 0.0
    delta: Optional[float] = None
    theta1: Optional[float] = None
    theta2: Optional[float] = None
    s: Optional[float] = None
    R0: Optional[float] = None
    R_grid: list = field(default_factory=list)
    potential: dict = field(default_factory=lambda: {"kind": "one"})
    initial_data: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    simulation: Optional[dict] = None
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a mapping")
        known = {f.name for f in fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(key, "unknown key")
        if "graph" not in raw:
            raise ConfigError("graph", "missing")
        cfg = cls(**copy.deepcopy(raw))
        cfg.checks = [_normalize_check(c, i) for i, c in enumerate(cfg.checks)]
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    def validate(self) -> None:
        g = self.graph
        if not isinstance(g, dict) or g.get("family") not in GRAPH_FAMILIES:
            raise ConfigError("graph.family", f"must be one of {', '.join(GRAPH_FAMILIES)}")
        if self.metric not in KINDS or self.metric == "table":
            raise ConfigError("metric", "must be combinatorial, euclidean or product")
        _num(self, "sigma", lambda v: v > 1, "must exceed 1")
        _num(self, "alpha", lambda v: 0 <= v <= 1, "must lie in [0, 1]")
        if self.delta is not None:
            _num(self, "delta", lambda v: v > 0, "must be positive")
        if self.R0 is not None:
            _num(self, "R0", lambda v: v > 1, "must exceed 1")
        if self.theta1 is not None or self.theta2 is not None:
            t1 = 2 * (1 + self.alpha) if self.theta1 is None else self.theta1
            t2 = 4.0 if self.theta2 is None else self.theta2
            if t1 < 2 or t2 < 2 or t1 / t2 < (1 + self.alpha) / 2:
                raise ConfigError("theta1", "need theta1, theta2 >= 2 and theta1/theta2 >= (1+alpha)/2")
        if self.s is not None and self.s <= 2 * self.sigma / (self.sigma - 1):
            raise ConfigError("s", "must exceed 2 sigma/(sigma - 1)")
        R = self.R_grid
        if not isinstance(R, list) or not all(isinstance(r, (int, float)) for r in R):
            raise ConfigError("R_grid", "must be a list of numbers")
        if any(b <= a for a, b in zip(R, R[1:])):
            raise ConfigError("R_grid", "must be strictly increasing")
        if self.potential.get("kind") not in ("one", "table", "formula"):
            raise ConfigError("potential.kind", "must be one, table or formula")
        if self.potential["kind"] == "formula" and self.potential.get("tag") not in (
                "lattice_power", "tree_exponential"):
            raise ConfigError("potential.tag", "must be lattice_power or tree_exponential")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        labels = [c["label"] for c in self.checks]
        if len(set(labels)) != len(labels):
            raise ConfigError("checks", "labels must be unique")
        if self.simulation is not None and not isinstance(self.simulation, dict):
            raise ConfigError("simulation", "must be a mapping")


def _num(cfg, key, ok, msg):
    val = getattr(cfg, key)
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not ok(val):
        raise ConfigError(key, msg)


def _normalize_check(c, i) -> dict:
    if isinstance(c, str):
        c = {"id": c}
    if not isinstance(c, dict) or c.get("id") not in CHECK_IDS:
        raise ConfigError(f"checks[{i}]", f"id must be one of {', '.join(CHECK_IDS)}")
    out = dict(c)
    out.setdefault("label", out["id"])
    return out


def load_config(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        return yaml.safe_load(text)
    return json.loads(text)


# -- building blocks ---------------------------------------------------------------------

def build_from_spec(spec: dict, seed: int = 0, key: str = "graph"):
    fam = spec.get("family")
    try:
        if fam == "lattice":
            return lattice_zn(int(spec["N"]), float(spec["radius"]))
        if fam == "tree":
            return homogeneous_tree(int(spec["N"]), int(spec["depth"]))
        if fam == "path":
            return path_graph(int(spec["n"]))
        if fam == "random":
            return random_connected_graph(int(spec["n"]), int(spec.get("extra_edges", 0)), seed)
        if fam == "file":
            return read_graph(spec["path"])
        if fam == "product":
            W = build_from_spec(spec["fiber"], seed, key + ".fiber")
            return product_graph(int(spec["N"]), float(spec["radius"]), W, spec.get("w0"))
    except KeyError as exc:
        raise ConfigError(f"{key}.{exc.args[0]}", "missing") from None
    raise ConfigError(f"{key}.family", f"unknown family {fam!r}")


def make_potential(cfg: ExperimentConfig, d) -> Potential:
    p = cfg.potential
    if p["kind"] == "one":
        return Potential.one()
    if p["kind"] == "table":
        vals = p.get("values")
        if vals is None or len(vals) != d.graph.n:
            raise ConfigError("potential.values", f"need {d.graph.n} positive values")
        return Potential.from_table(vals)
    return potential_from_tag(p["tag"], d, cfg.sigma, **p.get("params", {}))


def make_data(spec: Optional[dict], g, d, key: str) -> np.ndarray:
    spec = spec or {"kind": "zero"}
    kind = spec.get("kind")
    if kind == "zero":
        return np.zeros(g.n)
    if kind == "delta":
        out = np.zeros(g.n)
        out[int(spec.get("at", d.x0))] = float(spec.get("amplitude", 1.0))
        return out
    if kind == "constant":
        return np.full(g.n, float(spec.get("value", 1.0)))
    if kind == "gaussian":
        w = float(spec.get("width", 1.0))
        return float(spec.get("amplitude", 1.0)) * np.exp(-(d.dist / w) ** 2)
    if kind == "table":
        vals = np.asarray(spec.get("values", []), dtype=float)
        if vals.shape != (g.n,):
            raise ConfigError(f"{key}.values", f"need {g.n} values")
        return vals
    raise ConfigError(f"{key}.kind", "must be zero, delta, constant, gaussian or table")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def _entry(label, verdict, slope=None, sup=None, constants=None, data=None, notes=None):
    return {"id": label, "verdict": "pass" if verdict else "fail", "fitted_slope": slope,
            "sup_ratio": sup, "constants": constants or {}, "data_points": data or [],
            "notes": notes or []}


def run_check(check: dict, cfg: ExperimentConfig, g, d, v) -> dict:
    cid, label = check["id"], check["label"]
    R_grid = check.get("R_grid", cfg.R_grid)
    if cid in CONDITIONS:
        verdict = growth_check(
            g, d, v, cfg.sigma, cfg.alpha, cid, R_grid,
            theta1=check.get("theta1", cfg.theta1), theta2=check.get("theta2", cfg.theta2),
            delta=check.get("delta", cfg.delta if cid.startswith("exp") else None),
            dt_quad=check.get("dt_quad"), R0=check.get("R0", cfg.R0),
            slope_tol=check.get("slope_tol", 0.05), target=check.get("target"),
        )
        data = [{"R": r, "lhs": y} for r, y in zip(verdict.R_grid, verdict.lhs_values)]
        return _entry(label, verdict.holds, verdict.fitted_slope, verdict.sup_ratio,
                      {"target_exponent": verdict.target_exponent, "slope_tol": verdict.slope_tol},
                      data, verdict.notes)
    if cid == "distance_laplacian":
        rep = distance_laplacian_report(g, d, cfg.alpha, check.get("R0", cfg.R0 or 2.0))
        ok = all(np.isfinite([rep.sup_one_sided, rep.sup_two_sided, rep.sup_power]))
        ok = ok and not rep.forward_violations and not rep.backward_violations
        return _entry(label, ok, constants=rep.to_dict())
    data_u0 = make_data(cfg.initial_data.get("u0"), g, d, "initial_data.u0")
    data_u1 = make_data(cfg.initial_data.get("u1"), g, d, "initial_data.u1")
    if cid == "initial_data":
        rep = initial_data_report(g, d, data_u1, R_grid)
        data = [{"R": r, "S": s} for r, s in zip(rep.R_grid, rep.S_values)]
        return _entry(label, rep.liminf_nonnegative and rep.total_nonnegative,
                      constants={"total": rep.total, "liminf_proxy": rep.liminf_proxy}, data=data)
    if cid == "xdelta":
        delta = check.get("delta", cfg.delta)
        if delta is None:
            raise ConfigError("delta", "xdelta check needs delta")
        reps = {k: xdelta_norm(g, d, delta, f) for k, f in (("u0", data_u0), ("u1", data_u1))}
        data = [{"function": k, "value": r.value, "converged": r.converged} for k, r in reps.items()]
        return _entry(label, all(r.converged for r in reps.values()), data=data)
    family = "compact" if cid == "cutoff_compact" else "exponential"
    delta = check.get("delta", cfg.delta)
    fam = cutoff_family(g, d, family, R_grid[0], alpha=cfg.alpha, sigma=cfg.sigma, s=cfg.s,
                        theta1=cfg.theta1, theta2=cfg.theta2, delta=delta,
                        R0=check.get("R0", cfg.R0 or 1.0))
    rep = verify_cutoff_bounds(fam, R_grid, n_t=int(check.get("n_t", 400)))
    return _entry(label, rep.passed, constants={"constants": rep.constants,
                                                "violations": rep.violations,
                                                "spread": rep.spread, "extras": rep.extras})


def run_simulation(cfg: ExperimentConfig, g, d, v, out: Path, index: int = 0) -> dict:
    sim = dict(cfg.simulation or {})
    dt = sim.get("dt") or stable_dt(g, float(sim.get("safety", 0.5)))
    u0 = make_data(cfg.initial_data.get("u0"), g, d, "initial_data.u0")
    u1 = make_data(cfg.initial_data.get("u1"), g, d, "initial_data.u1")
    traj = integrate_wave(g, v, cfg.sigma, u0, u1, float(dt), float(sim.get("T", 10.0)),
                          sim.get("threshold"), sim.get("boundary", "zero_exterior"),
                          stride=int(sim.get("stride", 1)), delta=cfg.delta, metric=d)
    name = f"series_{index}.csv"
    write_series(traj, out / name)
    return {"status": traj.status, "blowup_time": traj.blowup_time, "series_path": name,
            "boundary_clean": traj.boundary_clean, "dt": traj.dt, "steps": traj.last_step,
            "blowup_step": traj.blowup_step}


def _threads() -> int:
    raw = os.environ.get("GRAPHWAVE_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError("GRAPHWAVE_THREADS", "must be an integer") from None


def run_experiment(cfg: ExperimentConfig, out: Path, mode: str = "run") -> tuple[int, dict]:
    """Execute the selected checks and simulation, write report.json; return (exit code, report)."""
    out.mkdir(parents=True, exist_ok=True)
    g = build_from_spec(cfg.graph, cfg.seed)
    d = distance_map(g, cfg.metric, cfg.x0, seed=cfg.seed)
    v = make_potential(cfg, d)
    checks = cfg.checks
    if mode == "verify-bounds":
        checks = [c for c in checks if c["id"].startswith("cutoff")] or [
            _normalize_check("cutoff_compact", 0), _normalize_check("cutoff_exponential", 1)]
    elif mode == "simulate":
        checks = []
    elif mode not in ("run", "check"):
        raise ValueError(f"unknown mode {mode!r}")
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda c: run_check(c, cfg, g, d, v), checks))
    sims = []
    if mode in ("run", "simulate") and cfg.simulation is not None:
        sims.append(run_simulation(cfg, g, d, v, out))
    report = _clean({
        "config_echo": cfg.to_dict(),
        "graph_summary": g.summary(),
        "checks": results,
        "simulations": sims,
    })
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    meta = {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(), "version": __version__,
            "mode": mode}
    (out / "metadata.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    code = 0 if all(r["verdict"] == "pass" for r in results) else 2
    return code, report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphwave", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("build", "build the graph and write its description file"),
                        ("check", "run hypothesis checks"),
                        ("simulate", "run the configured simulation"),
                        ("verify-bounds", "verify cutoff-function bounds"),
                        ("run", "run every selected check and the simulation")):
        sp = sub.add_parser(name, help=help_)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="JSON or YAML experiment config")
        src.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--out", default="graphwave-out", help="output directory")
        sp.add_argument("--metric", choices=["combinatorial", "euclidean", "product"])
        sp.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = copy.deepcopy(PRESETS[args.preset]) if args.preset else load_config(args.config)
        if args.metric is not None:
            raw["metric"] = args.metric
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(raw)
        out = Path(args.out)
        if args.command == "build":
            out.mkdir(parents=True, exist_ok=True)
            g = build_from_spec(cfg.graph, cfg.seed)
            write_graph(g, out / "graph.txt")
            print(json.dumps(_clean(g.summary()), sort_keys=True))
            return 0
        code, report = run_experiment(cfg, out, args.command)
        for r in report["checks"]:
            print(f"{r['id']}: {r['verdict']}")
        for s in report["simulations"]:
            print(f"simulation: {s['status']} (blowup_time={s['blowup_time']})")
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
