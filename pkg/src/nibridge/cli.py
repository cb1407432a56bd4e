"""Command-line runner.

    python -m nibridge <command> --config run.json --out results/

Commands: simulate, limitshape, edgestats, rigidity, dominance, tw2.  The
config is a JSON object; ``"preset"`` expands to the boundary data of a
named experiment and any other key overrides a default.  Every run writes
``manifest.json`` (config echo, seeds, versions, artifact list) and
``timestamps.json`` (clock times and wall times), so all other artifacts
are byte-identical on rerun.

Exit status: 0 ok, 2 invalid input, 3 numerical failure.  Errors are
reported as one JSON object on stderr (and in ``error.json`` when the
output directory exists).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import json
import math
import os
import platform
import sys
import time
import warnings
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from . import airy, burgers, measures, sde, stats
from .errors import NibridgeError, UsageError, ValidationError

COMMANDS = ("simulate", "limitshape", "edgestats", "rigidity", "dominance", "tw2")

PRESETS = {
    "watermelon": {"mu_a": "point(0)", "mu_b": "point(0)"},
    "semicircle-to-semicircle": {"mu_a": "semicircle(2)", "mu_b": "semicircle(2)"},
}


@dataclass
class ExperimentConfig:
    preset: str | None = None
    mu_a: str | None = None
    mu_b: str | None = None
    n: int | list = 64
    samples: int = 200
    seed: int = 0
    workers: int = 1
    mode: str = "meanfield"
    times: list | None = None
    t: float = 0.5
    side: str = "right"
    dt_max: float = 1e-3
    dt_edge_factor: float = 0.1
    t_start: float = 1e-4
    points: int = measures.DEFAULT_POINTS
    quantile_nodes: int = 320
    time_nodes: int = 160
    closed_form: bool = True
    shift: float = 0.1
    alpha: float = 0.01
    z: list = dataclasses.field(default_factory=lambda: [[0.0, 1.0]])
    s: list | None = None

    @classmethod
    def from_dict(cls, raw, base_dir="."):
        if not isinstance(raw, dict):
            raise ValidationError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        data = dict(raw)
        preset = data.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            for key, value in PRESETS[preset].items():
                data.setdefault(key, value)
        for key in ("mu_a", "mu_b"):
            value = data.get(key)
            # relative CSV paths are resolved against the config file
            if isinstance(value, str) and value.lower().endswith(".csv"):
                path = Path(value)
                data[key] = str(path if path.is_absolute() else Path(base_dir) / path)
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        ns = self.n if isinstance(self.n, list) else [self.n]
        if not ns or any(not isinstance(v, int) or isinstance(v, bool) or v < 1 for v in ns):
            raise ValidationError("n must be a positive integer or a list of them")
        for key in ("samples", "workers", "points", "quantile_nodes", "time_nodes"):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"{key} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")
        if self.side not in ("left", "right"):
            raise ValidationError("side must be 'left' or 'right'")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if not 0 < self.t < 1:
            raise ValidationError("t must lie in (0, 1)")

    @property
    def n_list(self):
        return self.n if isinstance(self.n, list) else [self.n]

    def to_dict(self):
        return dataclasses.asdict(self)


# ------------------------------------------------------------------ inputs

def _measure(spec, points):
    if spec is None:
        raise ValidationError("mu_a and mu_b are required (or a preset)")
    if spec.lower().endswith(".csv"):
        path = Path(spec)
        if not path.exists():
            raise ValidationError(f"input file {spec} does not exist")
        with path.open() as fh:
            first = next((ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")), "")
        if "," in first:
            return measures.load_density_csv(path)
        return measures.load_atomic_csv(path)
    return measures.named(spec, points=points)


def _configuration(mu, n):
    if isinstance(mu, measures.AtomicMeasure) and mu.atoms.size == 1:
        return float(mu.atoms[0])
    return tuple(measures.quantiles(mu, n).tolist())


def assumption_warnings(mu_b):
    """Regularity checks on the terminal data; sufficient conditions, so only warnings."""
    out = []
    if isinstance(mu_b, measures.AtomicMeasure):
        out.append("terminal measure is atomic: the single-interval / bounded-below "
                   "regularity conditions do not apply")
        return out
    x, v = mu_b.grid, mu_b.values
    lo, hi = mu_b.support
    inside = (x > lo) & (x < hi)
    if np.any(v[inside] <= 0):
        out.append("terminal density vanishes inside its support: support may not be a single interval")
    core = (x > lo + 0.05 * (hi - lo)) & (x < hi - 0.05 * (hi - lo))
    if np.any(core) and v[core].min() < 1e-3 * v.max():
        out.append("terminal density is not bounded below on its support")
    return out


class _Setup:
    """Resolved boundary data of one run."""

    def __init__(self, cfg, n):
        self.cfg = cfg
        self.n = n
        self.mu_a = _measure(cfg.mu_a, cfg.points)
        self.mu_b = _measure(cfg.mu_b, cfg.points)
        a = _configuration(self.mu_a, n)
        self.a = (a,) * n if isinstance(a, float) else a
        self.b = _configuration(self.mu_b, n)

    def spec(self, times, samples=None, seed=None, shift=0.0):
        """Bridge spec; ``shift`` moves the terminal configuration only."""
        cfg = self.cfg
        b = self.b + shift if isinstance(self.b, float) else tuple(np.array(self.b) + shift)
        return sde.BridgeSpec(
            self.n, self.a, b, tuple(times), drift_mode=cfg.mode, dt_max=cfg.dt_max,
            dt_edge_factor=cfg.dt_edge_factor, seed=cfg.seed if seed is None else seed,
            samples=cfg.samples if samples is None else samples, t_start=cfg.t_start)

    def shape(self, times, shift=0.0):
        cfg = self.cfg
        mu_a, mu_b = self.mu_a, self.mu_b.shifted(shift) if shift else self.mu_b
        grid = sorted(set(float(t) for t in times if 0 <= t <= 1))
        if not any(0 < t < 1 for t in grid):
            raise ValidationError("need at least one time inside (0, 1)")
        return burgers.solve_characteristics(
            mu_a, mu_b, grid, quantile_nodes=cfg.quantile_nodes, time_nodes=cfg.time_nodes,
            points=cfg.points, closed_form=cfg.closed_form)

    def simulate(self, spec, shape, workers):
        if spec.drift_mode == "meanfield":
            return sde.simulate_meanfield(spec, shape, workers=workers)
        return sde.simulate_bridge(spec, workers=workers)


def _shape_times(cfg, spec_times):
    """Slices for a mean-field run: dense from the start time to the last record time."""
    t = [v for v in spec_times if 0 < v < 1]
    a_tied = cfg.mu_a is not None and cfg.mu_a.replace(" ", "").startswith("point(")
    start = cfg.t_start if a_tied else 0.0
    # g is interpolated linearly in time between slices
    return sorted(set(t) | set(np.linspace(start, max(t), 41).tolist()))


# --------------------------------------------------------------- reporting

@dataclass
class Report:
    """What the plot-data writer can draw from; fields are filled as available."""

    t: float
    shape: object = None
    ensemble: object = None
    edge: object = None
    rigidity: object = None
    table: object = None


PLOT_KINDS = ("density", "cdf", "rigidity")


def emit_plotdata(report, kind, out_dir):
    """Write a plot-ready CSV and return its path.

    ``density``: ``x, rho, rho_hat`` over the shape grid at ``report.t``;
    ``cdf``: ``s, F2, F_hat`` over the TW2 table grid;
    ``rigidity``: ``rank, median_dev``.
    """
    if kind not in PLOT_KINDS:
        raise UsageError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "density":
        if report.shape is None or report.ensemble is None or report.ensemble.samples == 0:
            raise UsageError("density overlay needs a shape and a non-empty ensemble")
        dens = report.shape.density_at(report.t)
        x = report.ensemble.slice(report.t).ravel()
        lo, hi = dens.support
        bins = int(min(100, max(10, math.sqrt(x.size))))
        hist, edges = np.histogram(x, bins=bins, range=(lo, hi))
        hist = hist / (x.size * (edges[1] - edges[0]))
        idx = np.clip(np.searchsorted(edges, dens.grid, side="right") - 1, 0, bins - 1)
        rows = zip(dens.grid, dens.values, hist[idx])
        path, header = out / "density_overlay.csv", ["x", "rho", "rho_hat"]
    elif kind == "cdf":
        if report.edge is None or report.edge.eta.size == 0:
            raise UsageError("CDF overlay needs a non-empty edge sample")
        table = report.table if report.table is not None else airy.default_table()
        eta = np.sort(report.edge.eta)
        f_hat = np.searchsorted(eta, table.s_grid, side="right") / eta.size
        rows = zip(table.s_grid, table.cdf, f_hat)
        path, header = out / "cdf_overlay.csv", ["s", "F2", "F_hat"]
    else:
        if report.rigidity is None or report.rigidity.samples == 0:
            raise UsageError("rigidity curve needs a non-empty rigidity report")
        med = report.rigidity.median_dev
        rows = zip(range(1, med.size + 1), med)
        path, header = out / f"rigidity_curve_n{report.rigidity.n}.csv", ["rank", "median_dev"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, int) else repr(float(v)) for v in row])
    return path


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _versions():
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


# ---------------------------------------------------------------- commands

def _cmd_simulate(cfg, out, clock):
    times = cfg.times or [0.25, 0.5, 0.75]
    setup = _Setup(cfg, cfg.n_list[0])
    spec = setup.spec(times)
    shape = None
    with clock("shape"):
        if spec.drift_mode == "meanfield" or cfg.t in times:
            shape = setup.shape(_shape_times(cfg, times))
    with clock("simulate"):
        ens = setup.simulate(spec, shape, cfg.workers)
    ens.to_csv(out / "paths.csv")
    ens.to_binary(out / "paths.bin")
    files = ["paths.csv", "paths.bin"]
    if shape is not None and cfg.t in times:
        files.append(emit_plotdata(Report(cfg.t, shape=shape, ensemble=ens), "density", out).name)
    _write_json(out / "simulate_summary.json", {"diagnostics": ens.diagnostics, "samples": ens.samples,
                                                "n": ens.n, "times": list(ens.times)})
    return files + ["simulate_summary.json"], {"seed": cfg.seed}, setup


def _cmd_limitshape(cfg, out, clock):
    times = cfg.times or [0.25, 0.5, 0.75]
    setup = _Setup(cfg, cfg.n_list[0])
    with clock("shape"):
        shape = setup.shape(times)
    shape.to_json(out / "shape.json")
    with (out / "edges.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "left", "right", "s_left", "s_right"])
        for t in shape.times:
            (a, sa), (b, sb) = shape.edge_at(t, "left"), shape.edge_at(t, "right")
            w.writerow([repr(float(v)) for v in (t, a, b, sa, sb)])
    return ["shape.json", "edges.csv"], {}, setup


def _edge_run(cfg, clock, n, seed):
    setup = _Setup(cfg, n)
    spec = setup.spec([cfg.t], seed=seed)
    with clock(f"shape_n{n}"):
        shape = setup.shape(_shape_times(cfg, [cfg.t]))
    with clock(f"simulate_n{n}"):
        ens = setup.simulate(spec, shape, cfg.workers)
    return setup, shape, ens


def _cmd_edgestats(cfg, out, clock):
    setup, shape, ens = _edge_run(cfg, clock, cfg.n_list[0], cfg.seed)
    edge = stats.edge_statistics(ens, shape, cfg.t, cfg.side)
    table = airy.default_table()
    edge.to_csv(out / "edge_samples.csv")
    mean, var = table.moments()
    summary = {
        "t": cfg.t, "side": cfg.side, "samples": int(edge.eta.size), "scaling": edge.scaling(),
        "ks_tw2": stats.ks_distance(edge.eta, table),
        "mean": float(np.mean(edge.eta)), "variance": float(np.var(edge.eta, ddof=1)),
        "tw2_mean": mean, "tw2_variance": var, "diagnostics": ens.diagnostics,
    }
    _write_json(out / "edge_summary.json", summary)
    emit_plotdata(Report(cfg.t, edge=edge, table=table), "cdf", out)
    return ["edge_samples.csv", "edge_summary.json", "cdf_overlay.csv"], {"seed": cfg.seed}, setup


def _cmd_rigidity(cfg, out, clock):
    zs = [complex(*z) if isinstance(z, list) else complex(z) for z in cfg.z]
    rows, files, setup = [], [], None
    for n in cfg.n_list:
        setup, shape, ens = _edge_run(cfg, clock, n, cfg.seed)
        rep = stats.rigidity_report(ens, shape, cfg.t)
        st = stats.stieltjes_compare(ens, shape, cfg.t, zs)
        rep.to_json(out / f"rigidity_n{n}.json")
        files += [f"rigidity_n{n}.json", emit_plotdata(Report(cfg.t, rigidity=rep), "rigidity", out).name]
        rows.append({"n": n, "bulk_median": rep.bulk_median, "stieltjes": st})
    for prev, cur in zip(rows, rows[1:]):
        cur["bulk_ratio"] = prev["bulk_median"] / cur["bulk_median"]
    _write_json(out / "rigidity_summary.json", {"t": cfg.t, "runs": rows})
    return files + ["rigidity_summary.json"], {"seed": cfg.seed}, setup


def _cmd_dominance(cfg, out, clock):
    times = cfg.times or [0.25, 0.5, 0.75]
    setup = _Setup(cfg, cfg.n_list[0])
    # independent noise for the two ensembles: the band assumes independent samples
    seeds = {"lower": cfg.seed, "upper": cfg.seed + 1}
    lo_spec = setup.spec(times, seed=seeds["lower"])
    hi_spec = setup.spec(times, seed=seeds["upper"], shift=cfg.shift)
    shape_lo = shape_hi = None
    with clock("shape"):
        if cfg.mode == "meanfield":
            shape_lo = setup.shape(_shape_times(cfg, times))
            shape_hi = setup.shape(_shape_times(cfg, times), shift=cfg.shift)
    with clock("simulate"):
        lo = setup.simulate(lo_spec, shape_lo, cfg.workers)
        hi = setup.simulate(hi_spec, shape_hi, cfg.workers)
    results = [stats.dominance_test(hi, lo, t, cfg.alpha).to_dict() for t in times if 0 < t < 1]
    violations = sum(len(r["violations"]) for r in results)
    _write_json(out / "dominance.json", {"shift": cfg.shift, "alpha": cfg.alpha, "results": results,
                                        "violations": violations})
    return ["dominance.json"], seeds, setup


def _cmd_tw2(cfg, out, clock):
    with clock("table"):
        table = airy.default_table()
    mean, var = table.moments()
    values = [{"s": float(s), "F2": airy.tw2_cdf(float(s))} for s in (cfg.s or [])]
    for v in values:
        print(json.dumps(v))
    if out is None:
        return [], {}, None
    table.to_csv(out / "tw2_table.csv")
    _write_json(out / "tw2.json", {"values": values, "mean": mean, "variance": var})
    return ["tw2_table.csv", "tw2.json"], {}, None


_COMMANDS = {
    "simulate": _cmd_simulate, "limitshape": _cmd_limitshape, "edgestats": _cmd_edgestats,
    "rigidity": _cmd_rigidity, "dominance": _cmd_dominance, "tw2": _cmd_tw2,
}


class _Clock:
    def __init__(self):
        self.walls = {}

    def __call__(self, name):
        clock = self

        class _Span:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                clock.walls[name] = clock.walls.get(name, 0.0) + time.perf_counter() - self.t0
        return _Span()


def _error_payload(exc, code):
    payload = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    details = getattr(exc, "diagnostics", None)
    if details:
        payload["diagnostics"] = details
    for key in ("t", "rcond", "mismatch", "iterations"):
        v = getattr(exc, key, None)
        if v is not None:
            payload[key] = float(v)
    return payload


def run(command, config_path=None, out_dir=None, seed=None, workers=None, s=None):
    """Run one command; returns the exit status."""
    out = Path(out_dir) if out_dir is not None else None
    try:
        if command not in _COMMANDS:
            raise UsageError(f"unknown command {command!r}")
        if config_path is not None:
            path = Path(config_path)
            if not path.exists():
                raise ValidationError(f"config file {config_path} does not exist")
            try:
                raw = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config is not valid JSON: {exc}") from exc
            base = path.parent
        elif command == "tw2":
            raw, base = {}, Path(".")
        else:
            raise ValidationError("--config is required")
        if seed is not None:
            raw["seed"] = seed
        if workers is not None:
            raw["workers"] = workers
        if s:
            raw["s"] = list(s)
        cfg = ExperimentConfig.from_dict(raw, base)
        if out is None and command != "tw2":
            raise ValidationError("--out is required")
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        clock = _Clock()
        started = datetime.datetime.now(datetime.timezone.utc)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            files, seeds, setup = _COMMANDS[command](cfg, out, clock)
        notes = [str(w.message) for w in caught]
        if setup is not None:
            notes = assumption_warnings(setup.mu_b) + notes
        for note in notes:
            print(f"warning: {note}", file=sys.stderr)
        if out is not None:
            _write_json(out / "manifest.json", {
                "command": command, "config": cfg.to_dict(), "seeds": seeds,
                "versions": _versions(), "warnings": notes, "artifacts": sorted(files),
                "timing_file": "timestamps.json",
            })
            _write_json(out / "timestamps.json", {
                "started": started.isoformat(),
                "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
                "wall_seconds": clock.walls,
            })
        return 0
    except ValidationError as exc:
        return _fail(exc, 2, out)
    except (NibridgeError, FloatingPointError) as exc:
        return _fail(exc, 3, out)


def _fail(exc, code, out):
    payload = _error_payload(exc, code)
    print(json.dumps(payload), file=sys.stderr)
    if out is not None and out.is_dir():
        _write_json(out / "error.json", payload)
    return code


def build_parser():
    parser = argparse.ArgumentParser(prog="nibridge", description="Nonintersecting Brownian bridge experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="override the config worker count (0: all CPUs)")
        if name == "tw2":
            p.add_argument("--s", type=float, action="append", help="evaluate F2 at this point (repeatable)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers is not None and args.workers < 1:
        args.workers = os.cpu_count() or 1
    return run(args.command, args.config, args.out, args.seed, args.workers, getattr(args, "s", None))


if __name__ == "__main__":
    sys.exit(main())
