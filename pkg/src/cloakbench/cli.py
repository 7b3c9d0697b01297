"""Command-line experiment runner.

Usage::

    cloakbench <experiment> --config cfg.json [--out PREFIX] [--jobs K] [--emit-plot]
    cloakbench validate --config cfg.json

Experiments: ``convergence``, ``delta-sweep``, ``theorem61``, ``lemma42``,
``material-map``, ``absorption-check``, ``solve``.  Exit status is 0 when
every check passes, 1 when a fit misses its window, 2 for configuration
errors (nothing is written) and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import metrics as mt
from . import solver as sv
from .material import CloakConfig, MaterialError, cloak_assembly, material_map_export
from .sobolev import ModalDensity, SobolevError, default_probe
from .specfun import SpecfunError

EXPERIMENTS = ("convergence", "delta-sweep", "theorem61", "lemma42", "material-map", "absorption-check", "solve")

EXIT_PASS, EXIT_FIT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_CLOAK_KEYS = tuple(f.name for f in fields(CloakConfig))
_TOP_KEYS = ("experiment", "cloak", "sweep", "probe", "metric", "inclusion", "material", "out", "emit_plot", "jobs")
_SWEEP_KEYS = ("lo", "hi", "count", "values")
_INCLUSION_KEYS = ("r0", "r2", "omega")
_MATERIAL_KEYS = ("R1", "R2", "points")
_METRICS = ("trace_gap", "ntd_opnorm", "conormal")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str
    cloak: CloakConfig
    sweep: list = field(default_factory=list)
    probe: ModalDensity | None = None
    metric: str = "trace_gap"
    inclusion: dict = field(default_factory=dict)
    material: dict = field(default_factory=dict)
    out: str | None = None
    emit_plot: bool = False
    jobs: int = 1


# ---------------------------------------------------------------------------
# Parsing


def _reject_unknown(obj: dict, allowed, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _no_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where} must be a finite number")
    return float(value)


def _grid(spec: dict, default: tuple, where: str) -> list[float]:
    _reject_unknown(spec, _SWEEP_KEYS, where)
    if "values" in spec:
        if set(spec) - {"values"}:
            raise ConfigError(f"{where}: give either 'values' or lo/hi/count")
        vals = [_number(v, f"{where}.values") for v in spec["values"]]
    else:
        lo = _number(spec.get("lo", default[0]), f"{where}.lo")
        hi = _number(spec.get("hi", default[1]), f"{where}.hi")
        count = spec.get("count", default[2])
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise ConfigError(f"{where}.count must be a positive integer")
        if not 0 < lo < hi:
            raise ConfigError(f"{where}: need 0 < lo < hi")
        vals = mt.log_grid(lo, hi, count)
    if any(v <= 0 for v in vals):
        raise ConfigError(f"{where}: values must be positive")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"{where}: grid must be strictly increasing")
    return vals


def _probe(spec, dimension: int, radius: float) -> ModalDensity:
    if spec is None or spec == "default":
        return default_probe(dimension, radius)
    if not isinstance(spec, dict):
        raise ConfigError("probe must be \"default\" or an object with 'coefficients'")
    _reject_unknown(spec, ("coefficients",), "probe")
    coeffs = {}
    width = 3 if dimension == 2 else 4
    for entry in spec["coefficients"]:
        if not isinstance(entry, list) or len(entry) != width:
            raise ConfigError(f"probe coefficients are [{'n' if dimension == 2 else 'n, m'}, re, im] lists")
        idx = entry[:-2]
        if any(isinstance(i, bool) or not isinstance(i, int) for i in idx):
            raise ConfigError("probe indices must be integers")
        key = idx[0] if dimension == 2 else tuple(idx)
        coeffs[key] = complex(_number(entry[-2], "probe re"), _number(entry[-1], "probe im"))
    try:
        return ModalDensity(dimension, radius, coeffs)
    except SobolevError as exc:
        raise ConfigError(str(exc)) from exc


_SWEEP_DEFAULTS = {
    "convergence": (1e-3, 10**-1.5, 8),
    "theorem61": (1e-3, 10**-1.5, 8),
    "lemma42": (1e-3, 1e-1, 6),
    "absorption-check": (0.05, 0.1, 2),
}


def parse_config(raw: dict, experiment: str) -> ExperimentConfig:
    """Validate a decoded JSON config for ``experiment``.

    Every sweep point is turned into a :class:`CloakConfig` here so invalid
    parameters are reported before any computation or output.
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    _reject_unknown(raw, _TOP_KEYS, "config")
    if "experiment" in raw and raw["experiment"] != experiment:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {experiment!r}")
    cloak_raw = raw.get("cloak", {})
    _reject_unknown(cloak_raw, _CLOAK_KEYS, "cloak")
    try:
        cloak = CloakConfig(**cloak_raw)
    except (TypeError, MaterialError, ValueError) as exc:
        raise ConfigError(f"cloak: {exc}") from exc

    cfg = ExperimentConfig(experiment, cloak)
    if experiment == "delta-sweep":
        cfg.sweep = _grid(raw.get("sweep", {"values": [1, 2, 4, 8]}), (1.0, 8.0, 4), "sweep")
    elif experiment in _SWEEP_DEFAULTS:
        default = _SWEEP_DEFAULTS[experiment]
        cfg.sweep = _grid(raw.get("sweep", {}), default, "sweep")
    elif "sweep" in raw:
        raise ConfigError(f"{experiment} takes no sweep")

    metric = raw.get("metric", "trace_gap")
    if metric not in _METRICS:
        raise ConfigError(f"metric must be one of {', '.join(_METRICS)}")
    if metric != "trace_gap" and experiment != "convergence":
        raise ConfigError("metric applies to the convergence experiment only")
    cfg.metric = metric

    inc = raw.get("inclusion", {})
    _reject_unknown(inc, _INCLUSION_KEYS, "inclusion")
    cfg.inclusion = {k: _number(inc.get(k, d), f"inclusion.{k}") for k, d in
                     (("r0", 1.0), ("r2", 3.0), ("omega", cloak.omega))}
    mat = raw.get("material", {})
    _reject_unknown(mat, _MATERIAL_KEYS, "material")
    points = mat.get("points", 100)
    if isinstance(points, bool) or not isinstance(points, int) or points < 2:
        raise ConfigError("material.points must be an integer >= 2")
    cfg.material = {"R1": _number(mat.get("R1", 1.0), "material.R1"),
                    "R2": _number(mat.get("R2", cloak.R), "material.R2"), "points": points}

    radius = cfg.inclusion["r0"] if experiment == "lemma42" else cloak.R
    cfg.probe = _probe(raw.get("probe"), cloak.dimension, radius)

    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out must be a string")
    cfg.out = out
    emit = raw.get("emit_plot", False)
    if not isinstance(emit, bool):
        raise ConfigError("emit_plot must be true or false")
    cfg.emit_plot = emit
    jobs = raw.get("jobs", 1)
    if isinstance(jobs, bool) or not isinstance(jobs, int) or jobs < 1:
        raise ConfigError("jobs must be a positive integer")
    cfg.jobs = jobs

    # eager validation of every parameter point
    try:
        for value in cfg.sweep:
            _point_config(cfg, value)
        if experiment == "lemma42":
            for tau in cfg.sweep:
                sv.InclusionProblem(cfg.inclusion["omega"], tau, _inclusion_probe(cfg, tau),
                                    cfg.inclusion["r0"], cfg.inclusion["r2"])
        if experiment == "material-map":
            cloak_assembly(cloak, cfg.material["R1"], cfg.material["R2"])
    except (MaterialError, SpecfunError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str, experiment: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh, object_pairs_hook=_no_duplicates)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return parse_config(raw, experiment)


# ---------------------------------------------------------------------------
# Evaluation


def _point_config(cfg: ExperimentConfig, value: float) -> CloakConfig:
    if cfg.experiment in ("convergence", "theorem61", "absorption-check"):
        return cfg.cloak.with_(rho=value)
    if cfg.experiment == "delta-sweep":
        return cfg.cloak.with_(delta=value)
    return cfg.cloak


def _inclusion_probe(cfg: ExperimentConfig, tau: float) -> ModalDensity:
    return ModalDensity(cfg.probe.dimension, tau, dict(cfg.probe.coefficients))


def evaluate_point(cfg: ExperimentConfig, value: float) -> mt.SweepSample:
    """Measure one sweep point; the CSV row for ``value`` is exactly this sample."""
    exp = cfg.experiment
    if exp == "lemma42":
        p = sv.InclusionProblem(cfg.inclusion["omega"], value, _inclusion_probe(cfg, value),
                                cfg.inclusion["r0"], cfg.inclusion["r2"])
        r0, r2, l2 = mt.inclusion_gap_norms(p)
        return mt.SweepSample(value, mt.inclusion_ratio(p), {"h12_r0": r0, "h12_r2": r2, "l2_shell": l2})
    c = _point_config(cfg, value)
    psi = cfg.probe
    if exp == "convergence":
        if cfg.metric == "ntd_opnorm":
            return mt.SweepSample(value, mt.ntd_diff_opnorm(c))
        if cfg.metric == "conormal":
            return mt.SweepSample(value, mt.conormal_norm(c, psi))
        return mt.SweepSample(value, mt.trace_gap(c, psi), {"n_max": psi.n_max})
    if exp == "theorem61":
        return mt.SweepSample(value, mt.sound_hard_gap(c, psi), {"n_max": psi.n_max})
    if exp == "delta-sweep":
        return mt.SweepSample(value, mt.conormal_norm(c, psi), {"rho": c.rho})
    if exp == "absorption-check":
        bal = mt.energy_identity(sv.solve_cloak(c, psi))
        return mt.SweepSample(value, bal.residual, {"absorbed": bal.absorbed, "boundary": bal.boundary})
    raise ValueError(exp)


class PointFailure(RuntimeError):
    def __init__(self, value, exc):
        super().__init__(f"numerical failure at parameter {value!r}: {type(exc).__name__}: {exc}")
        self.value = value


def _safe_point(args):
    cfg, value = args
    try:
        return evaluate_point(cfg, value)
    except (SpecfunError, sv.SolverError, ArithmeticError, mt.MetricsError) as exc:
        raise PointFailure(value, exc) from None


def run_sweep(cfg: ExperimentConfig) -> list[mt.SweepSample]:
    tasks = [(cfg, v) for v in cfg.sweep]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(_safe_point, tasks))
    return [_safe_point(t) for t in tasks]


# ---------------------------------------------------------------------------
# Output


def fmt(x) -> str:
    """Shortest round-trip decimal for floats; plain text otherwise."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _diag_text(d: dict) -> str:
    return ";".join(f"{k}={fmt(d[k])}" for k in sorted(d))


def expected_window(cfg: ExperimentConfig) -> tuple[float, float, float] | None:
    """(expected slope, lo, hi) for experiments that fit a rate."""
    N = cfg.cloak.dimension
    tol = 0.1 if N == 2 else 0.15
    if cfg.experiment == "convergence":
        if cfg.metric == "conormal":
            e = 1 + cfg.cloak.delta / 2
            return e, e - 0.1, e + 0.1
        return float(N), N - tol, N + tol
    if cfg.experiment == "theorem61":
        return float(N), N - 0.15, math.inf
    if cfg.experiment == "lemma42":
        return float(N - 1), N - 1.1, N - 0.9
    return None


def _plot_script(prefix: str, cfg: ExperimentConfig, fit: mt.RateFit | None) -> str:
    base = os.path.basename(prefix)
    xlabel = {"lemma42": "tau", "delta-sweep": "delta"}.get(cfg.experiment, "rho")
    lines = [
        "set datafile separator ','",
        "set key top left",
        f"set xlabel '{xlabel}'",
        "set ylabel 'value'",
        "set logscale xy",
        "set format xy '10^{%L}'",
        f"set title '{cfg.experiment} ({cfg.cloak.dimension}D)'",
    ]
    plot = f"plot '{base}_samples.csv' every ::1 using 1:2 with linespoints title 'measured'"
    if fit is not None:
        lines.append(f"fit_line(x) = 10**({fmt(fit.intercept)}) * x**({fmt(fit.slope)})")
        plot += f", fit_line(x) with lines dashtype 2 title sprintf('slope %.3f', {fmt(fit.slope)})"
    lines.append(plot)
    return "\n".join(lines) + "\n"


def _write_all(files: dict):
    for path, text in files.items():
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)


def run_experiment(cfg: ExperimentConfig, prefix: str, emit_plot: bool = False) -> tuple[int, dict]:
    """Run ``cfg`` and return ``(exit status, {path: text})`` without writing."""
    files: dict[str, str] = {}
    status = EXIT_PASS
    fit = None
    exp = cfg.experiment

    if exp == "material-map":
        mat = cloak_assembly(cfg.cloak, cfg.material["R1"], cfg.material["R2"])
        radii = np.linspace(0.0, cfg.cloak.R, cfg.material["points"])
        radii = sorted(set(radii.tolist()) | {mat.R2})
        rows = material_map_export(mat, radii)
        files[f"{prefix}_material.csv"] = _csv_text(("r", "sigma_rad", "sigma_tan", "q_re", "q_im", "region"), rows)
        return status, files

    if exp == "solve":
        sol = sv.solve_cloak(cfg.cloak, cfg.probe)
        rows = []
        for key in sorted(sol.modes):
            rec = sol.modes[key]
            tr = sol.transfers[rec.degree]
            idx = [key] if cfg.cloak.dimension == 2 else list(key)
            u_R = sol.mode_radial(key, cfg.cloak.R)[0]
            rows.append(idx + [rec.psi.real, rec.psi.imag, tr.ntd.real, tr.ntd.imag,
                               tr.ntd_free.real, tr.ntd_free.imag, u_R.real, u_R.imag])
        head = ["n"] if cfg.cloak.dimension == 2 else ["n", "m"]
        head += ["psi_re", "psi_im", "ntd_re", "ntd_im", "ntd_free_re", "ntd_free_im", "trace_re", "trace_im"]
        files[f"{prefix}_trace.csv"] = _csv_text(head, rows)
        return status, files

    samples = run_sweep(cfg)
    files[f"{prefix}_samples.csv"] = _csv_text(
        ("parameter", "value", "diagnostics"),
        [(s.parameter, s.value, _diag_text(s.diagnostics)) for s in samples])

    window = expected_window(cfg)
    if window is not None:
        expected, lo, hi = window
        fit = mt.fit_rate(samples)
        ok = lo <= fit.slope <= hi
        files[f"{prefix}_fit.csv"] = _csv_text(
            ("slope", "intercept", "r_squared", "expected_slope", "pass"),
            [(fit.slope, fit.intercept, fit.r_squared, expected, ok)])
        if not ok:
            status = EXIT_FIT
    elif exp == "delta-sweep":
        vals = [s.value for s in samples]
        ok = all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-2 * vals[0]
        files[f"{prefix}_check.csv"] = _csv_text(("check", "pass"), [("strictly_decreasing_and_final_below_1e-2_initial", ok)])
        status = EXIT_PASS if ok else EXIT_FIT
    elif exp == "absorption-check":
        ok = all(s.value <= 1e-8 for s in samples)
        files[f"{prefix}_check.csv"] = _csv_text(("check", "pass"), [("relative_residual_below_1e-8", ok)])
        status = EXIT_PASS if ok else EXIT_FIT

    if emit_plot:
        files[f"{prefix}.gp"] = _plot_script(prefix, cfg, fit)
    return status, files


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cloakbench", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS + ("validate",))
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--out", help="output path prefix")
    parser.add_argument("--jobs", type=int, help="parallel sweep workers")
    parser.add_argument("--emit-plot", action="store_true", help="also write a gnuplot script")
    parser.add_argument("--experiment", dest="validate_target", choices=EXPERIMENTS,
                        help="experiment to validate against (validate only)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS

    if args.experiment == "validate":
        target = args.validate_target
        try:
            if target is None:
                with open(args.config) as fh:
                    raw = json.load(fh, object_pairs_hook=_no_duplicates)
                target = raw.get("experiment") if isinstance(raw, dict) else None
                if target is None:
                    raise ConfigError("validate needs an 'experiment' key or --experiment")
            load_config(args.config, target)
        except (ConfigError, OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"config ok ({target})")
        return EXIT_PASS

    try:
        cfg = load_config(args.config, args.experiment)
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigError("--jobs must be positive")
            cfg.jobs = args.jobs
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    prefix = args.out or cfg.out or f"cloakbench_{args.experiment}"
    emit = args.emit_plot or cfg.emit_plot
    try:
        status, files = run_experiment(cfg, prefix, emit)
    except PointFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    except (SpecfunError, sv.SolverError, ArithmeticError, mt.MetricsError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_all(files)
    for path in files:
        print(path)
    if status == EXIT_FIT:
        print("check failed: see fit/check CSV", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
