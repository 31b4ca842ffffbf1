"""Command-line interface: reproducible experiments with on-disk artifacts.

Configuration is a flat key-value text file with cosmetic section headers;
every key can also be set on the command line, and flags win over the file.
The canonical emitted form round-trips through the parser exactly, floats
included, so a config echoed into a manifest reproduces the run bit for bit.
Each subcommand writes its tables as CSV with 17-significant-digit floats, a
rendered PNG next to every table, and a manifest recording the full
configuration, the seed, and the wall time.

Exit codes: 0 success, 1 validation error, 2 numerical abort (NaN or a
violated CFL bound), 3 sweep completed with censored rows.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import artifacts, decay_analysis, exit_probability, harness, reporting
from .errors import NumericalAbort, ValidationError
from .flowfield import CellularFlow, StripDomain
from .pde_solver import SolverConfig, make_initial_data, run
from .reaction import (IgnitionReaction, auto_select_chord,
                       build_chord_modification, load_profile_csv)
from .subsolution import SubSolution, build_subsolution, critical_cell_size, \
    verify_subsolution

TIERS = {"coarse": 128, "standard": 256, "fine": 512}

# key -> (section, type, default); types: f float, i int, s string, b bool,
# F comma-separated float list.  Keys are globally unique; sections only
# group the emitted file.
KEYS = {
    "l":             ("flow", "f", 1.0),
    "A":             ("flow", "f", 0.0),
    "M":             ("reaction", "f", 1.0),
    "theta0":        ("reaction", "f", 0.25),
    "profile":       ("reaction", "s", ""),
    "theta1":        ("chord", "f", 0.0),
    "theta2":        ("chord", "f", 0.0),
    "tier":          ("grid", "s", "standard"),
    "n_per_cell":    ("grid", "i", 0),
    "x_half_cells":  ("grid", "i", 0),
    "n_cells_y":     ("grid", "i", 2),
    "kind":          ("initial", "s", "slab"),
    "L0":            ("initial", "f", 2.0 * math.pi),
    "delta0":        ("initial", "f", 0.0),
    "cell_i":        ("initial", "i", 0),
    "cell_j":        ("initial", "i", 0),
    "t_end":         ("run", "f", 0.0),
    "scheme":        ("run", "s", "monotone"),
    "cfl":           ("run", "f", 0.9),
    "dt_max":        ("run", "f", 0.0),
    "monitor_stride": ("run", "i", 0),
    "symmetric":     ("run", "s", "auto"),
    "stop_on_quench": ("run", "b", False),
    "snapshot_times": ("run", "F", ()),
    "inject_nan_step": ("run", "i", -1),
    "h0":            ("exit", "f", 0.0),
    "n_paths":       ("exit", "i", 4096),
    "n_times":       ("exit", "i", 33),
    "t_max":         ("exit", "f", 0.0),
    "C1":            ("exit", "f", 1.0),
    "L0_over_pil":   ("sweep", "F", (2.0, 3.0, 4.0, 6.0)),
    "tol_rel":       ("sweep", "f", 0.25),
    "A_start":       ("sweep", "f", 1.0),
    "A_max":         ("sweep", "f", 1e5),
    "prescan":       ("sweep", "b", True),
    "max_updates":   ("sweep", "f", 0.0),
    "sweep_csv":     ("sweep", "s", ""),
    "A_list":        ("experiment", "F", (0.0,)),
    "l_list":        ("experiment", "F", ()),
    "t_window":      ("experiment", "F", ()),
    "out":           ("output", "s", "runs"),
    "seed":          ("output", "i", 0),
    "jobs":          ("output", "i", 0),
    "tag":           ("output", "s", ""),
}

SECTION_ORDER = ("flow", "reaction", "chord", "grid", "initial", "run",
                 "exit", "sweep", "experiment", "output")

COMMANDS = ("simulate", "verify-subsolution", "decay", "exit-prob", "sweep",
            "fit", "theorem1")


def _parse_value(key, text, where):
    kind = KEYS[key][1]
    text = text.strip()
    try:
        if kind == "f":
            return float(text)
        if kind == "i":
            return int(text, 0)
        if kind == "b":
            low = text.lower()
            if low in ("1", "true", "on", "yes"):
                return True
            if low in ("0", "false", "off", "no"):
                return False
            raise ValueError(text)
        if kind == "F":
            if not text:
                return ()
            return tuple(float(v) for v in text.split(","))
        return text
    except ValueError:
        raise ValidationError("parse error %s: key %r expects %s, got %r"
                              % (where, key, {"f": "a float", "i": "an integer",
                                              "b": "a boolean",
                                              "F": "a float list"}[kind], text))


class RunConfig:
    """Every knob of every subcommand, with defaults and validation.

    Zero means "derive it" for the keys documented as auto (t_end, h0,
    n_per_cell, x_half_cells, delta0, t_max, jobs): the derived values
    depend on l, M, and the initial data kind, and are resolved by the
    accessors rather than stored, so the canonical form stays minimal.
    """

    def __init__(self, values=None):
        for key, (_, _, default) in KEYS.items():
            setattr(self, key, default)
        for key, val in (values or {}).items():
            setattr(self, key, val)

    # ---- derived quantities

    def resolved_n_per_cell(self):
        return self.n_per_cell if self.n_per_cell else TIERS[self.tier]

    def resolved_t_end(self):
        if self.t_end:
            return self.t_end
        return 20.0 * max(self.l ** 2, 1.0 / self.M if self.M > 0 else 0.0)

    def resolved_h0(self):
        return self.h0 if self.h0 else self.l / 16.0

    def resolved_delta0(self):
        return self.delta0 if self.delta0 else self.l / 16.0

    def resolved_jobs(self):
        return self.jobs if self.jobs else (os.cpu_count() or 1)

    def resolved_x_half_cells(self):
        if self.x_half_cells:
            return self.x_half_cells
        if self.kind == "cell":
            return 9
        return int(math.ceil(self.L0 / (math.pi * self.l) - 1e-9)) + 8

    def reaction(self):
        profile = load_profile_csv(self.profile) if self.profile else None
        return IgnitionReaction(self.theta0, self.M, profile=profile)

    def chord(self, reaction):
        if self.theta1 or self.theta2:
            return build_chord_modification(reaction, self.theta1, self.theta2)
        return build_chord_modification(reaction,
                                        *auto_select_chord(reaction))

    # ---- validation / serialization

    def validate(self):
        if not 0.0 < self.theta0 < 1.0:
            raise ValidationError("theta0 must lie in (0,1)")
        if not self.l > 0.0:
            raise ValidationError("cell size l must be positive")
        if self.M < 0.0:
            raise ValidationError("reaction rate M must be >= 0")
        if self.A < 0.0:
            raise ValidationError("amplitude A must be >= 0")
        if self.tier not in TIERS:
            raise ValidationError("tier must be one of %s" % (sorted(TIERS),))
        if self.kind not in ("slab", "cell", "streamline-cutoff"):
            raise ValidationError("initial kind %r unknown" % (self.kind,))
        if not self.L0 > 0.0:
            raise ValidationError("slab half-width L0 must be positive")
        if self.scheme not in ("monotone", "high-order"):
            raise ValidationError("scheme must be monotone or high-order")
        if not 0.0 < self.cfl <= 0.9:
            raise ValidationError("cfl must lie in (0, 0.9]")
        if self.symmetric not in ("auto", "on", "off"):
            raise ValidationError("symmetric must be auto, on, or off")
        if not 0.0 < self.tol_rel < 1.0:
            raise ValidationError("tol_rel must lie in (0,1)")
        if not 0.0 < self.A_start <= self.A_max:
            raise ValidationError("need 0 < A_start <= A_max")
        if self.n_paths <= 0:
            raise ValidationError("n_paths must be positive")
        if self.n_times < 2:
            raise ValidationError("n_times must be >= 2")
        if self.seed < 0:
            raise ValidationError("seed must be >= 0")
        if self.jobs < 0:
            raise ValidationError("jobs must be >= 0")
        if (self.theta1 or self.theta2) and not self.theta1 < self.theta2:
            raise ValidationError("chord needs theta1 < theta2")
        return self

    def values(self):
        return {key: getattr(self, key) for key in KEYS}

    def emit(self):
        """Canonical text form; parse(emit(cfg)) reproduces cfg exactly."""
        lines = []
        for section in SECTION_ORDER:
            lines.append("[%s]" % section)
            for key, (sec, kind, _) in KEYS.items():
                if sec != section:
                    continue
                val = getattr(self, key)
                if kind == "f":
                    text = "%.17g" % val
                elif kind == "b":
                    text = "1" if val else "0"
                elif kind == "F":
                    text = ",".join("%.17g" % v for v in val)
                else:
                    text = str(val)
                lines.append("%s = %s" % (key, text))
            lines.append("")
        return "\n".join(lines)


def parse_config(path=None, overrides=None):
    """Config from an optional file plus optional raw-string overrides.

    Overrides (from command-line flags) win over the file.  Unknown keys and
    duplicate keys are rejected with their location; section headers are
    grouping only and any key may appear under any of them.
    """
    values = {}
    if path is not None:
        if not os.path.exists(path):
            raise ValidationError("config file %r does not exist" % (path,))
        seen = {}
        with open(path) as fh:
            for n, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line or (line.startswith("[") and line.endswith("]")):
                    continue
                if "=" not in line:
                    raise ValidationError(
                        "parse error at %s line %d: expected key = value, got %r"
                        % (path, n, raw.rstrip()))
                key, text = line.split("=", 1)
                key = key.strip()
                if key not in KEYS:
                    raise ValidationError("unknown key %r at %s line %d"
                                          % (key, path, n))
                if key in seen:
                    raise ValidationError(
                        "duplicate key %r at %s line %d (first at line %d)"
                        % (key, path, n, seen[key]))
                seen[key] = n
                values[key] = _parse_value(key, text, "at %s line %d" % (path, n))
    for key, text in (overrides or {}).items():
        if key not in KEYS:
            raise ValidationError("unknown key %r in flag overrides" % (key,))
        values[key] = _parse_value(key, text, "in flag --%s" % key)
    return RunConfig(values).validate()


# ---------------------------------------------------------------------------
# subcommands

def _outdir(cfg, command):
    root = artifacts.out_root(cfg.out)
    sub = cfg.tag or command
    path = os.path.join(root, sub)
    os.makedirs(path, exist_ok=True)
    return path


def _write_manifest(path, cfg, command, wall, extra=None):
    payload = {"command": command, "seed": cfg.seed, "config": cfg.values(),
               "wall_time": wall}
    payload.update(extra or {})
    artifacts.write_manifest(os.path.join(path, "manifest.json"), payload)


def _build_run_pieces(cfg):
    flow = CellularFlow(cfg.l)
    domain = StripDomain(flow, cfg.resolved_x_half_cells(),
                         cfg.resolved_n_per_cell(), cfg.n_cells_y)
    if cfg.kind == "cell":
        init = make_initial_data(domain, "cell", cell=(cfg.cell_i, cfg.cell_j))
    elif cfg.kind == "streamline-cutoff":
        init = make_initial_data(domain, "streamline-cutoff", L0=cfg.L0,
                                 delta0=cfg.resolved_delta0())
    else:
        init = make_initial_data(domain, "slab", L0=cfg.L0)
    # slab-symmetric data on the monotone path can run on a quarter strip
    sym = cfg.symmetric == "on" or (
        cfg.symmetric == "auto" and cfg.kind != "cell"
        and cfg.scheme == "monotone" and cfg.n_cells_y == 2)
    solver = SolverConfig(
        cfg.resolved_t_end(), A=cfg.A, scheme=cfg.scheme, cfl=cfg.cfl,
        dt_max=cfg.dt_max or None, monitor_stride=cfg.monitor_stride or None,
        symmetric_x=sym, symmetric_y=sym,
        stop_on_quench=cfg.stop_on_quench,
        snapshot_times=cfg.snapshot_times,
        inject_nan_step=None if cfg.inject_nan_step < 0 else cfg.inject_nan_step)
    return flow, domain, init, solver


def _cmd_simulate(cfg):
    outdir = _outdir(cfg, "simulate")
    reaction = cfg.reaction() if cfg.M > 0 else None
    flow, domain, init, solver = _build_run_pieces(cfg)
    t0 = time.time()
    record = run(init, solver, flow, reaction)
    wall = time.time() - t0
    record.save_monitor(os.path.join(outdir, "monitor.csv"))
    field = record.field
    artifacts.save_field_raw(
        os.path.join(outdir, "field.raw"), field.values,
        {"nx": field.domain.nx, "ny": field.domain.ny, "l": cfg.l,
         "X": field.domain.X, "time": field.time, "A": cfg.A, "M": cfg.M,
         "theta0": cfg.theta0})
    reporting.render_monitor(record.monitor,
                             os.path.join(outdir, "monitor.png"),
                             title="A=%g l=%g" % (cfg.A, cfg.l))
    reporting.render_field(field.values, field.domain.X, field.domain.Y,
                           os.path.join(outdir, "field.png"),
                           title="T at t=%.4g" % field.time)
    _write_manifest(outdir, cfg, "simulate", wall,
                    {"status": record.status, "path": record.path_label,
                     "dt": record.dt, "n_steps": record.n_steps,
                     "events": record.event_names()})
    sup = record.monitor_column("sup_norm")
    print("simulate: status=%s path=%s dt=%.6g steps=%d sup_end=%.6g"
          % (record.status, record.path_label, record.dt, record.n_steps,
             sup[-1]))
    print("artifacts in %s" % outdir)
    return 0


def _cmd_verify_subsolution(cfg):
    outdir = _outdir(cfg, "verify-subsolution")
    reaction = cfg.reaction()
    chord = cfg.chord(reaction)
    l_min = critical_cell_size(chord, cfg.M)
    t0 = time.time()
    if cfg.l <= l_min:
        sub = SubSolution(chord.theta1, chord.theta2, chord.alpha, cfg.l, cfg.M)
        report = {"l": cfg.l, "l_min": l_min, "applicable": False,
                  "boundary_value": sub.boundary_value,
                  "theta1": chord.theta1, "theta2": chord.theta2}
        print("cell size l=%.6g is below the critical size l_min=%.6g" %
              (cfg.l, l_min))
        print("barrier boundary value %.6g >= 0: no propagation barrier "
              "at this size" % sub.boundary_value)
    else:
        sub = build_subsolution(chord, cfg.l, cfg.M)
        result = verify_subsolution(sub, CellularFlow(cfg.l), reaction, cfg.A,
                                    grid_resolution=cfg.resolved_n_per_cell())
        report = dict(result, theta1=chord.theta1, theta2=chord.theta2,
                      applicable=True)
        reporting.render_profile(sub, os.path.join(outdir, "profile.png"))
        print("l=%.6g l_min=%.6g boundary value %.6g" %
              (cfg.l, l_min, sub.boundary_value))
        print("max residual %.3g, max advection %.3g on %d^2 grid" %
              (result["max_residual"], result["max_advection"], result["n"]))
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    _write_manifest(outdir, cfg, "verify-subsolution", time.time() - t0)
    return 0


def _cmd_decay(cfg):
    outdir = _outdir(cfg, "decay")
    flow = CellularFlow(cfg.l)
    window = cfg.t_window or (cfg.l ** 2, 100.0 * cfg.l ** 2)
    if len(window) != 2 or not 0.0 < window[0] < window[1]:
        raise ValidationError("t_window needs two increasing positive times")
    horizon = cfg.t_end or 1.1 * window[1]
    rows = []
    series = []
    t0 = time.time()
    for A in cfg.A_list:
        sub_cfg = RunConfig(dict(cfg.values(), A=A, M=0.0, t_end=horizon))
        _, _, init, solver = _build_run_pieces(sub_cfg)
        record = run(init, solver, flow, None)
        record.save_monitor(os.path.join(outdir, "monitor_A%g.csv" % A))
        slope, stderr = decay_analysis.decay_exponent(record, *window)
        rows.append((A, slope, stderr))
        series.append(("A=%g" % A, record.monitor_column("t"),
                       record.monitor_column("sup_norm")))
        print("decay: A=%-10g exponent %.4f +- %.4f" % (A, slope, stderr))
    artifacts.write_table(os.path.join(outdir, "decay.csv"),
                          ("A", "exponent", "stderr"), rows)
    reporting.render_decay(series, os.path.join(outdir, "decay.png"))
    _write_manifest(outdir, cfg, "decay", time.time() - t0,
                    {"window": list(window)})
    return 0


def _cmd_exit_prob(cfg):
    outdir = _outdir(cfg, "exit-prob")
    flow = CellularFlow(cfg.l)
    h0 = cfg.resolved_h0()
    t_max = cfg.t_max or cfg.l ** 2
    problem = exit_probability.ExitProblem(flow, cfg.A, h0,
                                           rng_seed=cfg.seed,
                                           n_paths=cfg.n_paths)
    pl2 = 0.5 * math.pi * cfg.l
    points = [(pl2, pl2), (0.6 * pl2, pl2), (pl2, 1.4 * pl2),
              (1.3 * pl2, 0.8 * pl2)]
    points = [p for p in points if flow.stream(p[0], p[1]) > h0]
    t0 = time.time()
    est = exit_probability.simulate_survival(problem, points, t_max,
                                             n_times=cfg.n_times)
    record = exit_probability.pde_exit_oracle(
        problem, t_max, n_per_cell=cfg.resolved_n_per_cell(),
        n_store=cfg.n_times)
    exit_probability.write_mc_csv(os.path.join(outdir, "mc.csv"), est)
    exit_probability.save_q_table(os.path.join(outdir, "q_table.raw"), record)
    curves = []
    for k, (x, y) in enumerate(points):
        q_pde = np.array([exit_probability.oracle_at(record, it, x, y)
                          for it in range(len(record.store_times))])
        curves.append(("(%.2f,%.2f)" % (x, y), est.q[k], est.stderr[k],
                       np.interp(est.times, record.store_times, q_pde)))
    reporting.render_exit(est.times, curves, os.path.join(outdir, "exit.png"))
    _write_manifest(outdir, cfg, "exit-prob", time.time() - t0,
                    {"h0": h0, "t_max": t_max, "points": points})
    print("exit-prob: %d paths, %d points, t_max=%.4g; artifacts in %s"
          % (cfg.n_paths, len(points), t_max, outdir))
    return 0


def _cmd_sweep(cfg):
    outdir = _outdir(cfg, "sweep")
    reaction = cfg.reaction()
    flow = CellularFlow(cfg.l)
    ladder = [k * math.pi * cfg.l for k in cfg.L0_over_pil]
    t0 = time.time()
    result = harness.run_sweep(
        ladder, flow, reaction, horizon=cfg.t_end or None,
        tol_rel=cfg.tol_rel, A_start=cfg.A_start, A_max=cfg.A_max,
        n_per_cell=cfg.resolved_n_per_cell(),
        max_updates=int(cfg.max_updates) if cfg.max_updates else None,
        jobs=cfg.resolved_jobs(),
        prescan_n_per_cell=cfg.resolved_n_per_cell() // 2 if cfg.prescan else None)
    wall = time.time() - t0
    result.write_csv(os.path.join(outdir, "sweep.csv"))
    reporting.render_sweep(result.rows, os.path.join(outdir, "sweep.png"))
    _write_manifest(outdir, cfg, "sweep", wall,
                    {"censored": result.censored,
                     "estimates": [r.estimate for r in result.rows]})
    for r in result.rows:
        print("sweep: L0=%-8.4g bracket (%.6g, %.6g)%s" %
              (r.L0, r.A_lo, r.A_hi, " censored" if r.censored else ""))
    try:
        fit = harness.scaling_fit(result)
        _write_fit(outdir, result.usable_rows(), fit)
        print("sweep: p = %.4f +- %.4f" % (fit.p, fit.stderr))
    except ValidationError as e:
        print("sweep: no fit (%s)" % e)
    return 3 if result.censored else 0


def _write_fit(outdir, rows, fit):
    with open(os.path.join(outdir, "fit.json"), "w") as fh:
        json.dump(fit.payload(), fh, indent=1)
        fh.write("\n")
    reporting.render_fit(rows, fit, os.path.join(outdir, "fit.png"))


def _cmd_fit(cfg):
    outdir = _outdir(cfg, "fit")
    path = cfg.sweep_csv or os.path.join(artifacts.out_root(cfg.out),
                                         "sweep", "sweep.csv")
    if not os.path.exists(path):
        raise ValidationError("sweep table %r does not exist; run sweep first"
                              % (path,))
    result = harness.SweepResult.from_csv(path)
    fit = harness.scaling_fit(result)
    _write_fit(outdir, result.usable_rows(), fit)
    _write_manifest(outdir, cfg, "fit", 0.0, {"sweep_csv": path})
    print("fit: p = %.6g +- %.3g, C = %.6g over %d rows"
          % (fit.p, fit.stderr, fit.C, len(fit.rows_used)))
    return 0


def _cmd_theorem1(cfg):
    outdir = _outdir(cfg, "theorem1")
    reaction = cfg.reaction()
    chord = cfg.chord(reaction)
    l_min = critical_cell_size(chord, cfg.M)
    l_values = cfg.l_list or (2.0 * l_min,)
    horizon = cfg.t_end or 50.0 / cfg.M
    t0 = time.time()
    result = harness.theorem1_experiment(
        list(l_values), list(cfg.A_list), reaction, chord, horizon=horizon,
        n_per_cell=cfg.resolved_n_per_cell(),
        x_half_cells=cfg.x_half_cells or 9)
    wall = time.time() - t0
    artifacts.write_table(os.path.join(outdir, "verdicts.csv"),
                          ("l", "A", "verdict", "t", "note"),
                          result.csv_rows())
    reporting.render_theorem1(result, os.path.join(outdir, "theorem1.png"))
    _write_manifest(outdir, cfg, "theorem1", wall,
                    {"l_min": l_min, "band": list(result.band)})
    for l, A, v in result.rows:
        print("theorem1: l=%-8.4g A=%-8.4g %s" % (l, A, v))
    print("theorem1: transition band %s (l_min=%.4g)" % (result.band, l_min))
    return 0


DISPATCH = {
    "simulate": _cmd_simulate,
    "verify-subsolution": _cmd_verify_subsolution,
    "decay": _cmd_decay,
    "exit-prob": _cmd_exit_prob,
    "sweep": _cmd_sweep,
    "fit": _cmd_fit,
    "theorem1": _cmd_theorem1,
}


def dispatch(command, cfg):
    """Run one subcommand; returns the process exit code."""
    if command not in DISPATCH:
        raise ValidationError("unknown command %r" % (command,))
    return DISPATCH[command](cfg)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quenchlab",
        description="cellular-flow reaction-advection-diffusion experiments")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None,
                        help="key-value configuration file")
    for key in KEYS:
        parser.add_argument("--" + key.replace("_", "-"), dest="key_" + key,
                            default=None, metavar="V",
                            help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, "key_" + key)
                 for key in KEYS if getattr(args, "key_" + key) is not None}
    try:
        cfg = parse_config(args.config, overrides)
        return dispatch(args.command, cfg)
    except ValidationError as e:
        print("error: %s" % e, file=sys.stderr)
        return 1
    except NumericalAbort as e:
        print("numerical abort: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
