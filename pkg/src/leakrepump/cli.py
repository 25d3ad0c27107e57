"""Command-line entry point: ``leakrepump {simulate,fit,rb,budget,pulse}``."""
import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .atomic import AtomicConstants, load_branching_table
from .budget import BudgetInput, budget_report
from .config import DEFAULT_PRESETS, SUBCOMMAND_KINDS, ConfigError, load_config, load_preset
from .errors import ConvergenceError, DomainError
from .fit import PumpModelParams, fit_pump_model, synthetic_trajectory
from .pulse import (
    PulseEnvelope,
    ac_stark_phase,
    edge_scan,
    scattering_error_floor,
    square_pulse_offres_error,
)
from .rb import (
    RBConfig,
    bootstrap_ci,
    fit_decay,
    fit_population_decay,
    interleaved_error,
    simulate_population_decay,
    simulate_rb,
)
from .repump import CSV_COLUMNS, RepumpConfig, basis_population, expected_trajectory, read_trajectory_csv, run_monte_carlo
from .rng import substream

log = logging.getLogger("leakrepump")

EXIT_OK, EXIT_DOMAIN, EXIT_CONVERGENCE = 0, 1, 2


class NotConverged(Exception):
    """A fit finished without meeting its tolerances; artifacts are still written."""


class Outputs:
    """Collects artifacts and writes them with a manifest."""

    def __init__(self, out_dir, fmt):
        self.dir = Path(out_dir)
        self.fmt = fmt
        self.files = {}

    def table(self, stem, columns, rows):
        if self.fmt == "json":
            records = [dict(zip(columns, r)) for r in rows]
            self.files[f"{stem}.json"] = _dumps(records)
        else:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_cell(v) for v in r])
            self.files[f"{stem}.csv"] = buf.getvalue()

    def report(self, name, payload):
        self.files[name] = _dumps(payload)

    def write(self, cfg):
        self.dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "tool": "leakrepump",
            "version": __version__,
            "kind": cfg.kind,
            "seed": cfg.seed,
            "config_sha256": cfg.digest(),
            "files": {},
        }
        for name, text in sorted(self.files.items()):
            (self.dir / name).write_text(text)
            manifest["files"][name] = hashlib.sha256(text.encode()).hexdigest()
        (self.dir / "manifest.json").write_text(_dumps(manifest))


def _cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".9g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        obj = float(obj)
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(obj):
    # repr-based floats round-trip binary64 exactly
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _constants(cfg):
    return cfg.build(AtomicConstants, "constants")


def cmd_simulate(cfg, out, workers):
    constants = _constants(cfg)
    table = None
    if "branching_table" in cfg.blocks:
        table = load_branching_table(cfg.blocks["branching_table"])
    rc = cfg.build(RepumpConfig, "repump", seed=cfg.seed)
    traj = run_monte_carlo(rc, constants, table, workers=workers)
    exact, exact_shelf = expected_trajectory(rc, constants, table)
    out.table("trajectory", CSV_COLUMNS, list(traj.rows()))
    out.table("expected", ("cycle", "p0", "pLm", "p1", "pLp", "shelf"),
              [(k, *p, s) for k, p, s in zip(traj.cycles, exact, exact_shelf)])
    return {
        "trials": rc.trials,
        "n_cycles": rc.n_cycles,
        "leakage": traj.leakage,
        "leakage_expected": exact[:, 1] + exact[:, 3],
        "shelf": traj.shelf,
    }


def _param_block(cfg, block):
    try:
        return PumpModelParams(**block).check()
    except (TypeError, ValueError) as exc:
        raise cfg.error(f"invalid parameters: {exc}", *_first_path(cfg, "synthetic", "initial_guess")) from None


def _first_path(cfg, *names):
    for n in names:
        if n in cfg.blocks:
            return (n,)
    return ()


def cmd_fit(cfg, out, workers):
    label = cfg.blocks.get("initial_state", "L-")
    try:
        p0 = basis_population(label)
    except KeyError:
        raise cfg.error(f"unknown initial_state {label!r}", "initial_state") from None
    if ("data" in cfg.blocks) == ("synthetic" in cfg.blocks):
        raise cfg.error("fit needs exactly one of 'data' or 'synthetic'")
    if "data" in cfg.blocks:
        cycles, pops, errs = read_trajectory_csv(cfg.blocks["data"])
        truth = None
    else:
        syn = cfg.block("synthetic")
        truth = _param_block(cfg, syn.get("params", {}))
        cycles, pops, errs = synthetic_trajectory(
            truth, p0, int(syn.get("n_max", 10)), int(syn.get("shots", 1000)), substream(cfg.seed, 0)
        )
        out.table("synthetic", CSV_COLUMNS, [(k, *p, *e) for k, p, e in zip(cycles, pops, errs)])
    guess = None
    if "initial_guess" in cfg.blocks:
        guess = _param_block(cfg, cfg.block("initial_guess"))
    result = fit_pump_model(cycles, pops, errs, p0, guess)
    report = result.to_dict()
    if truth is not None:
        report["generating_params"] = asdict(truth)
    out.report("fit_report.json", report)
    summary = {"converged": result.converged, "params": asdict(result.params),
               "uncertainties": asdict(result.param_uncertainties)}
    if not result.converged:
        raise NotConverged(summary)
    return summary


def cmd_irb(cfg, out, workers):
    rbc = cfg.build(RBConfig, "rb", seed=cfg.seed)
    boot = cfg.block("bootstrap")
    ref = simulate_rb(rbc, interleaved=False, workers=workers)
    inter = simulate_rb(rbc, interleaved=True, workers=workers)
    fit_ref, fit_int = fit_decay(ref), fit_decay(inter)
    eps = interleaved_error(fit_ref.rate, fit_int.rate)
    ci = bootstrap_ci(ref, inter, resamples=int(boot.get("resamples", 1000)),
                      confidence=float(boot.get("confidence", 0.68)), seed=cfg.seed, workers=workers)
    cols = ("length", "seq_index", "survival", "shots")
    for stem, d in (("rb_reference", ref), ("rb_interleaved", inter)):
        out.table(stem, cols, list(zip(d.lengths, d.seq_index, d.survival, d.shots)))
    report = {
        "p_reference": fit_ref.rate,
        "p_interleaved": fit_int.rate,
        "epsilon_g": eps,
        "epsilon_g_negative": eps < 0,
        "ci": [ci.lower, ci.upper],
        "ci_confidence": ci.confidence,
        "ci_shot_only": ci.shot_only,
        "fit_reference": fit_ref.to_dict(),
        "fit_interleaved": fit_int.to_dict(),
        "converged": fit_ref.converged and fit_int.converged,
    }
    out.report("irb_report.json", report)
    if not report["converged"]:
        raise NotConverged(report)
    return {k: report[k] for k in ("p_reference", "p_interleaved", "epsilon_g", "ci")}


def cmd_population_decay(cfg, out, workers):
    dec = cfg.block("decay")
    shots = dec.get("shots")
    if "data" in cfg.blocks:
        with open(cfg.blocks["data"], newline="") as fh:
            rows = list(csv.DictReader(fh))
        cycles = np.array([float(r["cycle"]) for r in rows])
        surv = np.array([float(r["survival"]) for r in rows])
    else:
        if "rate" not in dec or "cycles" not in dec or shots is None:
            raise cfg.error("'decay' needs rate, cycles and shots to generate data", "decay")
        cycles = np.asarray(dec["cycles"], dtype=float)
        surv = simulate_population_decay(float(dec["rate"]), cycles, int(shots), cfg.seed)
    out.table("decay_data", ("cycle", "survival"), [(int(n), s) for n, s in zip(cycles, surv)])
    fit = fit_population_decay(cycles, surv, shots)
    report = {"rate": fit.rate, "rate_err": fit.rate_err, "converged": fit.converged}
    out.report("decay_report.json", report)
    if not fit.converged:
        raise NotConverged(report)
    return report


def cmd_rb(cfg, out, workers):
    if cfg.kind == "population_decay":
        return cmd_population_decay(cfg, out, workers)
    return cmd_irb(cfg, out, workers)


def cmd_budget(cfg, out, workers):
    report = budget_report(cfg.build(BudgetInput, "budget"))
    out.report("budget.json", report)
    return report


def cmd_pulse(cfg, out, workers):
    p = cfg.block("pulse")
    constants = _constants(cfg)
    try:
        tau = float(p.get("tau_pi", 1e-6))
        delta = 2 * math.pi * float(p["detuning_hz"]) if "detuning_hz" in p else constants.delta_hf
        edges = [float(e) for e in p.get("edge_times", [0.0])]
        tol = float(p.get("step_tolerance", 1e-12))
        for e in edges:
            PulseEnvelope(tau, e)
    except (TypeError, ValueError) as exc:
        raise cfg.error(f"invalid 'pulse' block: {exc}", "pulse") from None
    rows = edge_scan(tau, edges, delta, tol)
    out.table("pulse_scan", ("edge_time_ns", "detuning_hz", "leakage_probability"), rows)
    report = {
        "tau_pi": tau,
        "delta_hf": delta,
        "square_offres_error": square_pulse_offres_error(tau, delta),
        "scattering_error_floor": scattering_error_floor(tau, delta, constants.gamma_D),
        "ac_stark_phase": ac_stark_phase(tau, delta),
        "scan": [{"edge_time_ns": r[0], "leakage_probability": r[2]} for r in rows],
    }
    out.report("pulse_report.json", report)
    return {k: report[k] for k in ("square_offres_error", "scattering_error_floor", "ac_stark_phase")}


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "rb": cmd_rb,
    "budget": cmd_budget,
    "pulse": cmd_pulse,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="leakrepump", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run a {'/'.join(SUBCOMMAND_KINDS[name])} experiment")
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", metavar="PATH", help="experiment config (YAML or JSON)")
        src.add_argument("--preset", metavar="NAME",
                         help=f"bundled config (default: {DEFAULT_PRESETS[name]})")
        p.add_argument("--seed", type=int, help="master seed, overrides the config")
        p.add_argument("--out", default="out", metavar="DIR", help="output directory")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1, metavar="N")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="format of tabular artifacts")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else load_preset(args.preset or DEFAULT_PRESETS[args.command])
        if cfg.kind not in SUBCOMMAND_KINDS[args.command]:
            raise ConfigError(
                f"kind {cfg.kind!r} cannot run under '{args.command}' "
                f"(expected {' or '.join(SUBCOMMAND_KINDS[args.command])})",
                cfg.source, cfg.line("kind"),
            )
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer", "argv")
            cfg.seed = args.seed
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1", "argv")
        out = Outputs(args.out, args.format)
        code = EXIT_OK
        try:
            summary = COMMANDS[args.command](cfg, out, args.workers)
        except NotConverged as exc:
            summary, code = exc.args[0], EXIT_CONVERGENCE
        out.write(cfg)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    sys.stdout.write(_dumps({"command": args.command, "kind": cfg.kind, "seed": cfg.seed,
                             "out": str(out.dir), "summary": summary}))
    return code


def main():
    sys.exit(run())
