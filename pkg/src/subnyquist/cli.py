"""Command-line entry point: ``subnyquist <subcommand> [options]``.

On failure a single line ``error: {"type": ..., "message": ...}`` is written
to stderr and the exit status is nonzero (2 for bad configuration or input,
3 for numerical failures, 4 for I/O, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import experiments as ex
from .errors import ArtifactIOError, ConfigurationError, NumericalError, StructuralError, SubNyquistError
from .io import (
    read_measurement_bundle,
    read_nyquist_signal,
    write_csv,
    write_power_csv,
)
from .multicoset import MultiCosetConfig, correlogram, design_delay_filters
from .spectralcs import LineSpectrumModel, StopCriterion, recover, synthesize_signal

log = logging.getLogger("subnyquist")

TRACE_COLUMNS = ["iteration", "nmse_db", "residual", "missed_count"]
CRB_COLUMNS = ["sigma", "M", "crb", "ncrb_db", "trials", "stderr_db", "seed", "config_hash"]
VARIANCE_COLUMNS = [
    "N_x", "L", "q", "N", "analytical_var", "empirical_var", "empirical_stderr", "seed", "config_hash",
]


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _lq_list(text):
    out = []
    for item in text.split(","):
        if item.strip():
            L, q = item.split(":")
            out.append((int(L), int(q)))
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit run seed (default 0)")
    common.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
    common.add_argument("--out", type=Path, default=None, help="output CSV path")
    common.add_argument("--config", type=Path, default=None, help="YAML configuration file")
    common.add_argument("--workers", type=int, default=None, help="worker processes (results do not depend on it)")
    common.add_argument("--plot", action="store_true", help="also write a matplotlib script next to the CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    grids = argparse.ArgumentParser(add_help=False)
    grids.add_argument("--sigmas", type=_float_list, default=None, help="comma separated noise std values")
    grids.add_argument("--m-grid", type=_int_list, default=None, help="comma separated measurement counts")
    grids.add_argument("--iterations", type=int, default=None)
    grids.add_argument("--K", type=int, default=None)
    grids.add_argument("--N", type=int, default=None)
    grids.add_argument("--window", type=int, default=None, help="root-MUSIC frame length")

    corr = argparse.ArgumentParser(add_help=False)
    corr.add_argument("--lq-pairs", type=_lq_list, default=None, help="e.g. 51:12,101:25")
    corr.add_argument("--nx-grid", type=_int_list, default=None, help="Nyquist lengths")
    corr.add_argument("--filter-len", type=int, default=None)
    corr.add_argument("--empirical-trials", type=int, default=None)

    p = argparse.ArgumentParser(prog="subnyquist", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fig1", parents=[common, corr], help="correlogram variance versus Nyquist length")
    sub.add_parser("fig2", parents=[common, grids], help="NMSE versus iteration")
    sub.add_parser("fig3", parents=[common, grids], help="NMSE versus noise level")
    sub.add_parser("fig4", parents=[common, grids], help="NMSE versus number of measurements")
    sub.add_parser("table1", parents=[common, grids], help="missed frequencies per iteration")
    sub.add_parser("crb", parents=[common, grids], help="Cramer-Rao bound table")

    rec = sub.add_parser("recover", parents=[common, grids], help="recover one measurement bundle")
    rec.add_argument("--bundle", type=Path, default=None, help=".npz or CSV-triple directory; simulated if absent")
    rec.add_argument("--method", choices=ex.METHODS, default="nested_ls")

    cg = sub.add_parser("correlogram", parents=[common, corr], help="power estimate or variance table")
    cg.add_argument("--input", type=Path, default=None, help="Nyquist-grid signal (.csv or raw float64)")
    cg.add_argument("--complex-interleaved", action="store_true")
    cg.add_argument("--L", type=int, default=None)
    cg.add_argument("--offsets", type=_int_list, default=None)
    cg.add_argument("--samples", type=int, default=None, help="samples per channel (default: all that fit)")
    cg.add_argument("--nyquist-rate", type=float, default=1000.0)
    return p


def _load(args, experiment):
    overrides = dict(seed=args.seed, trials=args.trials)
    for name in ("sigmas", "m_grid", "iterations", "K", "N", "window",
                 "lq_pairs", "nx_grid", "filter_len", "empirical_trials"):
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    return ex.load_config(experiment, args.config, **overrides)


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        return int(doc.get("workers", 1))
    return 1


def _out(args, default_name) -> Path:
    return args.out if args.out is not None else Path(default_name)


def cmd_table(args, experiment):
    cfg = _load(args, experiment)
    table = ex.run_experiment(cfg, _workers(args))
    for path in ex.emit_outputs(table, _out(args, f"{experiment}.csv"), args.plot):
        log.info("wrote %s", path)


def cmd_crb(args):
    cfg = _load(args, "crb")
    rows = ex.run_crb(cfg, _workers(args))
    h = ex.config_hash(cfg)
    write_csv(_out(args, "crb.csv"), CRB_COLUMNS, [r + (cfg.seed, h) for r in rows])


def cmd_recover(args):
    cfg = _load(args, "recover")
    truth = None
    if args.bundle is not None:
        b = read_measurement_bundle(args.bundle)
        y, phi, K = b.y, b.phi, b.K
        if b.omega is not None and b.d is not None:
            truth = LineSpectrumModel(np.asarray(b.omega, float), np.asarray(b.d, complex))
    else:
        prob = ex.draw_problem(cfg, 0)
        M = cfg.m_grid[0]
        truth = prob.model
        y = prob.measurements(synthesize_signal(truth, cfg.N), M, cfg.sigmas[0])
        phi, K = prob.phi(M), cfg.K
    trace = recover(
        y, phi, K, lam=cfg.step_size, stop=StopCriterion(cfg.iterations),
        method=args.method, window=cfg.window, truth=truth,
        miss_radius=cfg.miss_factor * np.pi / phi.shape[1],
    )
    energy = None
    if truth is not None:
        x = synthesize_signal(truth, phi.shape[1])
        energy = float(np.vdot(x, x).real)
    write_csv(_out(args, "recover.csv"), TRACE_COLUMNS, trace.rows(energy))


def cmd_correlogram(args):
    if args.input is not None:
        if args.L is None or args.offsets is None:
            raise ConfigurationError("--input needs --L and --offsets")
        x = read_nyquist_signal(args.input, args.complex_interleaved)
        N = args.samples
        if N is None:
            N = (x.size - max(args.offsets) - 1) // args.L + 1
            if N < 1:
                raise ConfigurationError("signal shorter than one sampling period")
        flen = args.filter_len or 4
        mc = MultiCosetConfig(args.nyquist_rate, args.L, tuple(args.offsets), N, filter_len=flen)
        est = correlogram(x, mc, design_delay_filters(mc))
        write_power_csv(_out(args, "power.csv"), est.p_hat)
        return
    cfg = _load(args, "correlogram")
    h = ex.config_hash(cfg)
    rows = [r + (cfg.seed, h) for r in ex.variance_table(cfg)]
    write_csv(_out(args, "variance.csv"), VARIANCE_COLUMNS, rows)


def _exit_code(exc) -> int:
    if isinstance(exc, (ConfigurationError, StructuralError)):
        return 2
    if isinstance(exc, NumericalError):
        return 3
    if isinstance(exc, (ArtifactIOError, OSError)):
        return 4
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command in ("fig1", "fig2", "fig3", "fig4", "table1"):
            cmd_table(args, args.command)
        elif args.command == "crb":
            cmd_crb(args)
        elif args.command == "recover":
            cmd_recover(args)
        else:
            cmd_correlogram(args)
    except (SubNyquistError, OSError, ValueError) as exc:
        line = json.dumps({"type": type(exc).__name__, "message": str(exc)}, sort_keys=True)
        print(f"error: {line}", file=sys.stderr)
        return _exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
