"""Command line entry point: ``run``, ``sweep``, ``verify`` and ``probe``.

Exit status: 0 success, 1 invariant failure, 2 configuration error,
3 numerical abort (blow-up guard or stream-solver failure).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from . import diagnostics as dg
from . import dynamics, experiment, storage, verify
from .config import ConfigError, SolverConfig, load_config
from .elliptic import SolverError, StreamOperator, elliptic_estimate_probe
from .grid import build_grid, eval_bathymetry

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("lakevvl")

DIAG_COLUMNS = dg.SERIES_COLUMNS + dg.EXTRA_COLUMNS + ("balance_residual",)
REPORT_COLUMNS = ("t", "mu", "D", "envelope", "alpha_fit", "M_fit", "Ctilde_fit")
PROBE_COLUMNS = ("p", "sample_id", "grid", "epsilon", "ratio_grad", "ratio_sup")


def _parse_mu(text):
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError([f"--mu must be a comma-separated list of numbers, got {text!r}"]) from None
    if not vals:
        raise ConfigError(["--mu is empty"])
    return vals


def write_trajectory(outdir, traj, cfg):
    h = cfg.hash()
    grid = traj.snapshots[0].grid
    index = []
    for k, s in enumerate(traj.snapshots):
        om_name, u_name = f"snap_{k:04d}_omega.field", f"snap_{k:04d}_u.field"
        storage.write_field(os.path.join(outdir, om_name), s.omega, grid, h)
        storage.write_field(os.path.join(outdir, u_name), s.u, grid, h)
        index.append({"index": k, "t": s.t, "omega_file": om_name, "u_file": u_name})
    storage.write_csv(os.path.join(outdir, "snapshots.csv"), ("index", "t", "omega_file", "u_file"),
                      index, h, "snapshots")
    storage.write_csv(os.path.join(outdir, "diagnostics.csv"), DIAG_COLUMNS,
                      traj.diagnostics.rows(cfg.mu), h, "diagnostics")


def command_run(args):
    cfg = load_config(args.config)
    if args.out:
        cfg = cfg.replace(output_dir=args.out)
    traj = dynamics.run(cfg)
    write_trajectory(cfg.output_dir, traj, cfg)
    log.info("run finished at t=%g with %d snapshots in %s", traj.snapshots[-1].t,
             len(traj.snapshots), cfg.output_dir)
    return EXIT_OK


def write_report(path, report, cfg):
    rows = list(report.rows())
    storage.write_csv(path, REPORT_COLUMNS, rows, cfg.hash(), f"sweep C_fit={report.C!r}")


def command_sweep(args):
    cfg = load_config(args.config)
    mus = _parse_mu(args.mu) if args.mu else None
    if mus is not None:
        cfg = cfg.replace(sweep=dataclasses.replace(cfg.sweep, mu_list=mus))
        cfg.validate()
    plan = experiment.SweepPlan.from_config(cfg)
    report = experiment.sweep(plan)
    out = args.out or os.path.join(cfg.output_dir, "report.csv")
    write_report(out, report, cfg)
    for k, v in sorted(report.flags.items()):
        log.info("flag %s = %s", k, v)
    return EXIT_OK


def command_verify(args):
    checks = verify.run_suite()
    out = args.out or "verify_out"
    storage.write_csv(os.path.join(out, "verify.csv"), ("check", "value", "bound", "passed"),
                      [c.row() for c in checks], SolverConfig().hash(), "verify")
    failed = [c for c in checks if not c.passed]
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} (bound {c.bound:.3e})")
    return EXIT_INVARIANT if failed else EXIT_OK


def probe_rows(cfg):
    rows = []
    for level in (1, 2):
        n_r, n_theta = cfg.n_r * level, cfg.n_theta * level
        grid = build_grid(n_r, n_theta)
        for eps in cfg.probe.epsilon_list:
            bath = eval_bathymetry(grid, cfg.a, eps)
            rng = np.random.default_rng(cfg.seed)
            samples = [dynamics.smooth_random_field(grid, rng, cfg.probe.degree)
                       for _ in range(cfg.probe.samples)]
            for row in elliptic_estimate_probe(bath, samples, cfg.probe.p_list, StreamOperator(bath)):
                rows.append({**row, "grid": f"{n_r}x{n_theta}", "epsilon": eps})
    return rows


def command_probe(args):
    cfg = load_config(args.config)
    out = args.out or os.path.join(cfg.output_dir, "probe.csv")
    storage.write_csv(out, PROBE_COLUMNS, probe_rows(cfg), cfg.hash(), "probe")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="lakevvl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.set_defaults(func=command_run)

    s = sub.add_parser("sweep", help="viscosity sweep against the inviscid reference")
    s.add_argument("--config", required=True)
    s.add_argument("--mu", help="comma-separated viscosities (overrides sweep.mu_list)")
    s.add_argument("--out", help="report CSV path")
    s.set_defaults(func=command_sweep)

    v = sub.add_parser("verify", help="run the invariant suite")
    v.add_argument("--out", help="output directory for verify.csv (default verify_out)")
    v.set_defaults(func=command_verify)

    q = sub.add_parser("probe", help="elliptic estimate ratios")
    q.add_argument("--config", required=True)
    q.add_argument("--out", help="probe CSV path")
    q.set_defaults(func=command_probe)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (dynamics.NumericalAbort, SolverError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except experiment.SweepError as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.__cause__, (dynamics.NumericalAbort, SolverError)) else EXIT_INVARIANT
    except ValueError as exc:
        # e.g. a malformed LAKE_THREADS
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
