#!/usr/bin/env python3
"""
microloc CLI - semiclassical microlocal experiments from a JSON config.

Subcommands write CSV/JSON artifacts into --out and return
0 on success, 2 on validation failure (including failed verdicts),
3 on a numerical guard abort, 64 on usage errors and 73 when the
output directory cannot be written.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from src.artifacts import write_csv, write_json
from src.bichar import PhasePoint, conserve_check, flow_fan
from src.config import ExperimentConfig, load_config
from src.energy import (
    collapsed_kernel_functional,
    dissipation_rate,
    dissipation_spectrum,
    h_sweep,
    kernel_oracle,
)
from src.errors import FlowAborted, GuardError, ValidationError
from src.parallel import resolve_workers
from src.partition import build_uniform, decompose, write_patch_masses
from src.quantize import apply
from src.symbol import (
    builtin,
    validate_dissipativity,
    validate_principal_type,
    verify_symbol_class,
)
from src.wavefront import estimate_wavefront, gabor_transform, propagation_check

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_GUARD = 3
EXIT_USAGE = 64
EXIT_CANTCREAT = 73

DEFAULT_RADII = [16.0 * 2 ** k for k in range(7)]
ORACLE_TOLERANCE = 1e-8


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def _symbol_or_identity(config: ExperimentConfig):
    return builtin("constant") if config.symbol.name is None else config.symbol.build()


def cmd_dissipation_sweep(config: ExperimentConfig, out: Path, workers: int) -> int:
    """energy.h_sweep -> convergence.csv (+ dissipation_spectrum.csv)."""
    h_list = config.require("sweep", "h_list")
    grid = config.grid.build()
    a = config.symbol.build()
    family = config.states.family(grid, config.seed)
    pu = build_uniform(grid, config.partition.patches_per_axis, config.partition.overlap)
    xi0 = config.states.xi0 or [0.0] * grid.dim
    digest = config.digest()

    table = h_sweep(a, family, h_list, pu, xi0=xi0,
                    truncation_radius=config.sweep.truncation_radius, workers=workers)
    table.to_csv(out / "convergence.csv", digest)
    print(f"Dissipation sweep for {a.name}: {len(table.rows)} rows")
    for row in table.rows:
        print(f"  h={row.h:<8g} eps_h={row.eps:.10g}  gap_frozen={row.gap_frozen if row.gap_frozen is not None else 'nan'}")

    if config.sweep.bands:
        edges = config.sweep.bands
        rows = [[h, *dissipation_spectrum(a, family(h), h, edges, workers)] for h in h_list]
        header = ["h"] + [f"band_{k + 1}" for k in range(len(edges) + 1)]
        write_csv(out / "dissipation_spectrum.csv", header, rows, digest,
                  {"band_edges": " ".join(repr(float(e)) for e in edges)})
    return EXIT_OK


def cmd_bichar(config: ExperimentConfig, out: Path, workers: int) -> int:
    """Fan of trajectories -> trajectory_<k>.csv + bichar_summary.json."""
    starts = config.require("bichar", "starts")
    t_end = config.require("bichar", "t_end")
    p0 = config.symbol.build()
    digest = config.digest()
    try:
        parsed = [PhasePoint(s[0], s[1]) for s in starts]
    except (TypeError, IndexError, KeyError, ValueError) as exc:
        raise ValidationError(f"bichar.starts must be a list of [x, xi] pairs: {exc}") from exc

    try:
        trajectories = flow_fan(p0, parsed, t_end, config.bichar.tol, workers, config.bichar.t_eval)
    except FlowAborted as exc:
        if exc.trajectory is not None:
            exc.trajectory.to_csv(out / "trajectory_aborted.csv", digest)
        raise

    summary = []
    for k, traj in enumerate(trajectories):
        traj.to_csv(out / f"trajectory_{k}.csv", digest)
        drift = conserve_check(p0, traj)
        summary.append({
            "start": {"x": list(traj.points[0].x), "xi": list(traj.points[0].xi)},
            "final": {"x": list(traj.final().x), "xi": list(traj.final().xi)},
            "log_amplitude_change": float(traj.log_amplitude[-1] - traj.log_amplitude[0]),
            "hamiltonian_drift": drift,
            "accepted_steps": len(traj.step_sizes),
            "rejected_steps": traj.rejected_steps,
            "status": traj.status,
        })
        print(f"  trajectory {k}: drift={drift:.3g} steps={len(traj.step_sizes)}")
    write_json(out / "bichar_summary.json",
               {"symbol": p0.name, "t_end": t_end, "tol": config.bichar.tol, "trajectories": summary}, digest)
    return EXIT_OK


def cmd_propagate(config: ExperimentConfig, out: Path, workers: int) -> int:
    """wavefront.propagation_check -> propagation.json + snapshots.csv."""
    settings = config.propagate
    t_end = config.require("propagate", "t_end")
    grid = config.grid.build()
    p0 = config.symbol.build()
    x0 = settings.x0 or [0.0] * grid.dim
    xi0 = settings.xi0 or [0.0] * grid.dim
    digest = config.digest()

    report = propagation_check(p0, x0, xi0, settings.h, t_end, grid, dt=settings.dt, sigma=settings.sigma,
                               tol=settings.tol, checkpoints=settings.checkpoints,
                               x_stride=settings.x_stride, workers=workers)
    report.to_csv(out / "snapshots.csv", digest)
    payload = report.to_dict()
    if report.final_field is not None:
        report.final_field.save_binary(out / "final_field.mlk")
        density = gabor_transform(report.final_field, settings.h, settings.sigma,
                                  x_stride=settings.x_stride, workers=workers)
        estimate = estimate_wavefront(density, settings.threshold)
        argmax_x, argmax_xi = density.argmax()
        payload["final_wavefront"] = {
            "threshold_fraction": settings.threshold,
            "points": len(estimate),
            "clusters": len(estimate.clusters()),
            "argmax": {"x": list(argmax_x), "xi": list(argmax_xi)},
            "normalized_mass": density.normalized_mass(),
        }
    write_json(out / "propagation.json", payload, digest)
    print(f"Propagation of {report.symbol}: max |dx|={report.max_x_deviation:.4g}, "
          f"max |dxi|={report.max_xi_deviation:.4g}, bound={report.bound:.4g}, decay gap={report.decay_gap:.3g}")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_verify_symbol(config: ExperimentConfig, out: Path, workers: int) -> int:
    """Symbol class, principal type and dissipativity -> symbol_report.json."""
    a = config.symbol.build()
    dim = config.grid.dim
    settings = config.symbol
    m = a.declared_order if settings.claimed_order is None else settings.claimed_order
    radii = settings.radii or DEFAULT_RADII
    region = settings.phase_box(dim)

    class_report = verify_symbol_class(a, m, radii, settings.directions, dim=dim)
    principal = validate_principal_type(a, region, settings.samples)
    dissipativity = validate_dissipativity(a, region, settings.samples, seed=config.seed)
    passed = class_report.passed and principal.passed and dissipativity.passed
    payload = {
        "symbol": a.name,
        "params": a.params,
        "declared_order": a.declared_order,
        "region": region.to_dict(),
        "symbol_class": class_report.to_dict(),
        "principal_type": principal.to_dict(),
        "dissipativity": dissipativity.to_dict(),
        "verdict": "pass" if passed else "fail",
    }
    if a.separable is not None:
        payload["separable_max_deviation"] = a.verify_separable(dim, settings.samples, config.seed)
    write_json(out / "symbol_report.json", payload, config.digest())
    print(f"Symbol {a.name} at m={m}: class {'pass' if class_report.passed else 'fail'}, "
          f"principal type {'pass' if principal.passed else 'fail'}, "
          f"dissipativity {'pass' if dissipativity.passed else 'fail'}")
    return EXIT_OK if passed else EXIT_VALIDATION


def cmd_partition_report(config: ExperimentConfig, out: Path, workers: int) -> int:
    """Patch masses of |P_h u|^2 -> patch_masses.csv + partition_summary.json."""
    grid = config.grid.build()
    a = _symbol_or_identity(config)
    h = config.sweep.h_list[0] if config.sweep.h_list else config.propagate.h
    u = config.states.family(grid, config.seed)(h)
    density = np.abs(apply(a, u, h, workers).values) ** 2
    total = grid.cell_volume * float(np.sum(density))
    digest = config.digest()

    primary = build_uniform(grid, config.partition.patches_per_axis, config.partition.overlap)
    write_patch_masses(out / "patch_masses.csv", primary, decompose(primary, density), digest)

    counts = config.partition.counts or [config.partition.patches_per_axis]
    summary = []
    for count in counts:
        pu = build_uniform(grid, count, config.partition.overlap)
        masses = decompose(pu, density)
        summary.append({
            "patches_per_axis": count,
            "patches": len(pu),
            "sum_of_parts": float(np.sum(masses)),
            "relative_gap": abs(float(np.sum(masses)) - total) / total if total else 0.0,
            "max_partition_deviation": float(np.max(np.abs(pu.total() - 1.0))),
        })
        print(f"  {len(pu):>4} patches: sum={np.sum(masses):.15g}")
    write_json(out / "partition_summary.json",
               {"symbol": a.name, "h": h, "total": total, "partitions": summary}, digest)
    return EXIT_OK


def cmd_oracle(config: ExperimentConfig, out: Path, workers: int) -> int:
    """FFT route vs brute-force kernel route -> oracle.json."""
    h_list = config.require("sweep", "h_list")
    grid = config.grid.build()
    a = config.symbol.build()
    family = config.states.family(grid, config.seed)
    rows = []
    for h in h_list:
        u = family(h)
        eps = dissipation_rate(a, u, h, workers)
        oracle = kernel_oracle(a, u, h, workers)
        gap = abs(eps - oracle) / abs(oracle) if oracle else abs(eps - oracle)
        rows.append({
            "h": h,
            "eps_h": eps,
            "kernel_oracle": oracle,
            "relative_gap": gap,
            "collapsed_kernel_functional": collapsed_kernel_functional(a, u, h),
            "passed": gap <= ORACLE_TOLERANCE,
        })
        print(f"  h={h:<8g} eps_h={eps:.12g} oracle={oracle:.12g} gap={gap:.2e}")
    passed = all(r["passed"] for r in rows)
    write_json(out / "oracle.json", {"symbol": a.name, "tolerance": ORACLE_TOLERANCE, "rows": rows,
                                     "verdict": "pass" if passed else "fail"}, config.digest())
    return EXIT_OK if passed else EXIT_VALIDATION


COMMANDS = {
    "dissipation-sweep": (cmd_dissipation_sweep, "Semiclassical h-sweep of the dissipation rate"),
    "bichar": (cmd_bichar, "Integrate a fan of bicharacteristics"),
    "propagate": (cmd_propagate, "Track a coherent state against its bicharacteristic"),
    "verify-symbol": (cmd_verify_symbol, "Symbol-class, principal-type and dissipativity checks"),
    "partition-report": (cmd_partition_report, "Patch masses of the energy density"),
    "oracle": (cmd_oracle, "Compare eps_h with the brute-force kernel oracle"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=str, required=True, help="JSON experiment config")
    common.add_argument("--out", type=str, default="out", help="Output directory")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (0 = all cores)")
    common.add_argument("--seed", type=_seed, default=None, help="Seed overriding the config's")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")

    parser = _Parser(
        prog="microloc",
        description="microloc CLI - semiclassical microlocal dissipation experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands", parser_class=_Parser)
    for name, (func, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text, parents=[common])
        sub.set_defaults(func=func)
    return parser


def _prepare_output(path: Path) -> bool:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError:
        return False
    return os.access(path, os.W_OK)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="[%(module)-12s] %(message)s")

    out = Path(args.out)
    if not _prepare_output(out):
        print(f"error: output directory {out} is not writable", file=sys.stderr)
        return EXIT_CANTCREAT
    try:
        config = load_config(args.config, seed=args.seed)
        return args.func(config, out, resolve_workers(args.threads))
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GuardError as exc:
        print(f"guard abort: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except OSError as exc:
        print(f"error: cannot write artifacts: {exc}", file=sys.stderr)
        return EXIT_CANTCREAT


if __name__ == "__main__":
    sys.exit(main())
