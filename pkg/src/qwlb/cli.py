"""Command-line interface.

Subcommands: run1d, run2d, curved, map-params, dispersion, convergence,
inspect-checkpoint.  Run parameters come from an INI config file and/or
repeated ``--set section.key=value`` overrides; dedicated flags are
shorthand for common overrides and always win over the file.

Exit codes: 0 success, 2 configuration error, 3 numeric failure
(NaN/singular operator), 4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, fields, harness, solvers
from .errors import CheckpointFormatError, ConfigError, InvalidArgumentError, NumericError


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="INI config file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override any config value (repeatable; flags win over the file)",
    )
    p.add_argument("--scheme", type=str, default=None, help="shorthand for run.scheme")
    p.add_argument("--steps", type=int, default=None, help="shorthand for run.n_steps")
    p.add_argument("--seed", type=int, default=None, help="shorthand for run.seed")
    p.add_argument("--output-dir", type=str, default=None, help="shorthand for run.output_dir")
    p.add_argument("--threads", type=int, default=None, help="shorthand for run.threads (0 = all cores)")


def _config_from(args: argparse.Namespace, force: dict[str, str] | None = None) -> harness.ExperimentConfig:
    overrides = list(args.overrides)
    for flag, key in (
        ("scheme", "run.scheme"),
        ("steps", "run.n_steps"),
        ("seed", "run.seed"),
        ("output_dir", "run.output_dir"),
        ("threads", "run.threads"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    for key, value in (force or {}).items():
        overrides.append(f"{key}={value}")
    return harness.parse_config(args.config, overrides)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qwlb", description=__doc__)
    ap.add_argument("--version", action="version", version=f"qwlb {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run1d", help="run a 1-D scheme (split/qlb/naive/equilibrium)")
    _add_config_args(p)

    p = sub.add_parser("run2d", help="run a 2-D experiment (impurity or njl)")
    _add_config_args(p)

    p = sub.add_parser("curved", help="run the curved-space finite-volume scheme")
    _add_config_args(p)

    p = sub.add_parser("map-params", help="print mass-matrix and Euler-angle representations as CSV")
    _add_config_args(p)
    p.add_argument("--out", type=str, default=None, help="output CSV (default stdout)")

    p = sub.add_parser("dispersion", help="numerical omega(k) table for a constant free mass")
    _add_config_args(p)
    p.add_argument("--m", type=float, default=0.0, help="free mass")
    p.add_argument("--n-k", type=int, default=64, help="number of wavenumbers on [0, pi/dz]")
    p.add_argument("--out", type=str, default=None, help="output CSV (default stdout)")

    p = sub.add_parser("convergence", help="observed order of accuracy under dt refinement")
    _add_config_args(p)
    p.add_argument("--m", type=float, default=0.5, help="free mass")
    p.add_argument("--dts", type=str, default="0.1,0.05,0.025,0.0125", help="comma-separated steps")
    p.add_argument("--reference", choices=["analytic_plane_wave", "fine_grid"], default="analytic_plane_wave")
    p.add_argument("--out", type=str, default=None, help="output CSV (default stdout)")

    p = sub.add_parser("inspect-checkpoint", help="print checkpoint header and norm")
    p.add_argument("path", type=str)
    return ap


def _emit_csv(out_path: str | None, header: list[str], rows, provenance: dict) -> None:
    if out_path is None:
        for key, value in provenance.items():
            sys.stdout.write(f"# {key}={value}\n")
        sys.stdout.write(",".join(header) + "\n")
        for row in rows:
            sys.stdout.write(",".join(harness.fmt(v) for v in row) + "\n")
    else:
        harness.write_csv(Path(out_path), header, rows, provenance)


def _cmd_map_params(args) -> int:
    cfg = _config_from(args)
    scheme = cfg["run"]["scheme"]
    if scheme not in ("split", "qlb"):
        scheme = "qlb"
    lat = harness.build_lattice(cfg)
    mass = harness.build_mass(cfg, lat)
    rows = harness.map_params_rows(mass, lat, scheme, max(1, cfg["run"]["n_steps"]))
    header = ["j", "n", "m0", "mx", "my", "mz", "xi", "alpha", "beta", "theta", "scheme"]
    _emit_csv(args.out, header, rows, cfg.provenance())
    return 0


def _cmd_dispersion(args) -> int:
    cfg = _config_from(args)
    scheme = cfg["run"]["scheme"]
    lat = harness.build_lattice(cfg)
    rows = harness.dispersion_rows(scheme, args.m, lat, args.n_k)
    _emit_csv(args.out, ["k", "omega_plus", "omega_minus"], rows, cfg.provenance())
    return 0


def _cmd_convergence(args) -> int:
    cfg = _config_from(args)
    scheme = cfg["run"]["scheme"]
    dts = tuple(float(s) for s in args.dts.split(","))
    study = solvers.convergence_study(
        solvers.SchemeKind(scheme), (0.0, 0.0, args.m, 0.0), dts, reference=args.reference
    )
    _emit_csv(args.out, ["dt", "error"], zip(study.dts, study.errors), cfg.provenance())
    print(f"observed order for {scheme}: {study.order:.3f}", file=sys.stderr)
    return 0


def _cmd_inspect(args) -> int:
    with open(args.path, "rb") as fh:
        blob = fh.read()
    comps, shape, dz, dt, step = fields.read_checkpoint_bytes(blob)
    import math

    norm = math.sqrt(float((abs(comps) ** 2).sum()) * dz ** len(shape))
    print(f"dims={len(shape)} shape={shape} components={comps.shape[0]}")
    print(f"dz={dz!r} dt={dt!r} step_index={step}")
    print(f"l2_norm={norm!r}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command in ("run1d", "run2d", "curved"):
            force = {}
            if args.command == "run2d":
                force["run.scheme"] = "walk2d"
            elif args.command == "curved":
                force["run.scheme"] = "curved"
            cfg = _config_from(args, force)
            outdir = harness.run(cfg)
            print(f"outputs written to {outdir}")
            return 0
        if args.command == "map-params":
            return _cmd_map_params(args)
        if args.command == "dispersion":
            return _cmd_dispersion(args)
        if args.command == "convergence":
            return _cmd_convergence(args)
        if args.command == "inspect-checkpoint":
            return _cmd_inspect(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except CheckpointFormatError as exc:
        print(f"file format error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
