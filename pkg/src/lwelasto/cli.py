"""Command-line entry point: ``lwelasto <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 solver failure or
instability, 4 refused because the time step violates the CFL restriction.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CFL = 0, 2, 3, 4


def _threads(n):
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _load(args):
    from .scenarios import ConfigError, config_from_dict, load_preset, parse_config
    if bool(args.config) == bool(args.preset):
        raise ConfigError("give exactly one of --config or --preset")
    if args.preset:
        cfg = load_preset(args.preset, full=args.full)
    else:
        cfg = parse_config(args.config)
        if args.full:
            cfg = config_from_dict(cfg.raw, full=True)
    changes = {}
    if args.degree is not None:
        if not 1 <= args.degree <= 4:
            raise ConfigError("--degree must be in 1..4")
        changes["degree"] = args.degree
    if args.allow_cfl_violation:
        changes["allow_cfl_violation"] = True
    if changes:
        cfg = cfg.with_changes(**changes)
    if args.full:
        print("warning: --full uses the published resolution (h = 3^-3, degree 4); this needs "
              "several million unknowns and hours of CPU time", file=sys.stderr)
    return cfg


def _numbers(text):
    from .scenarios import parse_number
    return [parse_number(v) for v in text.split(",") if v.strip()]


def _cmd_run(args):
    from .scenarios import cmd_run
    cfg = _load(args)
    out = cmd_run(cfg, args.out, deterministic=args.deterministic)
    print(f"{cfg.name}: max ||w|| = {out['w_max']:.4e}; results in {args.out}")
    if not cfg.coercive:
        print("warning: lam + mu <= 0, the stiffness form is not coercive", file=sys.stderr)
    return EXIT_OK


def _cmd_time(args):
    from .io_emit import convergence_table_text
    from .scenarios import cmd_convergence_time, parse_number
    cfg = _load(args)
    series = cmd_convergence_time(cfg, _numbers(args.k), parse_number(args.k_ref), out_dir=args.out,
                                  deterministic=args.deterministic)
    print(convergence_table_text(series), end="")
    return EXIT_OK


def _cmd_space(args):
    from .io_emit import convergence_table_text
    from .scenarios import cmd_convergence_space, parse_number
    cfg = _load(args)
    series = cmd_convergence_space(cfg, _numbers(args.h), parse_number(args.h_ref), out_dir=args.out,
                                   deterministic=args.deterministic)
    print(convergence_table_text(series), end="")
    return EXIT_OK


def _cmd_stability(args):
    from .scenarios import cmd_stability_demo
    cfg = _load(args)
    res = cmd_stability_demo(cfg, out_dir=args.out)
    print(f"compliant run: max ||w|| = {res.compliant_max:.4e} (bounded: {res.compliant_bounded})")
    print(f"violating run (k = {res.k_violating:.4g}): growth x{res.violating_growth:.3g}, "
          f"aborted: {res.violating_aborted} (unstable: {res.violating_unstable})")
    return EXIT_OK


def _cmd_mesh_info(args):
    from .mesh import build_box_mesh, mesh_statistics
    from .space import build_space
    cfg = _load(args)
    mesh = build_box_mesh(cfg.domain)
    info = mesh_statistics(mesh)
    info["degree"] = cfg.degree
    info["scalar_dofs"] = build_space(mesh, cfg.degree).num_dofs
    info["cells"] = list(cfg.domain.n)
    print(json.dumps(info, indent=2, default=float))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="lwelasto", description="Elastodynamics experiments on a box.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML or JSON configuration file")
        sp.add_argument("--preset", help="built-in configuration name")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--degree", type=int, default=None)
        sp.add_argument("--full", action="store_true", help="published resolution (expensive)")
        sp.add_argument("--allow-cfl-violation", action="store_true")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--deterministic", action="store_true", help="omit timings from outputs")

    sp = sub.add_parser("run", help="simulate one configuration")
    common(sp)
    sp.set_defaults(func=_cmd_run)
    sp = sub.add_parser("convergence-time", help="temporal self-convergence study")
    common(sp)
    sp.add_argument("--k", required=True, help="comma-separated steps, e.g. 3^-3,3^-4,3^-5")
    sp.add_argument("--k-ref", required=True)
    sp.set_defaults(func=_cmd_time)
    sp = sub.add_parser("convergence-space", help="spatial self-convergence study")
    common(sp)
    sp.add_argument("--h", required=True, help="comma-separated cell spacings")
    sp.add_argument("--h-ref", required=True)
    sp.set_defaults(func=_cmd_space)
    sp = sub.add_parser("stability-demo", help="compliant run against a CFL-violating run")
    common(sp)
    sp.set_defaults(func=_cmd_stability)
    sp = sub.add_parser("mesh-info", help="print mesh statistics")
    common(sp)
    sp.set_defaults(func=_cmd_mesh_info)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _threads(args.threads)
    from .scenarios import ConfigError
    from .solver import SolverError
    from .timestepper import CFLRefusal, InstabilityError
    if args.out and args.command != "mesh-info":
        Path(args.out).mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CFLRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CFL
    except (SolverError, InstabilityError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
