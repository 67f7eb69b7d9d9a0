"""
Command-line entry point.

    nvgates run <config> [--out DIR] [--seed N] [--threads N] [--dt-max T]
    nvgates validate <config>
    nvgates diff <report> <golden> [--tol NAME=VALUE ...] [--default-tol X]
    nvgates list

``<config>`` is a path or the name of a bundled config (``fig2b``,
``table1``, ...). Exit status: 0 pass, 1 physics check failed (or runtime
error), 2 invalid config or arguments.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .scenarios import ConfigError, load_config, report_diff, run_scenario
from .units import UnitError, parse_quantity

OUT_ENV = "NVGATES_OUT"
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def bundled_configs():
    """Names of the configs shipped with the package."""
    root = resources.files("nvgates") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_config(name):
    """Path of ``name``: an existing file, else a bundled config."""
    p = Path(name)
    if p.exists():
        return p
    if name in bundled_configs():
        return Path(str(resources.files("nvgates") / "configs" / f"{name}.toml"))
    raise ConfigError(f"{name}: no such file or bundled config "
                      f"(bundled: {', '.join(bundled_configs())})")


def _parser():
    ap = argparse.ArgumentParser(prog="nvgates", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./nvgates_out)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--threads", type=int, default=1, help="maximum worker processes")
    r.add_argument("--dt-max", help="cap on the integration step, e.g. '1 ns'")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    d = sub.add_parser("diff", help="compare a report with a golden report")
    d.add_argument("report")
    d.add_argument("golden")
    d.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                   help="per-quantity tolerance (repeatable)")
    d.add_argument("--default-tol", type=float, default=1e-6)
    sub.add_parser("list", help="list bundled configs")
    return ap


def _run(args):
    sc = load_config(resolve_config(args.config))
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed: must be non-negative")
        sc.seed = args.seed
    if args.dt_max is not None:
        try:
            dt = parse_quantity(args.dt_max, "time", "--dt-max")
        except UnitError as exc:
            raise ConfigError(str(exc)) from None
        if dt <= 0:
            raise ConfigError("--dt-max: must be positive")
        sc.policy = replace(sc.policy, dt_max=dt)
    if args.threads < 1:
        raise ConfigError("--threads: must be at least 1")
    base = args.out or os.environ.get(OUT_ENV) or "nvgates_out"
    out = Path(base) / sc.label
    report = run_scenario(sc, out, workers=args.threads)
    for c in report["checks"]:
        print(f"{'PASS' if c['ok'] else 'FAIL'} {c['name']}: {c['value']} ({c['requirement']})")
    print(f"{report['label']}: {report['status']} -> {out}")
    return EXIT_PASS if report["status"] == "pass" else EXIT_FAIL


def _diff(args):
    tols = {}
    for item in args.tol:
        name, _, val = item.rpartition("=")
        try:
            tols[name] = float(val)
        except ValueError:
            raise ConfigError(f"--tol: cannot read {item!r}") from None
        if not name:
            raise ConfigError(f"--tol: cannot read {item!r}")
    try:
        new = json.loads(Path(args.report).read_text())
        gold = json.loads(Path(args.golden).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report: {exc}") from None
    try:
        ok, lines = report_diff(new, gold, tols, args.default_tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print("\n".join(lines))
    print("diff: pass" if ok else "diff: fail")
    return EXIT_PASS if ok else EXIT_FAIL


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            print("\n".join(bundled_configs()))
            return EXIT_PASS
        if args.command == "validate":
            sc = load_config(resolve_config(args.config))
            print(f"{sc.label}: valid {sc.kind} config")
            return EXIT_PASS
        if args.command == "run":
            return _run(args)
        return _diff(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure; partial artifacts are kept
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
