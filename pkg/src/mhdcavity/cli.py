"""Command-line interface.

Subcommands: ``solve``, ``sweep``, ``gridstudy``, ``validate`` and ``mms``.
Exit codes: 0 success, 1 not converged (or a failed check), 2 config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .harness import (SweepSpec, run_case, run_grid_study, run_mms, run_sweep,
                      run_validation)

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--workers", type=int, default=1, help="parallel cases")
    common.add_argument("--quiet", action="store_true", help="only report failures")

    p = argparse.ArgumentParser(
        prog="mhdcavity",
        description="Steady MHD mixed convection with heat and mass transfer in a cavity.",
        epilog="exit codes: 0 success, 1 not converged or failed check, 2 config error")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="run one case file")
    s.add_argument("case")
    s = sub.add_parser("sweep", parents=[common], help="sweep Ri, Ha and Br")
    s.add_argument("case")
    s.add_argument("--ri", type=_floats, required=True)
    s.add_argument("--ha", type=_floats, required=True)
    s.add_argument("--br", type=_floats, required=True)
    s = sub.add_parser("gridstudy", parents=[common], help="grid-independence study")
    s.add_argument("case")
    s.add_argument("--levels", type=int, default=6)
    sub.add_parser("validate", parents=[common], help="benchmark and verification suite")
    s = sub.add_parser("mms", parents=[common], help="manufactured-solution orders")
    s.add_argument("--levels", type=int, default=3)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    say = (lambda *a: None) if args.quiet else print
    try:
        return _dispatch(args, say)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _out_dir(args, config=None) -> Path:
    out = args.out or Path(config.output.directory if config else "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dispatch(args, say) -> int:
    if args.command == "solve":
        config = load_config(args.case)
        res = run_case(config, _out_dir(args, config))
        for tag, nu in res.report.averages.items():
            say(f"Nu_avg {tag.name}: {nu:.6g}")
        for kind, path in res.files.items():
            say(f"wrote {kind}: {path}")
        if not res.converged:
            print(f"not converged after {res.solution.iterations} iterations", file=sys.stderr)
            return EXIT_NOT_CONVERGED
        return EXIT_OK

    if args.command == "sweep":
        config = load_config(args.case)
        spec = SweepSpec(tuple(args.ri), tuple(args.ha), tuple(args.br))
        path = _out_dir(args, config) / f"{config.output.prefix}_sweep.csv"
        rows = run_sweep(config, spec, args.workers, path)
        say(f"wrote {path} ({len(rows)} rows)")
        return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOT_CONVERGED

    if args.command == "gridstudy":
        config = load_config(args.case)
        path = _out_dir(args, config) / f"{config.output.prefix}_gridstudy.csv"
        study = run_grid_study(config, args.levels, path)
        for r in study["rows"]:
            say(f"{r['element_count']:6d}  {r['Nu_avg_left']:.6g}  {r['Nu_avg_right']:.6g}")
        ch = study["relative_change"]
        say(f"relative change between finest levels: left {ch['left']:.3%}, "
            f"right {ch['right']:.3%}")
        return EXIT_OK if all(study["converged"]) else EXIT_NOT_CONVERGED

    if args.command == "validate":
        checks = run_validation()
        _report(checks, _out_dir(args) / "validation.csv", say)
        return EXIT_OK if all(c.passed for c in checks) else EXIT_NOT_CONVERGED

    if args.command == "mms":
        table = run_mms(args.levels)
        for k, h in enumerate(table["h"]):
            errs = "  ".join(f"{f}={e[k]:.3e}" for f, e in table["errors"].items())
            say(f"h={h:.4g}  {errs}")
        _report(table["checks"], _out_dir(args) / "mms.csv", say)
        return EXIT_OK if all(c.passed for c in table["checks"]) else EXIT_NOT_CONVERGED
    raise AssertionError(args.command)


def _report(checks, path, say) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["suite", "check", "target", "obtained", "tolerance", "passed"])
        for c in checks:
            w.writerow([c.suite, c.name, c.target, c.obtained, c.tolerance, c.passed])
            if not c.passed:
                print(c.line(), file=sys.stderr)
            else:
                say(c.line())
    say(f"wrote {path}")


if __name__ == "__main__":
    sys.exit(main())
