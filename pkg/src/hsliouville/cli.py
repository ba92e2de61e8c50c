"""Command line entry point: ``hsliouville <command> [scenario] [flags]``.

Commands:

    verify    run the checks selected in the scenario, write report.json
    simulate  write trajectory.csv for the [trajectory] state
    marginal  write marginal.json for the [marginal] point
    chaos     run the chaos duality, pointwise witness and sheet-swap checks
    sinai     write sinai.csv for the [sinai] orbit and run the billiard checks

Flags override scenario keys.  The exit status is 0 when every check
passes, 1 when a check fails and 2 for unusable input.
"""

import argparse
import sys

from . import __version__
from .errors import ParseError, ValidationError
from .scenario import CHECKS, Scenario, load_scenario, run

COMMANDS = ("verify", "simulate", "marginal", "chaos", "sinai")


def _names(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


def build_parser():
    p = argparse.ArgumentParser(prog="hsliouville", description="Two hard spheres: flows and weak-form checks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("scenario", nargs="?", help="scenario file (defaults apply when omitted)")
    g = p.add_argument_group("overrides")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--samples", type=int)
    g.add_argument("--boundary-samples", type=int)
    g.add_argument("--region-samples", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--checks", type=_names, help=f"comma separated subset of: {', '.join(CHECKS)}")
    g.add_argument("--flip-orientation", action="store_true", default=None,
                   help="reverse the boundary normal (debugging; the divergence check must then fail)")
    g.add_argument("--output", dest="output_dir", help="directory for report.json and CSV files")
    return p


def resolve(args):
    sc = load_scenario(args.scenario) if args.scenario else Scenario()
    keys = ("epsilon", "seed", "samples", "boundary_samples", "region_samples", "workers", "checks",
            "flip_orientation", "output_dir")
    return sc.override("run", **{k: getattr(args, k) for k in keys})


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        sc = resolve(args)
    except (ParseError, ValidationError, OSError) as exc:
        print(f"hsliouville: {exc}", file=sys.stderr)
        return 2
    status = run(sc, args.command)
    print(f"hsliouville {args.command}: {'ok' if status == 0 else 'FAILED'} -> {sc.run.output_dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
