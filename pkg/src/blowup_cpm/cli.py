"""Command line: ``python -m blowup_cpm <command> [--config PATH] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .errors import CpmError

COMMANDS = {
    "converge": harness.cmd_converge,
    "eps-study": harness.cmd_eps_study,
    "cp-check": harness.cmd_cp_check,
    "solve": harness.cmd_solve,
    "surface-demo": harness.cmd_surface_demo,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"ERROR usage {message}\n")
        raise SystemExit(2)


def build_parser():
    p = _Parser(prog="blowup_cpm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", metavar="PATH", help="flat 'key = value' file")
        s.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                       dest="overrides", help="override one config key (repeatable)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = harness.load_config(args.config, args.overrides)
        COMMANDS[args.command](cfg)
    except CpmError as exc:
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"ERROR {exc.code} {msg}\n")
        return 1
    except MemoryError:
        sys.stderr.write("ERROR memory out of memory\n")
        return 1
    return 0
