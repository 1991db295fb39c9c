#!/usr/bin/env python3
"""
iac-analysis - usage bounds and estimate checking for CloudFormation templates
"""

import sys
import json
import argparse
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.analysis import AnalysisOptions, IacAnalyzer, Verdict
from core.catalog import get_catalog, load_catalog
from core.config import get_config
from core.constraints import CATEGORY_ORDER
from core.errors import IacAnalysisError
from core.graph import graph_to_dict, to_dot
from core.smt import BoundKind

import yaml


# ═══════════════════════════════════════════════════════════════════
#  Version
# ═══════════════════════════════════════════════════════════════════

def get_version() -> str:
    version_file = Path(__file__).parent / 'VERSION'
    if version_file.exists():
        return version_file.read_text().strip()
    return get_config().version

VERSION = get_version()

EXIT_USAGE = 3

# ═══════════════════════════════════════════════════════════════════
#  Colors
# ═══════════════════════════════════════════════════════════════════

class Colors:
    CYAN = '\033[38;5;87m'
    GREEN = '\033[38;5;120m'
    YELLOW = '\033[38;5;228m'
    RED = '\033[38;5;210m'
    GRAY = '\033[38;5;245m'
    BOLD = '\033[1m'
    END = '\033[0m'

c = Colors


def paint(text: str, color: str, stream=None) -> str:
    stream = stream or sys.stdout
    try:
        tty = stream.isatty()
    except (AttributeError, ValueError):
        tty = False
    return f"{color}{text}{c.END}" if tty else text


# ═══════════════════════════════════════════════════════════════════
#  Logger
# ═══════════════════════════════════════════════════════════════════

class ColoredFormatter(logging.Formatter):
    COLORS = {
        'DEBUG': c.GRAY, 'INFO': c.GREEN,
        'WARNING': c.YELLOW, 'ERROR': c.RED
    }
    ICONS = {'DEBUG': '🔍', 'INFO': '✨', 'WARNING': '⚠️', 'ERROR': '❌'}

    def __init__(self, use_color: bool = True):
        super().__init__()
        self.use_color = use_color

    def format(self, record):
        icon = self.ICONS.get(record.levelname, '')
        time_str = self.formatTime(record, '%H:%M:%S')
        line = f"{icon} [{time_str}] {record.getMessage()}"
        if not self.use_color:
            return line
        return f"{self.COLORS.get(record.levelname, '')}{line}{c.END}"


def setup_logging(debug: bool = False) -> logging.Logger:
    level = logging.DEBUG if debug else logging.WARNING
    handler = logging.StreamHandler(sys.stderr)
    try:
        tty = sys.stderr.isatty()
    except (AttributeError, ValueError):
        tty = False
    handler.setFormatter(ColoredFormatter(use_color=tty))

    logger = logging.getLogger('iac')
    logger.setLevel(level)
    logger.handlers = [handler]
    logger.propagate = False
    return logger


# ═══════════════════════════════════════════════════════════════════
#  Argument parsing
# ═══════════════════════════════════════════════════════════════════

class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with code 3"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('--json', action='store_true', help='Machine-readable output')
    common.add_argument('--dump-smt', metavar='FILE', help='Write the solver script to FILE')
    common.add_argument('--solver', metavar='PATH', help='SMT solver executable (z3, cvc5, ...)')
    common.add_argument('--catalog', metavar='FILE', help='Extra resource catalog merged over the bundled one')
    common.add_argument('--timeout', type=float, metavar='SECONDS', help='Per-query solver timeout')
    common.add_argument('--debug', action='store_true', help='Debug logging on stderr')

    parser = ArgumentParser(
        prog='iac-analysis',
        description='Usage bounds and estimate validation for CloudFormation templates',
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument('--version', action='version', version=f'iac-analysis {VERSION}')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('estimates-template', parents=[common], help='Print a YAML usage-estimates skeleton')
    p.add_argument('template')

    p = sub.add_parser('check', parents=[common], help='Check usage estimates against the constraints')
    p.add_argument('template')
    p.add_argument('app_constraints', nargs='*', metavar='APP_CONSTRAINTS')
    p.add_argument('--estimates', metavar='FILE', help='Filled-in estimates YAML')

    p = sub.add_parser('bounds', parents=[common], help='Lower and upper usage bounds')
    p.add_argument('template')
    p.add_argument('app_constraints', nargs='*', metavar='APP_CONSTRAINTS')
    p.add_argument('--target', action='append', metavar='ID.METRIC',
                   help='Node metric to bound (repeatable; default: every public metric)')
    p.add_argument('--estimates', metavar='FILE', help='Filled-in estimates YAML')

    p = sub.add_parser('constraints', parents=[common], help='List generated constraints by category')
    p.add_argument('template')
    p.add_argument('app_constraints', nargs='*', metavar='APP_CONSTRAINTS')

    p = sub.add_parser('graph', parents=[common], help='Export the resource graph')
    p.add_argument('template')
    p.add_argument('--format', choices=['dot', 'json'], default='dot')

    p = sub.add_parser('stats', parents=[common], help='Graph statistics and constraint counts')
    p.add_argument('template')

    return parser


# ═══════════════════════════════════════════════════════════════════
#  Commands
# ═══════════════════════════════════════════════════════════════════

def _emit(data: Any):
    print(json.dumps(data, indent=2))


def _analyzer(args) -> IacAnalyzer:
    from core.solvers import get_backend

    catalog = load_catalog(args.catalog) if args.catalog else get_catalog()
    options = AnalysisOptions.from_config(dump_smt=args.dump_smt)
    backend = None
    if args.solver or args.timeout is not None:
        backend = get_backend(solver_path=args.solver, timeout=args.timeout)
    analyzer = IacAnalyzer.from_path(args.template, catalog=catalog, backend=backend, options=options)
    for path in getattr(args, 'app_constraints', None) or []:
        analyzer.add_user_constraint_file(path)
    return analyzer


def _dump_base(analyzer: IacAnalyzer, args):
    if args.dump_smt:
        Path(args.dump_smt).write_text(analyzer.script().render(), encoding='utf-8')


def cmd_estimates_template(args) -> int:
    analyzer = _analyzer(args)
    _dump_base(analyzer, args)
    text = analyzer.estimates_template()
    if args.json:
        _emit({"estimates": yaml.safe_load(text) or {}})
    else:
        sys.stdout.write(text)
    return 0


def cmd_check(args) -> int:
    analyzer = _analyzer(args)
    estimates = analyzer.load_estimates_file(args.estimates) if args.estimates else None
    report = analyzer.check(estimates)
    if args.json:
        _emit(report.to_dict())
    else:
        color = {Verdict.VALID: c.GREEN, Verdict.INVALID: c.RED}.get(report.verdict, c.YELLOW)
        lines = report.render().splitlines()
        print(paint(lines[0], color))
        for line in lines[1:]:
            print(line)
    return report.exit_code


def cmd_bounds(args) -> int:
    analyzer = _analyzer(args)
    estimates = analyzer.load_estimates_file(args.estimates) if args.estimates else None
    reports = analyzer.all_bounds(args.target, estimates)
    if args.json:
        _emit({"bounds": [r.to_dict() for r in reports]})
    else:
        for report in reports:
            print(report.render())
        assumptions = reports[0].assumptions if reports else []
        if assumptions:
            print(paint("Assuming:", c.GRAY))
            for line in assumptions:
                print(f"  {line}")
    kinds = {b.kind for r in reports for b in (r.lower, r.upper)}
    if BoundKind.INFEASIBLE in kinds:
        return 1
    if BoundKind.UNKNOWN in kinds:
        return 2
    return 0


def cmd_constraints(args) -> int:
    analyzer = _analyzer(args)
    _dump_base(analyzer, args)
    constraints = analyzer.constraints
    counts = constraints.counts()
    if args.json:
        _emit({
            "counts": counts,
            "total": len(constraints),
            "constraints": [k.describe() for k in constraints],
        })
        return 0
    for category in CATEGORY_ORDER:
        group = constraints.by_category(category)
        if not group:
            continue
        print(paint(f"{category.value} ({len(group)})", c.BOLD))
        for k in group:
            where = f"[{k.anchor}] " if k.anchor else ""
            print(f"  {k.name:<12} {where}{k.render()}")
    print(f"Total: {len(constraints)}  " + "  ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_graph(args) -> int:
    analyzer = _analyzer(args)
    _dump_base(analyzer, args)
    if args.json or args.format == 'json':
        _emit(graph_to_dict(analyzer.graph))
    else:
        sys.stdout.write(to_dot(analyzer.graph))
    return 0


def cmd_stats(args) -> int:
    analyzer = _analyzer(args)
    _dump_base(analyzer, args)
    stats = analyzer.stats()
    if args.json:
        _emit(stats)
        return 0
    for key, value in stats.items():
        if isinstance(value, dict):
            value = "  ".join(f"{k}={v}" for k, v in value.items())
        elif isinstance(value, float):
            value = f"{value:.3f}"
        print(f"{key:<22} {value}")
    return 0


COMMANDS = {
    'estimates-template': cmd_estimates_template,
    'check': cmd_check,
    'bounds': cmd_bounds,
    'constraints': cmd_constraints,
    'graph': cmd_graph,
    'stats': cmd_stats,
}


# ═══════════════════════════════════════════════════════════════════
#  Main
# ═══════════════════════════════════════════════════════════════════

def _fail(message: str) -> int:
    print(paint(f"error: {message}", c.RED, sys.stderr), file=sys.stderr)
    return EXIT_USAGE


def run(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return _fail(str(e))
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else 0

    setup_logging(args.debug or get_config().logging.debug)
    try:
        return COMMANDS[args.command](args)
    except IacAnalysisError as e:
        return _fail(str(e))
    except OSError as e:
        return _fail(f"{e.filename or ''}: {e.strerror or e}".lstrip(": "))


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
