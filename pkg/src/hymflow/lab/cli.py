"""Command line entry point: hymflow {run, hn-type, accept, plot}.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ACCEPT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_vectors(tokens):
    """Split tokens into vectors; '(3 1) (2 0)' or '3,1 2,0' style groups."""
    text = " ".join(tokens)
    if "(" in text or ")" in text:
        groups = re.findall(r"\(([^()]*)\)", text)
        rest = re.sub(r"\(([^()]*)\)", " ", text).strip()
        if rest or not groups:
            raise UsageError(f"malformed vector list {text!r}")
    elif any("," in t for t in tokens):
        groups = tokens
    else:
        groups = [text]
    out = []
    for g in groups:
        parts = [p for p in re.split(r"[\s,]+", g.strip()) if p]
        if not parts:
            raise UsageError("empty vector")
        try:
            out.append([float(p) for p in parts])
        except ValueError:
            raise UsageError(f"not a number in {g!r}") from None
    return out


def cmd_hn_type(args) -> int:
    from .. import hn

    op = args.op
    try:
        if op == "tensor":
            vecs = _parse_vectors(args.values)
            if len(vecs) != 2:
                raise UsageError("tensor needs two vectors, e.g. tensor (3 1) (2 0)")
            res = hn.tensor_type(hn.sort_tau(vecs[0]), hn.sort_tau(vecs[1]))
        else:
            if len(args.values) < 2:
                raise UsageError(f"{op} needs a power k followed by a degree vector")
            try:
                k = int(args.values[0])
            except ValueError:
                raise UsageError(f"power must be an integer, got {args.values[0]!r}") from None
            vecs = _parse_vectors(args.values[1:])
            if len(vecs) != 1:
                raise UsageError(f"{op} takes a single vector")
            res = hn.apply(op, hn.sort_tau(vecs[0]), k)
    except (UsageError, hn.HNError) as exc:
        print(f"hymflow hn-type: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for v in res:
        v = 0.0 if v == 0 else v
        print(f"{v:.12g}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .config import ConfigError, load
    from .runner import RunFailure, run_config

    try:
        cfg = load(args.config)
    except ConfigError as exc:
        print(f"hymflow run: {args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.svg and "svg" not in cfg.outputs.formats:
        cfg.outputs.formats.append("svg")
    try:
        result = run_config(cfg, out_dir=args.out)
    except RunFailure as exc:
        msg = f"hymflow run: numerical failure: {exc}"
        if exc.dump is not None:
            msg += f" (state dump: {exc.dump})"
        print(msg, file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:  # geometry, bundle or integrator validation
        print(f"hymflow run: invalid experiment: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for p in result.files:
        print(p)
    return EXIT_OK


def cmd_accept(args) -> int:
    from .acceptance import SUITES, UnknownSuite, run_suite

    if args.list:
        for name, crit in SUITES.items():
            print(f"{name}: criteria {', '.join(map(str, crit))}")
        return EXIT_OK
    if args.suite is None:
        print("hymflow accept: error: a suite name is required", file=sys.stderr)
        return EXIT_USAGE
    lines = []

    def report(r):
        print(r.summary(), file=sys.stderr)
        d = r.to_dict()
        lines.append(d)
        if not args.json:
            print(json.dumps(d))

    try:
        results = run_suite(args.suite, report=report)
    except UnknownSuite as exc:
        print(f"hymflow accept: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"hymflow accept: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.json:
        from .runner import atomic_write

        atomic_write(args.json, json.dumps({"suite": args.suite, "results": lines}, indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPT


def cmd_plot(args) -> int:
    from .plots import plot_file

    try:
        paths = plot_file(args.trace, args.out)
    except (OSError, ValueError) as exc:
        print(f"hymflow plot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for p in paths:
        print(p)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hymflow", description="Hermitian-Yang-Mills flow laboratory")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (overrides outputs.dir)")
    r.add_argument("--svg", action="store_true", help="also write SVG plots")
    r.set_defaults(func=cmd_run)

    h = sub.add_parser("hn-type", help="HN type of a tensor operation",
                       description="e.g. 'ext 2 3 1 0', 'sym 3 1 1', 'power 2 1 0', 'tensor (3 1) (2 0)'")
    h.add_argument("op", choices=("tensor", "power", "sym", "ext"))
    h.add_argument("values", nargs="+")
    h.set_defaults(func=cmd_hn_type)

    a = sub.add_parser("accept", help="run an acceptance suite")
    a.add_argument("suite", nargs="?")
    a.add_argument("--list", action="store_true", help="list available suites")
    a.add_argument("--json", default=None, help="write the full report to this file")
    a.set_defaults(func=cmd_accept)

    pl = sub.add_parser("plot", help="render SVG plots for a JSON-lines trace")
    pl.add_argument("trace")
    pl.add_argument("--out", default=None)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
