"""Command line entry point.

    quasinv <experiment> [--key value]... --seed S --out DIR [--config FILE] [--no-plots]

A config file holds ``key = value`` lines (``#`` starts a comment). Flags on
the command line override it. Every run writes ``manifest.txt`` echoing the
resolved configuration; it can be fed back through ``--config``.

Exit status: 0 on success, 2 when a checked inequality or tolerance fails,
1 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, InputError, QuasinvError
from .experiments import REGISTRY, Experiment, Outcome, format_value
from .mc import check_seed

MANIFEST = "manifest.txt"
RESERVED = ("experiment", "seed")


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file into raw strings."""
    entries: dict[str, str] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{path}:{num}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        if key in entries:
            raise InputError(f"{path}:{num}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def resolve(exp: Experiment, raw: dict[str, str]) -> dict:
    """Defaults overlaid with ``raw``; unknown keys are an error."""
    params = exp.defaults()
    for key, text in raw.items():
        params[key] = exp.param(key).parse(text)
    return params


def cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise QuasinvError(f"{path.name}: row width {len(row)} != header width {len(header)}")
            writer.writerow([cell(v) for v in row])


def write_manifest(path: Path, exp: Experiment, params: dict, seed: int) -> None:
    lines = [f"experiment = {exp.name}", f"seed = {seed}"]
    lines += [f"{p.name} = {format_value(params[p.name])}" for p in exp.params]
    path.write_text("\n".join(lines) + "\n")


def run(name: str, params: dict, seed: int, out_dir, plots: bool = True) -> tuple[int, Outcome]:
    """Run one experiment and write its artifacts. Returns ``(status, outcome)``."""
    exp = REGISTRY[name]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir / MANIFEST, exp, params, seed)
    outcome = exp.run(params, seed)
    for table in outcome.tables:
        write_table(out_dir / f"{table.name}.csv", table.header, table.rows)
    for job in outcome.extra_files:
        job(out_dir)
    if plots:
        for job in outcome.plots:
            job(out_dir)
    return (2 if outcome.failures else 0), outcome


def _help_text(exp: Experiment) -> str:
    lines = [exp.summary, "", "parameters:"]
    for p in exp.params:
        choice = f" (one of {', '.join(p.choices)})" if p.choices else ""
        lines.append(f"  --{p.name.replace('_', '-'):<16} {p.kind:<6} default {p.default!r}: {p.help}{choice}")
    lines += ["", "output files:"]
    for fname, header in exp.schemas.items():
        lines.append(f"  {fname}: {header}")
    lines.append(f"  {MANIFEST}: resolved configuration, reusable with --config")
    return "\n".join(lines)


def _top_parser() -> argparse.ArgumentParser:
    listing = "\n".join(f"  {n:<20} {e.summary}" for n, e in REGISTRY.items())
    parser = argparse.ArgumentParser(
        prog="quasinv",
        allow_abbrev=False,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Numerical experiments on quasi-invariance and Harnack inequalities.",
        epilog=f"experiments:\n{listing}\n\nRun 'quasinv <experiment> --help' for parameters and CSV layouts.",
    )
    parser.add_argument("experiment", nargs="?", help="experiment name (may come from --config)")
    parser.add_argument("--seed", help="64-bit seed (required unless given in --config)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--config", help="key = value file, e.g. a previous manifest.txt")
    parser.add_argument("--no-plots", action="store_true", help="skip SVG figures")
    return parser


def _partition(argv: list[str]) -> tuple[list[str], list[str]]:
    """Separate the fixed flags and the experiment name from parameter overrides.

    Done by hand so that values such as ``-1`` stay next to their key.
    """
    known, rest = [], []
    i = 0
    while i < len(argv):
        tok = argv[i]
        flag = tok.split("=", 1)[0]
        if flag == "--no-plots":
            known.append(tok)
        elif flag in ("--seed", "--out", "--config"):
            known.append(tok)
            if "=" not in tok and i + 1 < len(argv):
                i += 1
                known.append(argv[i])
        elif tok.startswith("--"):
            rest.append(tok)
            if "=" not in tok and i + 1 < len(argv):
                i += 1
                rest.append(argv[i])
        else:
            known.append(tok)
        i += 1
    return known, rest


def _split_overrides(rest: list[str]) -> dict[str, str]:
    raw: dict[str, str] = {}
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--"):
            raise InputError(f"unexpected argument {tok!r}")
        key, sep, value = tok[2:].partition("=")
        if not sep:
            if i + 1 >= len(rest):
                raise InputError(f"{tok} needs a value")
            i += 1
            value = rest[i]
        raw[key.replace("-", "_")] = value
        i += 1
    return raw


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _top_parser()
    wants_help = any(a in ("-h", "--help") for a in argv)
    if wants_help:
        names = [a for a in argv if a in REGISTRY]
        if names:
            print(_help_text(REGISTRY[names[0]]))
            return 0
        parser.print_help()
        return 0
    known, rest = _partition(argv)
    try:
        args = parser.parse_args(known)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        raw = read_config(args.config) if args.config else {}
        name = raw.pop("experiment", None)
        seed_text = raw.pop("seed", None)
        if args.experiment:
            name = args.experiment
        if name is None:
            raise InputError("no experiment given")
        if name not in REGISTRY:
            raise InputError(f"unknown experiment {name!r}; choose from {', '.join(REGISTRY)}")
        overrides = _split_overrides(rest)
        for key in RESERVED:
            if key in overrides:
                raise InputError(f"--{key} is not an experiment parameter")
        raw.update(overrides)
        if args.seed is not None:
            seed_text = args.seed
        if seed_text is None:
            raise InputError("--seed is required")
        try:
            seed = int(seed_text)
        except ValueError:
            raise InputError(f"seed must be an integer, got {seed_text!r}") from None
        seed = check_seed(seed)
        if not args.out:
            raise InputError("--out is required")
        params = resolve(REGISTRY[name], raw)
        status, outcome = run(name, params, seed, args.out, plots=not args.no_plots)
    except InfeasibleError as exc:
        print(f"quasinv: infeasible: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"quasinv: error: {exc}", file=sys.stderr)
        return 1
    except QuasinvError as exc:
        print(f"quasinv: error: {exc}", file=sys.stderr)
        return 1
    for msg in outcome.warnings:
        print(f"quasinv: warning: {msg}", file=sys.stderr)
    for msg in outcome.failures:
        print(f"quasinv: check failed: {msg}", file=sys.stderr)
    print(f"{name}: {'ok' if status == 0 else 'checks failed'}; wrote {args.out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
