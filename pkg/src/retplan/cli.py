"""Command-line front end.

Subcommands:
    test       run the retention-of-effect test on group data
    plan       sample size for an alternative
    alloc      optimal allocation and the rule-of-thumb comparison
    power      exact or Monte-Carlo power for given group sizes
    reproduce  regenerate a reference table with a diff against published values

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from collections import defaultdict

import numpy as np

from .errors import (BudgetExceeded, InconsistentStat, MissingGroup, NumericalError, ParseError,
                     RetError, ValidationError)
from .families import FamilySpec, GroupStat, Normal, family_names, get_family
from .hypothesis import RetentionHypothesis
from .kl_projection import Weights
from .planning import Alternative, gssp, optimal_allocation, rule_of_thumb_check, sigma0_squared
from .power_engine import DEFAULT_BUDGET, MIN_REPS, PowerQuery, compute_power
from .reference_tables import REPRODUCERS
from .ret_test import GroupData, run_test

SCHEMA = 1
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4


# -- input -------------------------------------------------------------------

def ingest_group_data(path: str, family: FamilySpec) -> GroupData:
    """Read group data from a CSV file.

    Two layouts are accepted.  Summary layout: columns ``group, n, stat``
    (plus ``sum_sq`` for the normal family), one row per group.  Raw layout:
    columns ``group, value``, one row per patient.

    Raises:
        ParseError: unreadable file, unknown layout or malformed row.
        MissingGroup: one of T, R, P is absent.
        InconsistentStat: duplicate group rows or statistics that do not fit
            the group size.
    """
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    reader = csv.reader(io.StringIO(text))
    header = None
    for lineno, row in enumerate(reader, start=1):
        if row and any(c.strip() for c in row):
            header = [c.strip().lower() for c in row]
            break
    if header is None:
        raise ParseError("file is empty", line=1)
    if "group" not in header:
        raise ParseError("header must contain a 'group' column", line=lineno)
    rows = [(i, r) for i, r in enumerate(reader, start=lineno + 1) if r and any(c.strip() for c in r)]
    if {"n", "stat"} <= set(header):
        stats = _summary_rows(rows, header, family)
    elif "value" in header:
        stats = _raw_rows(rows, header, family)
    else:
        raise ParseError("header needs 'group,n,stat' or 'group,value' columns", line=lineno)
    missing = [g for g in "TRP" if g not in stats]
    if missing:
        raise MissingGroup(f"no data for group(s) {', '.join(missing)}")
    return GroupData(stats["T"], stats["R"], stats["P"])


def _field(row, header, name, lineno, conv):
    try:
        raw = row[header.index(name)].strip()
    except IndexError:
        raise ParseError(f"missing value for column {name!r}", line=lineno) from None
    try:
        return conv(raw)
    except ValueError:
        raise ParseError(f"cannot parse {name} value {raw!r}", line=lineno) from None


def _group(row, header, lineno) -> str:
    g = _field(row, header, "group", lineno, str).upper()
    if g not in ("T", "R", "P"):
        raise ParseError(f"group must be T, R or P, got {g!r}", line=lineno)
    return g


def _int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(text)
    return int(v)


def _summary_rows(rows, header, family):
    out = {}
    needs_sq = isinstance(family, Normal)
    if needs_sq and "sum_sq" not in header:
        raise ParseError("normal family needs a 'sum_sq' column", line=1)
    for lineno, row in rows:
        g = _group(row, header, lineno)
        if g in out:
            raise InconsistentStat(f"line {lineno}: duplicate row for group {g}")
        n = _field(row, header, "n", lineno, _int)
        stat = _field(row, header, "stat", lineno, float)
        sq = _field(row, header, "sum_sq", lineno, float) if needs_sq else None
        try:
            out[g] = family.validate_stat(GroupStat(n, stat, sq))
        except InconsistentStat as exc:
            raise InconsistentStat(f"line {lineno}: {exc}") from None
    return out


def _raw_rows(rows, header, family):
    values = defaultdict(list)
    for lineno, row in rows:
        g = _group(row, header, lineno)
        values[g].append(_field(row, header, "value", lineno, float))
    out = {}
    for g, xs in values.items():
        try:
            out[g] = family.sufficient_stat(np.array(xs))
        except InconsistentStat as exc:
            raise InconsistentStat(f"group {g}: {exc}") from None
    return out


# -- argument helpers ----------------------------------------------------------

def _floats(text: str, k: int, what: str) -> list:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ValidationError(f"cannot parse {what} {text!r}") from None
    if len(vals) != k:
        raise ValidationError(f"{what} needs {k} comma-separated values, got {text!r}")
    return vals


def _hypothesis(args) -> RetentionHypothesis:
    return RetentionHypothesis(get_family(args.family, args.h), args.delta)


def _alternative(args, hyp: RetentionHypothesis) -> Alternative:
    if args.theta is None:
        raise ValidationError("this subcommand needs --theta T,R,P")
    vals = _floats(args.theta, 3, "--theta")
    if isinstance(hyp.family, Normal):
        if args.tau2 is None:
            raise ValidationError("normal family needs --tau2")
        vals = [np.array([v, args.tau2]) for v in vals]
    return Alternative(hyp, *vals)


def _weights(args, hyp, alt=None):
    spec = args.weights.strip().lower()
    if spec == "optimal":
        if alt is None:
            raise ValidationError("optimal weights need an alternative (--theta)")
        return optimal_allocation(hyp, alt)
    return Weights.parse(args.weights, hyp.delta)


# -- output -------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _cell(x) -> str:
    return x if isinstance(x, str) else repr(x)


def _flatten(d: dict, prefix: str = "") -> list:
    items = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            items += _flatten(v, key + ".")
        elif isinstance(v, list) and v and isinstance(v[0], list):
            for i, sub in enumerate(v):
                items.append((f"{key}[{i}]", ",".join(_cell(x) for x in sub)))
        elif isinstance(v, list):
            items.append((key, ",".join(_cell(x) for x in v)))
        else:
            items.append((key, v))
    return items


def emit(report: dict, fmt: str, stream) -> None:
    report = _plain({"schema": SCHEMA, **report})
    if fmt == "json":
        stream.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    elif fmt == "csv":
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(_flatten(report))
    else:
        items = _flatten(report)
        width = max(len(k) for k, _ in items)
        for k, v in items:
            if isinstance(v, float):
                v = f"{v:.6g}"
            stream.write(f"{k.ljust(width)}  {v}\n")


# -- subcommands ----------------------------------------------------------------

def cmd_test(args, out):
    hyp = _hypothesis(args)
    if args.input is None:
        raise ValidationError("test needs --input FILE")
    data = ingest_group_data(args.input, hyp.family)
    rep = run_test(hyp, data, args.alpha, args.mode)
    emit({"command": "test", "family": hyp.family.key, "delta": hyp.delta,
          "groups": {g: {"n": s.n, "total": s.total} for g, s in zip("TRP", data)},
          **rep.as_dict()}, args.format, out)


def cmd_plan(args, out):
    hyp = _hypothesis(args)
    alt = _alternative(args, hyp)
    w = _weights(args, hyp, alt)
    plan = gssp(hyp, alt, w, args.alpha, args.power, args.mode)
    emit({"command": "plan", "family": hyp.family.key, "delta": hyp.delta, **plan.as_dict()},
         args.format, out)


def cmd_alloc(args, out):
    hyp = _hypothesis(args)
    alt = _alternative(args, hyp)
    w = optimal_allocation(hyp, alt)
    rep = {"command": "alloc", "family": hyp.family.key, "delta": hyp.delta,
           "weights": list(w), "ratio_to_placebo": [w.w_T / w.w_P, w.w_R / w.w_P, 1.0],
           "sigma0_squared": sigma0_squared(hyp, alt, w)}
    try:
        rot = rule_of_thumb_check(hyp, alt)
        rep["rule_of_thumb"] = rot._asdict()
    except ValidationError as exc:
        rep["rule_of_thumb"] = {"skipped": str(exc)}
    emit(rep, args.format, out)


def cmd_power(args, out):
    hyp = _hypothesis(args)
    if args.theta is None:
        raise ValidationError("power needs --theta T,R,P (data-generating parameters)")
    zeta = _floats(args.theta, 3, "--theta")
    if isinstance(hyp.family, Normal):
        if args.tau2 is None:
            raise ValidationError("normal family needs --tau2")
        zeta = [np.array([v, args.tau2]) for v in zeta]
    if args.n is None:
        raise ValidationError("power needs --n nT,nR,nP or --n N with --weights")
    parts = args.n.split(",")
    if len(parts) == 1:
        total = int(parts[0])
        w = _weights(args, hyp, None if args.weights.lower() != "optimal" else Alternative(hyp, *zeta))
        sizes = tuple(int(math.floor(wk * total + 1e-9)) for wk in w)
    else:
        sizes = tuple(int(v) for v in _floats(args.n, 3, "--n"))
    method = "exact" if args.method == "exact" else "monte_carlo"
    q = PowerQuery(hyp, tuple(zeta), sizes, args.alpha, args.mode, method, args.reps, args.seed, args.budget)
    est = compute_power(q)
    emit({"command": "power", "family": hyp.family.key, "delta": hyp.delta,
          "sizes": list(sizes), "theta": [np.asarray(z, float).tolist() for z in zeta], **est.as_dict()},
         args.format, out)


def cmd_reproduce(args, out):
    rep = REPRODUCERS[args.table]() if args.table != "T5" else REPRODUCERS["T5"](budget=args.budget)
    csv_path, diff_path = rep.write(args.out)
    emit({"command": "reproduce", "table": rep.table_id, "ok": rep.ok, "cells": len(rep.diffs),
          "failures": rep.failures(), "notes": rep.notes, "files": [csv_path, diff_path]},
         args.format, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retplan", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--family", default="binary", choices=family_names())
    common.add_argument("--h", default=None, help="efficacy map, e.g. identity, logit, negative, log")
    common.add_argument("--delta", type=float, default=0.8, help="retention margin")
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--mode", default="restricted", choices=["restricted", "unrestricted"])
    common.add_argument("--format", default="table", choices=["table", "json", "csv"])
    common.add_argument("--theta", default=None, help="parameters T,R,P")
    common.add_argument("--tau2", type=float, default=None, help="common variance (normal family)")
    common.add_argument("--weights", default="optimal",
                        help="w_T,w_R,w_P | a:b:c | optimal | 1:D:1-D | 2:2:1")
    common.add_argument("--power", type=float, default=0.8)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    common.add_argument("--input", default=None)
    common.add_argument("--out", default="reproduce_out")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("test", parents=[common], help="run the test on a data file").set_defaults(fn=cmd_test)
    sub.add_parser("plan", parents=[common], help="sample size planning").set_defaults(fn=cmd_plan)
    sub.add_parser("alloc", parents=[common], help="optimal allocation").set_defaults(fn=cmd_alloc)
    p = sub.add_parser("power", parents=[common], help="exact or Monte-Carlo power")
    p.add_argument("--n", default=None, help="group sizes nT,nR,nP or a total N split by --weights")
    p.add_argument("--method", default="exact", choices=["exact", "mc"])
    p.add_argument("--reps", type=int, default=MIN_REPS * 10)
    p.set_defaults(fn=cmd_power)
    r = sub.add_parser("reproduce", parents=[common], help="regenerate a reference table")
    r.add_argument("table", choices=sorted(REPRODUCERS))
    r.set_defaults(fn=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args, sys.stdout)
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
