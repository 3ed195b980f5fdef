"""
Command line entry point: ``lpkinetic list | run | suite``.

Exit codes: 0 when every acceptance rule passes, 1 when a rule fails,
2 on configuration or usage errors.
"""
import argparse
import json
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .experiments import CRITERIA, REGISTRY, _jsonable, get_experiment, resolve_params

SCHEMA_VERSION = 1


class ConfigError(Exception):
    """Bad configuration; reported on stderr with exit code 2."""


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError("cannot read config %s: %s" % (path, err.strerror)) from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("%s:%d: expected key = value" % (path, n))
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("%s:%d: empty key" % (path, n))
        if key in out:
            raise ConfigError("%s:%d: duplicate key %r" % (path, n, key))
        out[key] = value
    return out


def parse_overrides(tokens):
    """``--key value`` or ``--key=value`` pairs; dashes in keys become underscores."""
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--") or tok == "--":
            raise ConfigError("unexpected argument %r" % tok)
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            try:
                value = next(it)
            except StopIteration:
                raise ConfigError("missing value for --%s" % key) from None
        out[key.replace("-", "_")] = value
    return out


def build_id():
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                           capture_output=True, text=True, timeout=5)
        if r.returncode == 0 and r.stdout.strip():
            return r.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _prepare_out(out, force):
    out = Path(out)
    if out.exists():
        if not out.is_dir():
            raise ConfigError("output path %s exists and is not a directory" % out)
        if any(out.iterdir()) and not force:
            raise ConfigError("output directory %s is not empty (use --force)" % out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cell(v):
    if isinstance(v, float):
        return "%.17g" % v
    if hasattr(v, "dtype"):
        return "%.17g" % float(v) if v.dtype.kind == "f" else str(v)
    return str(v)


def write_table(out, name, exp, table):
    lines = ["# %s %s" % (exp.id, name), ",".join(table.columns)]
    lines += [",".join(_cell(v) for v in row) for row in table.rows]
    (out / ("%s.csv" % name)).write_text("\n".join(lines) + "\n")
    if table.figure:
        dat = ["# %s %s" % (exp.id, name), "# " + " ".join(table.columns)]
        key = table.columns.index(table.blocks) if table.blocks else None
        prev = object()
        for row in table.rows:
            if key is not None and row[key] != prev and dat[-1][:1] != "#":
                dat += ["", ""]
            if key is not None:
                prev = row[key]
            dat.append(" ".join(_cell(v) for v in row))
        (out / ("%s.dat" % name)).write_text("\n".join(dat) + "\n")


def run_experiment(eid, values, out, fast=False, force=False):
    """Run one experiment, write its artifacts and return the report dict."""
    exp = get_experiment(eid)
    try:
        cfg = resolve_params(exp, values, fast=fast)
    except KeyError as err:
        raise ConfigError("unknown key %r for experiment %s" % (err.args[0], eid)) from None
    except ValueError as err:
        raise ConfigError("invalid value for %s" % err) from None
    out = _prepare_out(out, force)
    t0 = time.perf_counter()
    outcome = exp.run(cfg)
    wall = time.perf_counter() - t0
    for name, table in outcome.tables.items():
        write_table(out, name, exp, table)
    report = {
        "schema_version": SCHEMA_VERSION,
        "experiment": exp.id,
        "criterion": exp.criterion,
        "title": exp.title,
        "reference": exp.reference,
        "measured": _jsonable(outcome.measured),
        "rules": [r.as_dict() for r in outcome.rules],
        "passed": outcome.passed,
        "wall_time": wall,
        "config": exp.format_config(cfg),
        "build": build_id(),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def _summary_line(rep):
    bad = [r["name"] for r in rep["rules"] if not r["passed"]]
    status = "PASS" if rep["passed"] else "FAIL"
    tail = "" if not bad else "  failed: " + "; ".join(bad)
    return "%-4s %2d %-22s %8.1fs%s" % (status, rep["criterion"], rep["experiment"], rep["wall_time"], tail)


def cmd_list(args):
    for eid, exp in sorted(REGISTRY.items(), key=lambda kv: kv[1].criterion):
        print("%2d  %-22s %s" % (exp.criterion, eid, exp.title))
        print("    %-22s %s" % ("", exp.reference))
        if args.verbose:
            for p in exp.params:
                print("      %-14s %-6s default=%s%s" % (p.name, p.kind, exp.format_config({p.name: p.default})[p.name],
                                                       "  " + p.help if p.help else ""))
    return 0


def cmd_run(args, extra):
    if extra and not extra[0].startswith("--"):
        if args.config:
            raise ConfigError("config given twice")
        args.config, extra = extra[0], extra[1:]
    values = read_config(args.config) if args.config else {}
    values.update(parse_overrides(extra))
    eid = values.pop("experiment", None)
    if not eid:
        raise ConfigError("missing required key 'experiment'")
    if eid not in REGISTRY:
        raise ConfigError("unknown experiment %r" % eid)
    out = args.out or os.path.join("runs", eid)
    rep = run_experiment(eid, values, out, fast=args.fast, force=args.force)
    print(_summary_line(rep))
    return 0 if rep["passed"] else 1


def _suite_worker(job):
    eid, out, fast, force = job
    try:
        return run_experiment(eid, {}, out, fast=fast, force=force)
    except ConfigError as err:
        return {"experiment": eid, "error": str(err)}


def cmd_suite(args):
    fast = args.level == "fast"
    root = Path(args.out or os.path.join("runs", "suite-" + args.level))
    if root.exists() and any(root.iterdir()) and not args.force:
        raise ConfigError("output directory %s is not empty (use --force)" % root)
    ids = [CRITERIA[k] for k in sorted(CRITERIA)]
    jobs = [(eid, str(root / eid), fast, args.force) for eid in ids]
    threads = int(os.environ.get("LPKINETIC_THREADS", "1") or 1)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(_suite_worker, jobs))
    else:
        reports = [_suite_worker(j) for j in jobs]
    code = 0
    summary = []
    for rep in reports:
        if "error" in rep:
            print("ERR     %-22s %s" % (rep["experiment"], rep["error"]), file=sys.stderr)
            code = 2
            continue
        print(_summary_line(rep))
        summary.append({"experiment": rep["experiment"], "criterion": rep["criterion"],
                        "passed": rep["passed"], "wall_time": rep["wall_time"]})
        if not rep["passed"] and code == 0:
            code = 1
    root.mkdir(parents=True, exist_ok=True)
    (root / "suite.json").write_text(json.dumps({"schema_version": SCHEMA_VERSION, "level": args.level,
                                                 "build": build_id(), "results": summary},
                                                indent=2) + "\n")
    return code


def make_parser():
    p = argparse.ArgumentParser(prog="lpkinetic", description="Kinetic stable estimates: verification experiments")
    p.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = p.add_subparsers(dest="command", required=True)
    pl = sub.add_parser("list", help="list experiments")
    pl.add_argument("-v", "--verbose", action="store_true", help="show parameters and defaults")
    pr = sub.add_parser("run", help="run one experiment; extra --key value pairs override the config")
    pr.add_argument("--config", help="key = value config file; a bare path before the flags also works")
    pr.add_argument("--out", help="output directory (default runs/<experiment>)")
    pr.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    pr.add_argument("--fast", action="store_true", help="use the reduced fast-suite parameters")
    ps = sub.add_parser("suite", help="run every experiment")
    ps.add_argument("level", choices=["fast", "full"])
    ps.add_argument("--out", help="output root (default runs/suite-<level>)")
    ps.add_argument("--force", action="store_true")
    return p


def main(argv=None):
    parser = make_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "list":
            if extra:
                parser.error("unrecognized arguments: %s" % " ".join(extra))
            return cmd_list(args)
        if args.command == "run":
            return cmd_run(args, extra)
        if extra:
            parser.error("unrecognized arguments: %s" % " ".join(extra))
        return cmd_suite(args)
    except ConfigError as err:
        print("lpkinetic: error: %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
