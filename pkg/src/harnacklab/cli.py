"""Command-line front end: ``harnacklab run|list-scenarios|describe|dump-field``.

Exit status: 0 when every requested non-informational check passes, 1 when
a check fails, 2 for configuration or usage errors, 3 for runtime errors
(for example a truncated line losing mass through its boundary).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, HarnackLabError

REPORT_DIR_ENV = "HARNACKLAB_REPORT_DIR"
DEFAULT_REPORT_DIR = "harnack_reports"

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("harnacklab")


def report_root(override=None):
    return Path(override or os.environ.get(REPORT_DIR_ENV) or DEFAULT_REPORT_DIR)


def _print_summary(doc, run_dir):
    for r in doc["checks"]:
        flag = "PASS" if r["passed"] else ("INFO" if r["informational"] else "FAIL")
        worst = r["worst_margin"]
        worst_s = f"{worst:.3e}" if isinstance(worst, float) else str(worst)
        tol = r["tolerance"]
        tol_s = f"{tol:.1e}" if isinstance(tol, float) else str(tol)
        extra = f", order {r['order']:.2f}" if "order" in r else ""
        if "error" in (r["detail"] or {}):
            extra += f"  {r['detail']['error']}"
        print(f"[{flag}] {r['label']}: worst {worst_s} (tol {tol_s}{extra})")
    summ = doc["summary"]
    print(f"{doc['scenario']}: {summ['n_checks'] - summ['n_failed']}/{summ['n_checks']} checks passed; "
          f"report in {run_dir}")


def _cmd_run(args):
    from concurrent.futures import ThreadPoolExecutor

    from .runner import run_scenario, write_run
    from .scenario import build_scenario, load_config

    # validate every config before running any of them
    scens = [build_scenario(load_config(c), seed=args.seed, tolerance_scale=args.tolerance_scale)
             for c in args.config]
    names = [s.name for s in scens]
    if len(set(names)) != len(names):
        raise ConfigError(f"scenario names in one batch must be unique, got {names}")
    if args.out and len(scens) > 1:
        raise ConfigError("--out takes a single config; use the report directory for batches")

    def one(scen):
        return run_scenario(scen, threads=args.threads)

    # scenarios run concurrently; the main thread is the only writer
    with ThreadPoolExecutor(max_workers=max(1, min(args.jobs, len(scens)))) as pool:
        outcomes = list(pool.map(one, scens))
    all_passed = True
    for scen, (doc, reports, ctx) in zip(scens, outcomes):
        run_dir = Path(args.out) if args.out else report_root() / scen.name
        write_run(run_dir, doc, reports, ctx)
        _print_summary(doc, run_dir)
        all_passed &= doc["summary"]["passed"]
    return EXIT_OK if all_passed else EXIT_FAILED


def _cmd_list(args):
    from .scenario import bundled_names, bundled_text, parse_text

    for name in bundled_names():
        tree = parse_text(bundled_text(name), name)
        print(f"{name}: {tree.get('description', '').strip()}")
    return EXIT_OK


def _cmd_describe(args):
    from .harnack.catalog import CATALOG, describe

    if args.check_id not in CATALOG:
        print(f"unknown check id {args.check_id!r}; known ids: {', '.join(sorted(CATALOG))}", file=sys.stderr)
        return EXIT_CONFIG
    print(describe(args.check_id))
    return EXIT_OK


def _cmd_dump(args):
    import shutil

    from .heat import read_binary

    run = Path(args.run)
    if not run.exists():
        run = report_root() / args.run
    src = run / "field.bin" if run.is_dir() else run
    if not src.is_file():
        raise ConfigError(f"{args.run}: no field dump found (expected {src})")
    out = Path(args.output) if args.output else src.with_suffix(".csv" if args.format == "csv" else ".bin")
    if args.format == "binary":
        if out.resolve() != src.resolve():
            shutil.copyfile(src, out)
    else:
        times, x, u = read_binary(src)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("node,t,x,u\n")
            for k, t in enumerate(times):
                for i in range(len(x)):
                    fh.write(f"{i},{t:.17g},{x[i]:.17g},{u[k, i]:.17g}\n")
    print(out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="harnacklab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run scenario configs (paths or bundled names)")
    r.add_argument("config", nargs="+")
    r.add_argument("--jobs", type=int, default=1, help="scenarios to run concurrently in a batch")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--threads", type=int, default=1, help="worker threads for the diffusion ensemble")
    r.add_argument("--tolerance-scale", type=float, default=None, help="multiply every check tolerance")
    r.add_argument("--out", default=None, help=f"run directory (default ${REPORT_DIR_ENV}/<name>)")
    r.set_defaults(fn=_cmd_run)

    ls = sub.add_parser("list-scenarios", help="list the bundled scenarios")
    ls.set_defaults(fn=_cmd_list)

    d = sub.add_parser("describe", help="print the formula behind a check id")
    d.add_argument("check_id")
    d.set_defaults(fn=_cmd_describe)

    f = sub.add_parser("dump-field", help="export the stored field of a run")
    f.add_argument("run", help="run directory, its name under the report root, or a field.bin path")
    f.add_argument("format", choices=("csv", "binary"))
    f.add_argument("-o", "--output", default=None)
    f.set_defaults(fn=_cmd_dump)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HarnackLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
