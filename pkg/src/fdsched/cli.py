"""Command-line entry point: ``fdsched <subcommand> ...``.

Exit codes: 0 success, 2 infeasible demands, 1 any other error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from .feasibility import (InfeasibleDemandError, NonIntegralDemandError, TemporalDemands,
                          demand_counts, feasible_longterm, feasible_longterm_box,
                          feasible_shortterm, longterm_witness, shortterm_violations,
                          witness_schedule)
from .harness import (ConfigError, MetricsReport, export, load_config, run_gain_sweep,
                      run_longterm, run_shortterm)

OUT_ENV = "FDSCHED_OUT"
EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("fdsched")


# -- demand parsing -------------------------------------------------------------

def _numbers(text: str) -> list[float]:
    return [float(Fraction(x.strip())) for x in text.split(",") if x.strip()]


def parse_demands(arg: str) -> tuple[TemporalDemands, bool]:
    """Demands from a YAML file or an inline ``"UL;DL"`` list such as ``"1/2,1/4;1/4,1/2"``.

    Returns the demands and whether they are equality demands. Files hold
    either ``ul``/``dl`` (equality) or ``lower_ul``/``lower_dl`` with optional
    ``upper_ul``/``upper_dl``.
    """
    path = Path(arg)
    if path.is_file():
        raw = yaml.safe_load(path.read_text()) or {}
        if "ul" in raw or "dl" in raw:
            ul, dl = (np.array([float(Fraction(str(x))) for x in raw[k]]) for k in ("ul", "dl"))
            return TemporalDemands.equality(ul, dl), True
        lo_u = np.array([float(Fraction(str(x))) for x in raw["lower_ul"]])
        lo_d = np.array([float(Fraction(str(x))) for x in raw["lower_dl"]])
        hi_u = np.array([float(Fraction(str(x))) for x in raw.get("upper_ul", [1] * len(lo_u))])
        hi_d = np.array([float(Fraction(str(x))) for x in raw.get("upper_dl", [1] * len(lo_d))])
        return TemporalDemands(lo_u, hi_u, lo_d, hi_d), False
    parts = arg.split(";")
    if len(parts) != 2:
        raise ValueError(f"demands must be a file or 'UL;DL' lists, got {arg!r}")
    ul, dl = _numbers(parts[0]), _numbers(parts[1])
    if len(ul) != len(dl):
        raise ValueError("UL and DL demand lists differ in length")
    return TemporalDemands.equality(ul, dl), True


def _table(a: np.ndarray, fmt: str) -> str:
    m = a.shape[0]
    head = "ul\\dl " + " ".join(f"{j:>8}" for j in range(m))
    rows = [f"{i:>5} " + " ".join(("       -" if i == j else format(a[i, j], fmt).rjust(8))
                                  for j in range(m)) for i in range(m)]
    return "\n".join([head, *rows])


def cmd_feasibility(args) -> int:
    d, equality = parse_demands(args.demands)
    if args.window is None:
        if not equality:
            ok = feasible_longterm_box(d)
            print(f"long-term (box demands): {'feasible' if ok else 'infeasible'}")
            return EXIT_OK if ok else EXIT_INFEASIBLE
        if not feasible_longterm(d.lower_ul, d.lower_dl):
            print("long-term: infeasible")
            return EXIT_INFEASIBLE
        print("long-term: feasible\ntime shares a[i,j] (0 = idle direction):")
        print(_table(longterm_witness(d.lower_ul, d.lower_dl), ".4f"))
        return EXIT_OK
    if not equality:
        raise ValueError("short-term checks need equality demands (ul/dl)")
    s = args.window
    try:
        alloc = feasible_shortterm(s, d.lower_ul, d.lower_dl)
    except NonIntegralDemandError as e:
        print(f"short-term (s={s}): infeasible, demands are not multiples of 1/{s}: {e}")
        return EXIT_INFEASIBLE
    if alloc is None:
        print(f"short-term (s={s}): infeasible")
        why = shortterm_violations(s, demand_counts(s, d.lower_ul), demand_counts(s, d.lower_dl))
        for line in why or ["no integer slot assignment meets the demands"]:
            print(f"  - {line}")
        return EXIT_INFEASIBLE
    print(f"short-term (s={s}): feasible\nslot counts a[i,j]:")
    print(_table(alloc.counts, "d"))
    print("witness: " + " ".join(f"v({v.ul},{v.dl})" for v in witness_schedule(alloc)))
    return EXIT_OK


# -- simulation commands ------------------------------------------------------

def _config(args):
    cfg = load_config(args.config)
    run = {}
    if getattr(args, "seed", None) is not None:
        run["seed"] = args.seed
    if args.slots is not None:
        run["n_slots"] = args.slots
    if args.drops is not None:
        run["n_drops"] = args.drops
    if args.workers is not None:
        run["workers"] = args.workers
    return cfg.with_run(**run) if run else cfg


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "results")


def _finish(rep: MetricsReport, args) -> int:
    paths = export(rep, _out_dir(args), args.format)
    print("\n".join(f"wrote {p}" for p in paths))
    return EXIT_OK


def _print_utilities(rep: MetricsReport) -> None:
    for cell in rep.cells():
        for sched, window in dict.fromkeys((r.scheduler, r.window) for r in rep.records
                                           if r.cell == cell):
            u = rep.mean_utility(cell, sched, window)
            tag = f"{sched}(s={window})" if window else sched
            print(f"{cell:>22} {tag:>14}: {u:.4f} bps/Hz  {rep.mbps(u):.2f} Mbps")


def cmd_simulate(args) -> int:
    rep = run_longterm(_config(args))
    _print_utilities(rep)
    if "hd" in {r.scheduler for r in rep.records} and "tbs" in {r.scheduler for r in rep.records}:
        print(f"FD gain over HD: {rep.gain('base'):.2f}%")
    return _finish(rep, args)


def cmd_sweep(args) -> int:
    rep = run_gain_sweep(_config(args), args.axis)
    for cell in rep.cells():
        print(f"{cell:>22}: FD gain {rep.gain(cell):7.2f}%")
    return _finish(rep, args)


def cmd_convergence(args) -> int:
    cfg = _config(args)
    if args.atbs_thresholds:
        cfg = cfg.with_run(atbs_thresholds=args.atbs_thresholds)
    windows = [int(x) for x in args.windows.split(",")] if args.windows else None
    rep = run_shortterm(cfg, windows)
    _print_utilities(rep)
    bad = sum(r.violations for r in rep.records)
    print(f"windows violating demands: {bad}")
    return _finish(rep, args)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdsched", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("feasibility", help="check temporal demands, print a witness")
    f.add_argument("--demands", required=True, help="YAML file or inline 'UL;DL', e.g. '1/2,1/4;1/4,1/2'")
    f.add_argument("--window", type=int, help="short-term window length s")
    f.set_defaults(func=cmd_feasibility)

    def sim_common(q):
        q.add_argument("--config", required=True)
        q.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
        q.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        q.add_argument("--slots", type=int, help="override run.n_slots")
        q.add_argument("--drops", type=int, help="override run.n_drops")
        q.add_argument("--workers", type=int, help="override run.workers")
        q.add_argument("--seed", type=int, help="override run.seed")

    s = sub.add_parser("simulate", help="long-term threshold learning per drop")
    sim_common(s)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="FD gain over HD across SIM levels or placements")
    sim_common(w)
    w.add_argument("--axis", choices=("sim", "placement"), required=True)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("convergence", help="ATBS utility versus window length")
    sim_common(c)
    c.add_argument("--windows", help="comma-separated window lengths, e.g. 8,80,800,8000")
    c.add_argument("--atbs-thresholds", choices=("frozen", "tracking"))
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InfeasibleDemandError, NonIntegralDemandError) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, OSError, ValueError, RuntimeError, KeyError) as e:
        log.debug("failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
