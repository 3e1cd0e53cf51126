"""Command-line front end: single-point evaluation, parameter sweeps with
CSV output, and a self-test of the numerical core.

Subcommands:

* ``crb --config FILE`` - run every requested scheme at one operating point
  and print the per-surface bounds.
* ``sweep --config FILE --out CSV`` - sweep one parameter over a grid for
  the requested cases / schemes / channel draws and write one CSV row per
  combination.
* ``selftest`` - run the built-in oracle and invariant checks.

CSV columns, in order: case, scheme, param, value, draw, max_crb,
per_irs_crb (semicolon-joined), outer_iters, status.  Floats are written
with full round-trip precision (repr).  Wall-clock timings stay in the
in-memory rows only, keeping the file byte-reproducible for a fixed config
and seed.  The file is written atomically (temp file + rename).

Exit codes: 0 success, 2 usage error, 3 bad configuration, 4 numerical
failure.  Set IRSCRB_LOG=INFO (or DEBUG) for progress logging.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .fim import SensingCase
from .optimizer import AoOptions, AoTrace, Scheme, alternating_optimize
from .scenario import ConfigError, ScenarioConfig, build_channels, load_config, with_seed

log = logging.getLogger("irscrb")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4

SWEEPABLE = ("p_t", "p_s", "m", "a_max")


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: a parameter, its grid, and the evaluation matrix."""

    param: str
    grid: tuple
    config: ScenarioConfig
    opts: AoOptions
    schemes: tuple = (Scheme.PROPOSED,)
    cases: tuple = (SensingCase.AT_BS,)
    n_draws: int = 1

    def __post_init__(self):
        if self.param not in SWEEPABLE:
            raise ValueError(f"sweep parameter must be one of {SWEEPABLE}")
        if len(self.grid) == 0 or list(self.grid) != sorted(self.grid):
            raise ValueError("grid must be non-empty and sorted")
        if self.n_draws < 1:
            raise ValueError("need at least one channel draw")


@dataclass(frozen=True)
class SweepRow:
    case: str
    scheme: str
    param: str
    value: float
    draw: int
    max_crb: float | None
    per_irs_crb: tuple
    outer_iters: int
    status: str
    wall_time: float

    def sort_key(self):
        return (self.case, self.scheme, self.value, self.draw)


def apply_param(config: ScenarioConfig, param: str, value: float) -> ScenarioConfig:
    if param == "m":
        return replace(config, bs_antennas=int(value))
    return replace(config, **{param: value})


def _run_point(case: SensingCase, scheme: Scheme, spec: SweepSpec, value: float, draw: int) -> SweepRow:
    config = apply_param(spec.config, spec.param, value)
    t0 = time.perf_counter()
    try:
        channels = build_channels(config, draw=draw)
        trace = alternating_optimize(case, config, channels, spec.opts, scheme=scheme)
        row = SweepRow(
            case=case.value, scheme=scheme.value, param=spec.param, value=float(value),
            draw=draw, max_crb=trace.final_max_crb, per_irs_crb=tuple(trace.per_irs_crb),
            outer_iters=trace.outer_iters, status=trace.status,
            wall_time=time.perf_counter() - t0,
        )
    except Exception as exc:  # per-row failures recorded, sweep continues
        log.warning("row failed (%s/%s %s=%s draw %d): %s",
                    case.value, scheme.value, spec.param, value, draw, exc)
        row = SweepRow(
            case=case.value, scheme=scheme.value, param=spec.param, value=float(value),
            draw=draw, max_crb=None, per_irs_crb=(),
            outer_iters=0, status=f"error:{type(exc).__name__}",
            wall_time=time.perf_counter() - t0,
        )
    log.info("done %s/%s %s=%g draw=%d status=%s (%.1fs)",
             row.case, row.scheme, row.param, row.value, row.draw, row.status, row.wall_time)
    return row


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """Evaluate every (case, scheme, grid value, draw) cell.

    Cells are independent; with workers > 1 they run in a thread pool.  The
    returned rows are sorted into the documented deterministic order either
    way.
    """
    cells = [
        (case, scheme, value, draw)
        for case in spec.cases
        for scheme in spec.schemes
        for value in spec.grid
        for draw in range(spec.n_draws)
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda c: _run_point(c[0], c[1], spec, c[2], c[3]), cells))
    else:
        rows = [_run_point(case, scheme, spec, value, draw) for case, scheme, value, draw in cells]
    rows.sort(key=SweepRow.sort_key)
    return rows


CSV_HEADER = "case,scheme,param,value,draw,max_crb,per_irs_crb,outer_iters,status"


def csv_body(rows: list[SweepRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        crb = "" if r.max_crb is None else repr(float(r.max_crb))
        per = ";".join(repr(float(v)) for v in r.per_irs_crb)
        lines.append(
            f"{r.case},{r.scheme},{r.param},{float(r.value)!r},{r.draw},{crb},{per},"
            f"{r.outer_iters},{r.status}"
        )
    return "\n".join(lines) + "\n"


def write_csv(rows: list[SweepRow], path: str):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(csv_body(rows))
    os.replace(tmp, path)


def _parse_cases(text: str) -> tuple:
    return tuple(SensingCase(tok.strip()) for tok in text.split(","))


def _parse_schemes(text: str) -> tuple:
    return tuple(Scheme(tok.strip()) for tok in text.split(","))


def _opts_from_args(args) -> AoOptions:
    return AoOptions(
        max_outer_iters=args.outer, max_sca_iters=args.sca,
        rel_tol=args.rel_tol, n_randomizations=args.randomizations, seed=args.seed or 0,
    )


def _load(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    return with_seed(config, args.seed)


def cmd_crb(args) -> int:
    config = _load(args)
    channels = build_channels(config)
    opts = _opts_from_args(args)
    cases = _parse_cases(args.case) if args.case else tuple(SensingCase)
    schemes = _parse_schemes(args.scheme) if args.scheme else tuple(Scheme)
    failures = 0
    for case in cases:
        for scheme in schemes:
            try:
                trace = alternating_optimize(case, config, channels, opts, scheme=scheme)
            except Exception as exc:
                print(f"{case.value:4s} {scheme.value:16s} FAILED: {exc}")
                failures += 1
                continue
            per = " ".join(f"{v:.6e}" for v in trace.per_irs_crb)
            print(
                f"{case.value:4s} {scheme.value:16s} max-CRB {trace.final_max_crb:.6e}"
                f"  per-IRS [{per}]  ({trace.status}, {trace.outer_iters} iters)"
            )
    return EXIT_NUMERICAL if failures else EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args)
    grid = tuple(float(v) for v in args.grid.split(","))
    spec = SweepSpec(
        param=args.param, grid=grid, config=config, opts=_opts_from_args(args),
        schemes=_parse_schemes(args.scheme) if args.scheme else (Scheme.PROPOSED,),
        cases=_parse_cases(args.case) if args.case else (SensingCase.AT_BS,),
        n_draws=args.draws,
    )
    rows = run_sweep(spec, workers=args.workers)
    write_csv(rows, args.out)
    n_err = sum(1 for r in rows if r.max_crb is None)
    print(f"wrote {len(rows)} rows to {args.out}" + (f" ({n_err} failed)" if n_err else ""))
    return EXIT_NUMERICAL if n_err == len(rows) else EXIT_OK


def cmd_selftest(args) -> int:
    from . import selftest

    return EXIT_OK if selftest.run(verbose=True) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="irscrb",
        description="Worst-surface DoA estimation bounds and beamforming design "
        "for multi-surface active reflection sensing",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario config file (key = value lines)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--case", help="comma list: bs,irs")
        p.add_argument("--scheme", help="comma list: proposed,transmit_only,reflective_only,passive_irs")
        p.add_argument("--outer", type=int, default=15, help="max outer iterations")
        p.add_argument("--sca", type=int, default=30, help="max SCA iterations per surface")
        p.add_argument("--rel-tol", type=float, default=1e-4)
        p.add_argument("--randomizations", type=int, default=200)

    p_crb = sub.add_parser("crb", help="evaluate one operating point")
    common(p_crb)
    p_crb.set_defaults(func=cmd_crb)

    p_sw = sub.add_parser("sweep", help="sweep a parameter and write CSV")
    common(p_sw)
    p_sw.add_argument("--param", choices=SWEEPABLE, default="p_t")
    p_sw.add_argument("--grid", required=True, help="comma-separated sorted values")
    p_sw.add_argument("--draws", type=int, default=1, help="channel draws per grid point")
    p_sw.add_argument("--out", required=True, help="output CSV path")
    p_sw.add_argument("--workers", type=int, default=1)
    p_sw.set_defaults(func=cmd_sweep)

    p_st = sub.add_parser("selftest", help="run the oracle/invariant suite")
    p_st.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("IRSCRB_LOG", "WARNING").upper())
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
