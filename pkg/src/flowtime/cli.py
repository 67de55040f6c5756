"""Command line: gen, solve, verify, render, bench.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 resource guard.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction

from .dptree import ALL, PathIndex, check_consistent
from .geom import (build_geometry, intersects, intersects_algebraic, ip2_check, ip2_opt,
                   render_svg, selection_from_json)
from .grid import Grid, GridParams, check_segment_properties
from .instance import Instance, gen_random, horizon
from .oracle import OracleTooLarge, opt_schedule
from .poly import build_poly_solution
from .qpoly import budgets_from_solution, build_qpoly_solution
from .solver import MODES, offset_pairs, solve
from .validation import check_offsets_spec

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_GUARD = 0, 1, 2, 3

CSV_COLUMNS = ("seed", "n", "T", "opt", "ip2opt_best", "alg_qpoly", "alg_poly",
               "ratio_qpoly", "ratio_poly", "ms")


class UsageError(Exception):
    pass


def _read_instance(path):
    try:
        with open(path) as fh:
            return Instance.from_json(fh.read())
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad instance file {path}: {exc}") from None


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _fmt_ratio(a, b):
    if a is None or b in (None, 0):
        return ""
    return f"{float(Fraction(a, b)):.6f}"


def _oracle_or_none(instance):
    try:
        return opt_schedule(instance)[0]
    except OracleTooLarge:
        return None


def cmd_gen(args):
    try:
        inst = gen_random(args.seed, args.n, args.pmax, args.wmax, args.rmax, args.eps_inv)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    _write(args.output, inst.to_json())
    return EXIT_OK


def cmd_solve(args):
    inst = _read_instance(args.instance)
    try:
        res = solve(inst, args.mode, args.offsets, args.seed, normalize=args.normalize)
    except OracleTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    _write(args.output, res.schedule.to_json())
    opt = res.cost if args.mode == "oracle" else (_oracle_or_none(inst) if args.with_opt else None)
    report = json.dumps(res.report(opt), sort_keys=True) + "\n"
    if args.report:
        _write(args.report, report)
    else:
        sys.stderr.write(report)
    return EXIT_OK


def _fail(message):
    print(f"FAIL {message}")
    return EXIT_FAIL


def _verify_offset(inst, off_x, off_y):
    """Full invariant suite at one offset; returns ``None`` or a failure message."""
    T = horizon(inst)
    grid = Grid(T, GridParams.make(inst.epsilon_inv, T, off_x, off_y))
    rep = check_segment_properties(inst, grid)
    if not rep:
        return f"segments: {rep.message} {rep.witness}"
    geo = build_geometry(inst, grid)
    for ray in geo.rays:
        for r in geo.rects:
            if bool(intersects(ray, r)) != intersects_algebraic(ray, r):
                return f"ray-intersect: {ray} vs {r}"
    c2, ref = ip2_opt(geo)
    idx = PathIndex(geo)
    try:
        sol, fam = build_qpoly_solution(geo, budgets_from_solution(geo, ref), reference=ref, index=idx)
        rep = check_consistent(geo, sol, fam, ray_scope=ALL, index=idx)
        if not rep:
            return f"qpoly consistency: {rep.message}"
        build_poly_solution(geo, ref, index=idx)
    except AssertionError as exc:
        return f"cost-bound chain: {exc}"
    return None


def cmd_verify(args):
    inst = _read_instance(args.instance)
    T = horizon(inst)
    if args.selection:
        try:
            grid = Grid(T, GridParams.make(inst.epsilon_inv, T, args.off_x, args.off_y))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        geo = build_geometry(inst, grid)
        try:
            with open(args.selection) as fh:
                sel = selection_from_json(geo, fh.read())
        except FileNotFoundError:
            raise UsageError(f"no such file: {args.selection}") from None
        except (ValueError, KeyError, TypeError) as exc:
            return _fail(f"selection: malformed ({exc})")
        rep = ip2_check(geo, sel)
        if not rep:
            return _fail(f"ip2 feasibility: {rep.message}")
        print(f"OK selection at offset ({args.off_x},{args.off_y}) cost {sum(r.cost for r in sel)}")
        return EXIT_OK
    pairs = offset_pairs(inst.epsilon_inv, T, "sample:4" if args.quick else args.offsets, args.seed)
    for x, y in pairs:
        msg = _verify_offset(inst, x, y)
        if msg:
            return _fail(f"offset ({x},{y}) {msg}")
    print(f"OK {len(pairs)} offsets")
    return EXIT_OK


def cmd_render(args):
    inst = _read_instance(args.instance)
    T = horizon(inst)
    try:
        grid = Grid(T, GridParams.make(inst.epsilon_inv, T, args.off_x, args.off_y))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    geo = build_geometry(inst, grid)
    sel = None
    if args.selection:
        try:
            with open(args.selection) as fh:
                sel = selection_from_json(geo, fh.read())
        except FileNotFoundError:
            raise UsageError(f"no such file: {args.selection}") from None
    _write(args.output, render_svg(geo, sel))
    return EXIT_OK


def parse_seeds(spec):
    """``"1..100"``, ``"3"`` or ``"1,4,9"``."""
    try:
        if ".." in spec:
            a, b = spec.split("..")
            out = list(range(int(a), int(b) + 1))
        else:
            out = [int(s) for s in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad seed list {spec!r}") from None
    if not out:
        raise UsageError("empty seed list")
    return out


def bench_rows(seeds, n, pmax, wmax, rmax, eps_inv=1, offsets=None, timing=False):
    rows = []
    for seed in seeds:
        t0 = time.perf_counter()
        inst = gen_random(seed, n, pmax, wmax, rmax, eps_inv)
        opt = _oracle_or_none(inst)
        q = solve(inst, "qpoly", offsets, seed)
        p = solve(inst, "poly", offsets, seed)
        ms = f"{(time.perf_counter() - t0) * 1000:.0f}" if timing else ""
        rows.append({
            "seed": seed, "n": inst.n, "T": horizon(inst), "opt": "" if opt is None else opt,
            "ip2opt_best": min(r.ip2_opt for r in q.runs), "alg_qpoly": q.cost, "alg_poly": p.cost,
            "ratio_qpoly": _fmt_ratio(q.cost, opt), "ratio_poly": _fmt_ratio(p.cost, opt), "ms": ms,
        })
    return rows


def cmd_bench(args):
    seeds = parse_seeds(args.seeds)
    try:
        rows = bench_rows(seeds, args.n, args.pmax, args.wmax, args.rmax, args.eps_inv,
                          args.offsets, args.timing)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(str(row[c]) for c in CSV_COLUMNS) for row in rows]
    _write(args.output, "\n".join(lines) + "\n")
    for col in ("ratio_qpoly", "ratio_poly"):
        vals = [float(r[col]) for r in rows if r[col] != ""]
        if vals:
            print(f"{col}: mean {sum(vals) / len(vals):.6f} max {max(vals):.6f}", file=sys.stderr)
    return EXIT_OK


def _offsets_arg(text):
    try:
        check_offsets_spec(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser():
    ap = argparse.ArgumentParser(prog="flowtime", description="Weighted flow time approximation toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a random instance")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--pmax", type=int, default=3)
    g.add_argument("--wmax", type=int, default=3)
    g.add_argument("--rmax", type=int, default=3)
    g.add_argument("--eps-inv", type=int, default=1)
    g.add_argument("-o", "--output", default="-")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="schedule an instance")
    s.add_argument("instance")
    s.add_argument("--mode", choices=MODES, default="qpoly")
    s.add_argument("--offsets", type=_offsets_arg, default=None, help="all or sample:k (default: all if T <= 64)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--normalize", action="store_true", help="apply weight normalization first")
    s.add_argument("--with-opt", action="store_true", help="add the exact optimum to the report")
    s.add_argument("-o", "--output", default="-")
    s.add_argument("--report", default=None)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="run the invariant suite")
    v.add_argument("instance")
    v.add_argument("--offsets", type=_offsets_arg, default=None)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--quick", action="store_true", help="four sampled offsets only")
    v.add_argument("--selection", default=None, help="check this selection file instead")
    v.add_argument("--off-x", type=int, default=0)
    v.add_argument("--off-y", type=int, default=1)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("render", help="draw rectangles and rays as SVG")
    r.add_argument("instance")
    r.add_argument("--off-x", type=int, default=0)
    r.add_argument("--off-y", type=int, default=1)
    r.add_argument("--selection", default=None)
    r.add_argument("-o", "--output", default="-")
    r.set_defaults(func=cmd_render)

    b = sub.add_parser("bench", help="CSV over seeded random instances")
    b.add_argument("--seeds", default="1..10")
    b.add_argument("--n", type=int, default=4)
    b.add_argument("--pmax", type=int, default=3)
    b.add_argument("--wmax", type=int, default=3)
    b.add_argument("--rmax", type=int, default=3)
    b.add_argument("--eps-inv", type=int, default=1)
    b.add_argument("--offsets", type=_offsets_arg, default=None)
    b.add_argument("--timing", action="store_true", help="fill the ms column with wall-clock time")
    b.add_argument("-o", "--output", default="-")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OracleTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except AssertionError as exc:
        print(f"FAIL {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
