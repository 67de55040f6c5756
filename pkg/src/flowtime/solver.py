"""End-to-end solving: offsets, geometry, candidate families, DP, IP and schedule."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .dptree import ALL, PATH, PathIndex, dp_solve
from .geom import build_geometry, ip2_check, ip2_opt, ip2_to_ip
from .grid import Grid, GridParams, offsets_domain
from .instance import Instance, horizon, normalize_weights
from .oracle import IpSolution, Schedule, completion_times, ip_check, opt_schedule, schedule_cost, schedule_from_ip
from .poly import build_poly_solution
from .qpoly import budgets_from_solution, build_qpoly_solution
from .validation import check_offsets_spec

MODES = ("qpoly", "poly", "oracle")
SAMPLE_THRESHOLD = 64
DEFAULT_SAMPLE = 16


def offset_pairs(epsilon_inv, T, spec=None, seed=0):
    """``(off_x, off_y)`` pairs to try, in a fixed order.

    ``spec`` is ``"all"``, ``"sample:k"`` or ``None`` (all offsets when
    ``T <= 64``, otherwise 16 sampled ones).
    """
    ys, xs = offsets_domain(epsilon_inv, T)
    pairs = [(x, y) for y in ys for x in reversed(xs)]
    if spec is None:
        spec = "all" if T <= SAMPLE_THRESHOLD else f"sample:{DEFAULT_SAMPLE}"
    k = check_offsets_spec(spec)
    if k is None or k >= len(pairs):
        return pairs
    picked = set(random.Random(seed).sample(range(len(pairs)), k))
    return [p for i, p in enumerate(pairs) if i in picked]


def prefix_closure(geometry, rects):
    out = set()
    for r in rects:
        out.update(geometry.chains[r.chain_key][: r.index_in_chain])
    return frozenset(out)


@dataclass
class OffsetRun:
    off_x: int
    off_y: int
    ip2_opt: int
    alg_cost: int
    schedule_cost: int
    schedule: Schedule = field(repr=False)
    selection: frozenset = field(repr=False)

    def to_dict(self):
        return {"offX": self.off_x, "offY": self.off_y, "ip2Opt": self.ip2_opt,
                "algCost": self.alg_cost, "scheduleCost": self.schedule_cost}


def run_offset(instance, off_x, off_y, mode, check=True):
    """Solve one grid offset in ``qpoly`` or ``poly`` mode."""
    T = horizon(instance)
    grid = Grid(T, GridParams.make(instance.epsilon_inv, T, off_x, off_y))
    geo = build_geometry(instance, grid)
    c2, ref = ip2_opt(geo)
    idx = PathIndex(geo)
    if mode == "qpoly":
        _, families = build_qpoly_solution(geo, budgets_from_solution(geo, ref), reference=ref,
                                           check=check, index=idx)
        scope = ALL
    elif mode == "poly":
        families = build_poly_solution(geo, ref, check=check, index=idx).families
        scope = PATH
    else:
        raise ValueError(f"unknown mode {mode!r}")
    sol = dp_solve(geo, families, ray_scope=scope, index=idx)
    if sol is None:
        raise AssertionError(f"no consistent solution at offset ({off_x}, {off_y})")
    sel = prefix_closure(geo, sol.rects)
    rep = ip2_check(geo, sel)
    if not rep:
        raise AssertionError(f"DP selection not IP2-feasible: {rep.message}")
    x = ip2_to_ip(instance, sel)
    if not ip_check(instance, x):
        raise AssertionError("IP solution from the DP selection is infeasible")
    sched = schedule_from_ip(instance, x)
    return OffsetRun(off_x, off_y, c2, sum(r.cost for r in sel), schedule_cost(instance, sched), sched, sel)


@dataclass
class SolveResult:
    instance: Instance
    mode: str
    schedule: Schedule
    cost: int
    runs: list = field(default_factory=list)
    best: OffsetRun = None
    dropped: list = field(default_factory=list)

    def report(self, opt=None):
        out = {
            "mode": self.mode,
            "n": self.instance.n,
            "T": horizon(self.instance),
            "epsilonInv": self.instance.epsilon_inv,
            "cost": self.cost,
            "offsets": [r.to_dict() for r in self.runs],
            "dropped": [j.id for j in self.dropped],
        }
        if self.runs:
            out["ip2OptBest"] = min(r.ip2_opt for r in self.runs)
            out["best"] = {"offX": self.best.off_x, "offY": self.best.off_y}
        if opt is not None:
            out["opt"] = opt
            out["ratio"] = _ratio(self.cost, opt)
        return out


def _ratio(a, b):
    if b == 0:
        return 1.0 if a == 0 else None
    return round(float(Fraction(a, b)), 6)


def _append_dropped(original, schedule, kept, dropped):
    """Schedule of ``original``: kept jobs meet their completion times, dropped jobs go last.

    Earliest deadline first with the kept completions as deadlines and
    ``T + 1`` for dropped jobs; any dummy job simply disappears.
    """
    T = horizon(original)
    done = completion_times(kept, schedule)
    d = {j.id: done[j.id] for j in original.jobs if j.id in done}
    d.update({j.id: T + 1 for j in dropped})
    return schedule_from_ip(original, IpSolution.from_deadlines(d))


def solve(instance, mode="qpoly", offsets=None, seed=0, normalize=False, check=True):
    """Best schedule over the chosen offsets (``mode`` in qpoly/poly/oracle)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    work, dropped = (normalize_weights(instance) if normalize else (instance, []))
    if mode == "oracle":
        cost, sched = opt_schedule(work)
        runs, best = [], None
    else:
        T = horizon(work)
        runs = [run_offset(work, x, y, mode, check=check)
                for x, y in offset_pairs(work.epsilon_inv, T, offsets, seed)]
        best = min(runs, key=lambda r: r.schedule_cost)
        sched = best.schedule
    if work is not instance:
        sched = _append_dropped(instance, sched, work, dropped)
    completion_times(instance, sched)
    return SolveResult(instance, mode, sched, schedule_cost(instance, sched), runs, best, list(dropped))

