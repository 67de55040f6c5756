"""Densities, chain types, oracle budgets and GreedySelect."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .dptree import ALL, ConsistentSolution, PathIndex, check_consistent, singleton_families
from .oracle import Report

INF = None  # exponent sentinel for an infinite density


def density_exp(cost, cap, epsilon):
    """Integer ``k`` with ``(1+eps)^k <= cost/cap < (1+eps)^(k+1)``."""
    if cap < 1 or cost <= 0:
        raise ValueError("density needs positive cost and capacity")
    base = 1 + Fraction(epsilon)
    ratio = Fraction(cost, cap)
    k = math.floor(math.log(cost / cap) / math.log(base))
    while base**k > ratio:
        k -= 1
    while base ** (k + 1) <= ratio:
        k += 1
    return k


def density_of(rect, epsilon):
    return density_exp(rect.cost, rect.cap, epsilon)


@dataclass(frozen=True, order=True)
class RectType:
    """``(rho, rho2, s)`` with densities as exponents of ``1+eps``; ``None`` is infinity."""

    rho: object
    rho2: object
    s: int

    def to_dict(self):
        def enc(v):
            return "inf" if v is None else v

        return {"rhoExp": enc(self.rho), "rho2Exp": enc(self.rho2), "s": self.s}


def type_of(chain, epsilon):
    if not chain:
        return RectType(INF, INF, 0)
    rho = density_of(chain[0], epsilon)
    rho2 = density_of(chain[1], epsilon) if len(chain) > 1 else INF
    return RectType(rho, rho2, len(chain))


def chain_types(geometry):
    """``{(job, cell): RectType}`` for every chain."""
    eps = geometry.grid.params.epsilon
    return {key: type_of(chain, eps) for key, chain in geometry.chains.items()}


def prefix_len(chain, sel):
    k = 0
    for r in chain:
        if r not in sel:
            break
        k += 1
    return k


def prefix_cost(chain, k):
    return sum(r.cost for r in chain[:k])


def budgets_from_solution(geometry, sel, types=None):
    """Ledger ``{(cell, type, s'): spend}`` of a prefix-closed selection."""
    types = types or chain_types(geometry)
    ledger = {}
    for key, chain in geometry.chains.items():
        k = prefix_len(chain, sel)
        if k:
            lk = (key[1], types[key], k)
            ledger[lk] = ledger.get(lk, 0) + prefix_cost(chain, k)
    return ledger


def ledger_to_json(ledger):
    rows = [
        {"cell": cell.to_dict(), "type": tau.to_dict(), "sPrime": sp, "budget": b}
        for (cell, tau, sp), b in sorted(ledger.items(), key=lambda kv: _ledger_key(kv[0]))
    ]
    return json.dumps(rows) + "\n"


def _ledger_key(k):
    cell, tau, sp = k
    enc = (lambda v: (1, 0) if v is None else (0, v))
    return (cell, enc(tau.rho), enc(tau.rho2), tau.s, sp)


def _fits(cost, budget):
    return budget is None or cost <= budget


@dataclass
class GreedyResult:
    selection: frozenset
    x: dict
    fractional_spend: dict


def greedy_select(geometry, C, tau, budgets, job_filter=None, types=None, debug=False):
    """Phased fractional greedy followed by rounding up every positive fraction.

    ``budgets`` maps ``s'`` to an integer/rational budget or ``None`` for an
    unlimited one; missing entries count as zero. Returns a ``GreedyResult``.
    """
    eps = geometry.grid.params.epsilon
    types = types or chain_types(geometry)
    labels = geometry.instance.labels()
    s = tau.s
    jobs = [
        key[0]
        for key in geometry.cell_chains.get(C, ())
        if types[key] == tau and (job_filter is None or job_filter(key[0]))
    ]
    jobs.sort(key=lambda j: -labels[j])
    chains = {j: geometry.chains[(j, C)] for j in jobs}
    pc = {j: [prefix_cost(chains[j], k) for k in range(s + 1)] for j in jobs}
    B = {sp: budgets.get(sp, 0) for sp in range(1, s + 1)}
    x = {j: [Fraction(0)] * (s + 1) for j in jobs}
    spend = {}
    for sp in range(s, 0, -1):
        avail = [j for j in jobs if any(_fits(pc[j][st], B[st]) for st in range(sp, s + 1))]
        left = None if B[sp] is None else (1 + eps) * B[sp]
        spent = Fraction(0)
        for j in avail:
            if left is not None and left <= 0:
                break
            cur = x[j][1]
            if cur >= 1:
                continue
            rate = pc[j][sp]
            step = 1 - cur
            if left is not None and step * rate > left:
                step = left / rate
            for r in range(1, sp + 1):
                x[j][r] += step
            spent += step * rate
            if left is not None:
                left -= step * rate
        spend[sp] = spent
        if debug:
            _check_fraction_invariant(jobs, x, pc, B, s)
    sel = frozenset(chains[j][r - 1] for j in jobs for r in range(1, s + 1) if x[j][r] > 0)
    return GreedyResult(sel, x, spend)


def job_kind(prefix_costs, B, s):
    """Largest ``k`` with ``cost(first k) <= B(k)``, or 0."""
    for k in range(s, 0, -1):
        if _fits(prefix_costs[k], B[k]):
            return k
    return 0


def _check_fraction_invariant(jobs, x, pc, B, s):
    seen = set()
    for j in jobs:
        k = job_kind(pc[j], B, s)
        for r in range(1, s + 1):
            if 0 < x[j][r] < 1:
                if (k, r) in seen:
                    raise AssertionError(f"two fractional jobs of kind {k} at position {r}")
                seen.add((k, r))


def type_rects(geometry, C, tau, sel, types=None):
    types = types or chain_types(geometry)
    return frozenset(r for key in geometry.cell_chains.get(C, ()) if types[key] == tau
                     for r in geometry.chains[key] if r in sel)


def check_greedy_dominance(geometry, C, tau, budgets, reference, types=None, output=None):
    """Coverage domination on every ray plus the ``(2+eps)`` cost bound."""
    types = types or chain_types(geometry)
    eps = geometry.grid.params.epsilon
    ref_ledger = budgets_from_solution(geometry, reference, types)
    for sp in range(1, tau.s + 1):
        need = ref_ledger.get((C, tau, sp), 0)
        have = budgets.get(sp, 0)
        if have is not None and have < need:
            return Report(False, "precondition: budget below reference spend", (sp, have, need))
    out = output if output is not None else greedy_select(geometry, C, tau, budgets, types=types).selection
    ref = type_rects(geometry, C, tau, reference, types)
    for ray in geometry.rays:
        got = sum(r.cap for r in out & ray.rects)
        want = sum(r.cap for r in ref & ray.rects)
        if got < want:
            return Report(False, "coverage: greedy below reference", (ray, got, want))
    if all(b is not None for b in budgets.values()):
        cost = sum(r.cost for r in out)
        cap = (2 + eps) * sum(budgets.values())
        if cost > cap:
            return Report(False, "cost: greedy above (2+eps) * budgets", (cost, cap))
    return Report(True)


def ledger_groups(ledger):
    """``{(cell, type): {s': budget}}``."""
    out = {}
    for (cell, tau, sp), b in ledger.items():
        out.setdefault((cell, tau), {})[sp] = b
    return out


def build_qpoly_solution(geometry, ledger, reference=None, check=True, index=None):
    """Union of GreedySelect over all (cell, type) with singleton path families.

    Returns ``(solution, families)``. With ``check`` the consistency of the
    result is verified and, when ``reference`` is given, dominance and the
    ``(2+eps)`` cost bound are asserted per (cell, type).
    """
    types = chain_types(geometry)
    eps = geometry.grid.params.epsilon
    picked = set()
    for (C, tau), B in sorted(ledger_groups(ledger).items(), key=lambda kv: _ledger_key((*kv[0], 0))):
        res = greedy_select(geometry, C, tau, B, types=types)
        if check and reference is not None:
            rep = check_greedy_dominance(geometry, C, tau, B, reference, types, output=res.selection)
            if not rep:
                raise AssertionError(f"GreedySelect guarantee failed at {C}, {tau}: {rep.message} {rep.witness}")
        picked |= res.selection
    rects = frozenset(picked)
    idx = index or PathIndex(geometry)
    families = singleton_families(geometry, rects, idx)
    sol = ConsistentSolution(rects, {c: f[0] for c, f in families.items()}, {c: 0 for c in families})
    if check:
        rep = check_consistent(geometry, sol, families, ray_scope=ALL, index=idx)
        if not rep:
            raise AssertionError(f"qpoly solution not consistent: {rep.message}")
        if reference is not None:
            bound = (2 + eps) * sum(r.cost for r in reference)
            if sol.cost > bound:
                raise AssertionError(f"qpoly cost {sol.cost} exceeds {bound}")
    return sol, families
