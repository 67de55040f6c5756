"""Budget smoothing, the small/large split and the path-restricted solutions.

Every quantity that the analysis guesses is computed here from a reference
optimum ``R*`` (an optimal IP2 selection). The constructions and their
inequality claims are implemented and asserted; no enumeration happens.

Density pairs are ``(rho, rho2)`` exponent tuples where ``math.inf`` stands
for an infinite density. ``TOP`` and ``BOTTOM`` are the two sentinels of the
critical-pair table.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from .dptree import PATH, ConsistentSolution, PathIndex, check_consistent
from .oracle import Report
from .qpoly import RectType, chain_types, density_exp, greedy_select, prefix_cost, prefix_len

TOP = (math.inf, math.inf)
BOTTOM = (-math.inf, -math.inf)


def pair_of(tau):
    return (tau.rho, math.inf if tau.rho2 is None else tau.rho2)


def type_of_pair(pair, s):
    return RectType(pair[0], None if pair[1] == math.inf else pair[1], s)


def scale_pair(pair, k):
    """Multiply both densities by ``(1+eps)^k``; sentinels stay put."""
    return (pair[0] + k, pair[1] + k)


def _enc(v):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return v


def power_ceil(x, base):
    """Smallest integral power of ``base`` that is ``>= x``; zero stays zero."""
    x = Fraction(x)
    if x <= 0:
        return Fraction(0)
    base = Fraction(base)
    k = math.ceil(_log(x) / _log(base))
    while _pow(base, k) < x:
        k += 1
    while _pow(base, k - 1) >= x:
        k -= 1
    return _pow(base, k)


def _log(x):
    # big numerators and denominators overflow float(x); ints do not
    return math.log(x.numerator) - math.log(x.denominator)


@lru_cache(maxsize=4096)
def _pow(base, k):
    return base**k


def power_floor_exp(x, base):
    """Largest ``k`` with ``base^k <= x``."""
    x, base = Fraction(x), Fraction(base)
    k = math.floor(_log(x) / _log(base))
    while base**k > x:
        k -= 1
    while base ** (k + 1) <= x:
        k += 1
    return k


# ---------------------------------------------------------------- cell budgets


@dataclass
class CellBudgets:
    epsilon: Fraction
    K: int
    b_opt: dict
    b_prime: dict
    b_round: dict
    b_add: dict

    def add_split(self, C):
        """``B_add(C, s, s')``, the same for every ``s, s'``."""
        return self.b_add[C] / self.K**4

    def to_json(self):
        rows = [
            {"cell": C.to_dict(), "opt": str(self.b_opt[C]), "round": str(self.b_round[C]),
             "add": str(self.b_add[C])}
            for C in sorted(self.b_round) if self.b_round[C] or self.b_add[C]
        ]
        return json.dumps(rows) + "\n"


def cell_opt_budgets(geometry, sel):
    """``{cell: c(R* & R(C))}``."""
    out = {}
    for r in sel:
        out[r.cell] = out.get(r.cell, 0) + r.cost
    return out


def _depth_factor(tree, C, ratio):
    """``sum_i #descendants(C at distance i) * ratio^i`` for ``i >= 1``."""
    total, frontier, power = Fraction(0), [C], Fraction(1)
    while True:
        frontier = [k for c in frontier for k in tree.children[c]]
        if not frontier:
            return total
        power *= ratio
        total += len(frontier) * power


def smooth_budgets(b_opt, epsilon, K, tree, check=True):
    """Ancestor-donation smoothing of per-cell budgets and the additional budgets.

    ``B'(C) = B_opt(C) + sum over ancestors C' of B_opt(C') (eps/K)^dist``;
    ``B_round`` rounds up to a power of ``1+eps``; ``B_add`` is the same sum
    taken over ``B_round``.
    """
    eps = Fraction(epsilon)
    ratio = eps / K
    b_prime, b_round, b_add = {}, {}, {}
    # walk top-down carrying the discounted ancestor sums
    stack = [(tree.root, Fraction(0), Fraction(0))]
    while stack:
        C, from_opt, from_round = stack.pop()
        opt = Fraction(b_opt.get(C, 0))
        b_prime[C] = opt + from_opt
        b_round[C] = power_ceil(b_prime[C], 1 + eps)
        b_add[C] = from_round
        for k in tree.children[C]:
            stack.append((k, (from_opt + opt) * ratio, (from_round + b_round[C]) * ratio))
    cb = CellBudgets(eps, K, {C: Fraction(b_opt.get(C, 0)) for C in b_round}, b_prime, b_round, b_add)
    if check:
        rep = check_cell_budgets(cb, tree)
        if not rep:
            raise AssertionError(f"budget smoothing: {rep.message} {rep.witness}")
    return cb


def check_cell_budgets(cb, tree):
    """Entrywise and aggregate claims of the smoothing step.

    The aggregate bounds ``(1+4eps)`` and ``2eps`` rely on a geometric series
    in ``eps`` and only follow for ``eps <= 1/2``. The exact finite-depth
    versions are checked for every ``eps``.
    """
    eps = cb.epsilon
    ratio = eps / cb.K
    for C, b in cb.b_round.items():
        if b < cb.b_opt[C]:
            return Report(False, "B_round below B_opt", C)
        if b < cb.b_prime[C] or (b and b > (1 + eps) * cb.b_prime[C]):
            return Report(False, "B_round is not the power just above B'", C)
    s_opt = sum(cb.b_opt.values())
    s_prime = sum(cb.b_prime.values())
    s_round = sum(cb.b_round.values())
    s_add = sum(cb.b_add.values())
    exact_prime = sum(b * (1 + _depth_factor(tree, C, ratio)) for C, b in cb.b_opt.items() if b)
    if s_prime > exact_prime:
        return Report(False, "sum B' above the depth-bounded donation total", (s_prime, exact_prime))
    if s_round > (1 + eps) * s_prime:
        return Report(False, "sum B_round above (1+eps) sum B'", (s_round, s_prime))
    exact_add = sum(b * _depth_factor(tree, C, ratio) for C, b in cb.b_round.items() if b)
    if s_add > exact_add:
        return Report(False, "sum B_add above the depth-bounded donation total", (s_add, exact_add))
    if eps <= Fraction(1, 2):
        if s_round > (1 + 4 * eps) * s_opt:
            return Report(False, "sum B_round above (1+4eps) sum B_opt", (s_round, s_opt))
        if s_add > 2 * eps * s_round:
            return Report(False, "sum B_add above 2eps sum B_round", (s_add, s_round))
    return Report(True)


# ------------------------------------------------------------ small and large


def default_delta(epsilon, K):
    return Fraction(epsilon) / K**8


@dataclass
class SmallLargeSplit:
    delta: Fraction
    large: frozenset
    small: frozenset

    def is_large(self, job, cell):
        return (job, cell) in self.large

    def rects(self, geometry, which):
        keys = self.large if which == "large" else self.small
        return frozenset(r for key in keys for r in geometry.chains[key])


def split_small_large(geometry, cb, delta=None, reference=None):
    """Classify every chain by its leftmost rectangle against ``delta * B_round(C)``."""
    delta = default_delta(cb.epsilon, cb.K) if delta is None else Fraction(delta)
    large, small = set(), set()
    for key, chain in geometry.chains.items():
        if chain[0].cost > delta * cb.b_round.get(key[1], 0):
            large.add(key)
        else:
            small.add(key)
    split = SmallLargeSplit(delta, frozenset(large), frozenset(small))
    if reference is not None:
        counts = {}
        for key in large:
            if geometry.chains[key][0] in reference:
                counts[key[1]] = counts.get(key[1], 0) + 1
        for C, k in counts.items():
            if k > 1 / delta:
                raise AssertionError(f"{k} large jobs of R* in {C}, more than 1/delta")
    return split


# -------------------------------------------------------------- small rectangles


def small_opt_budgets(geometry, split, sel, types=None):
    """``{(cell, type, s'): spend}`` of ``sel`` restricted to small chains."""
    types = types or chain_types(geometry)
    out = {}
    for key in split.small:
        chain = geometry.chains[key]
        k = prefix_len(chain, sel)
        if k:
            lk = (key[1], types[key], k)
            out[lk] = out.get(lk, 0) + prefix_cost(chain, k)
    return out


def small_pairs(geometry, split, types=None):
    """``{(cell, s): sorted density pairs}`` over small chains."""
    types = types or chain_types(geometry)
    out = {}
    for key in split.small:
        tau = types[key]
        out.setdefault((key[1], tau.s), set()).add(pair_of(tau))
    return {k: sorted(v) for k, v in out.items()}


@dataclass
class CriticalPairs:
    """``gamma[(C, s, s')]``; missing entries read as ``TOP``."""

    gamma: dict = field(default_factory=dict)
    fragments: dict = field(default_factory=dict)

    def get(self, C, s, sp):
        return self.gamma.get((C, s, sp), TOP)

    def cell_set(self, C):
        return {g for (c, _, _), g in self.gamma.items() if c == C}

    def to_json(self):
        rows = [
            {"cell": C.to_dict(), "s": s, "sPrime": sp, "gamma": [_enc(g[0]), _enc(g[1])]}
            for (C, s, sp), g in sorted(self.gamma.items())
        ]
        return json.dumps(rows) + "\n"


def _small_filter(split, C):
    return lambda j: (j, C) in split.small


def greedy_increase(geometry, C, s, sm_opt, cb, split, types=None, pairs=None):
    """Run the increasing-budget greedy over the density pairs of ``(C, s)``.

    Returns ``(selection, {s': gamma})``. For each pair, ascending, and each
    ``s'``: if the fractional spend so far is below ``B_add(C,s,s') +`` the
    optimum spend of the earlier pairs, the budget gets the extra ``B_add``.
    """
    types = types or chain_types(geometry)
    if pairs is None:
        pairs = small_pairs(geometry, split, types).get((C, s), [])
    add = cb.add_split(C)
    spent = {sp: Fraction(0) for sp in range(1, s + 1)}
    prior = {sp: Fraction(0) for sp in range(1, s + 1)}
    last_case1 = {sp: None for sp in range(1, s + 1)}
    saw_case2 = {sp: False for sp in range(1, s + 1)}
    picked = set()
    keep = _small_filter(split, C)
    for pair in pairs:
        tau = type_of_pair(pair, s)
        budgets = {}
        for sp in range(1, s + 1):
            opt = Fraction(sm_opt.get((C, tau, sp), 0))
            if spent[sp] < add + prior[sp]:
                budgets[sp] = opt + add
                last_case1[sp] = pair
            else:
                budgets[sp] = opt
                saw_case2[sp] = True
        res = greedy_select(geometry, C, tau, budgets, job_filter=keep, types=types)
        picked |= res.selection
        for sp in range(1, s + 1):
            spent[sp] += res.fractional_spend.get(sp, 0)
            prior[sp] += sm_opt.get((C, tau, sp), 0)
    gamma = {}
    for sp in range(1, s + 1):
        if not saw_case2[sp]:
            gamma[sp] = TOP
        elif last_case1[sp] is None:
            gamma[sp] = BOTTOM
        else:
            gamma[sp] = last_case1[sp]
    return frozenset(picked), gamma


def critical_pairs(geometry, sm_opt, cb, split, types=None):
    types = types or chain_types(geometry)
    cp = CriticalPairs()
    for (C, s), pairs in sorted(small_pairs(geometry, split, types).items()):
        frag, gamma = greedy_increase(geometry, C, s, sm_opt, cb, split, types, pairs)
        cp.fragments[(C, s)] = frag
        for sp, g in gamma.items():
            cp.gamma[(C, s, sp)] = g
    return cp


def round_small_budgets(geometry, sm_opt, cp, cb, split, types=None, check=True):
    """Per-stretch geometric smoothing, rounded up to powers of ``1+eps/4``.

    Stretches run between consecutive elements of ``Gamma(C)``; inside a
    stretch the ``i``-th pair (the stretch start is ``i = 0``) receives
    ``(eps/4K^8)^(i+1) B_round(C) + sum_{j<=i} (eps/4)^(i-j) B_opt(pair_j)``.
    Returns ``{(cell, type, s'): budget}`` for every small pair.
    """
    types = types or chain_types(geometry)
    eps, K = cb.epsilon, cb.K
    geo = eps / (4 * K**8)
    out = {}
    for (C, s), pairs in sorted(small_pairs(geometry, split, types).items()):
        bounds = sorted(cp.cell_set(C) | {BOTTOM})
        br = cb.b_round.get(C, 0)
        for sp in range(1, s + 1):
            stretches = {}
            for pair in pairs:
                h = bisect_right(bounds, pair) - 1
                stretches.setdefault(h, []).append(pair)
            for h, members in stretches.items():
                start = bounds[h]
                seq = members if members[0] == start else [start] + members
                acc = Fraction(0)
                total_round, total_opt = Fraction(0), Fraction(0)
                for i, pair in enumerate(seq):
                    opt = Fraction(sm_opt.get((C, type_of_pair(pair, s), sp), 0)) if pair in members else 0
                    acc = acc * (eps / 4) + opt
                    bprime = geo ** (i + 1) * br + acc
                    bround = power_ceil(bprime, 1 + eps / 4)
                    if pair in members:
                        out[(C, type_of_pair(pair, s), sp)] = bround
                    if check and bround < opt:
                        raise AssertionError(f"claim 1 fails at {C}, {pair}, s'={sp}")
                    total_round += bround
                    total_opt += opt
                if check and total_round > eps / K**8 * br + (1 + eps) * total_opt:
                    raise AssertionError(f"claim 2 fails on the stretch from {start} at {C}, s={s}, s'={sp}")
            if check:
                for g in bounds:
                    above = [p for p in pairs if p >= g]
                    lhs = sum(out[(C, type_of_pair(p, s), sp)] for p in above)
                    rhs = eps / K**4 * br + (1 + eps) * sum(
                        Fraction(sm_opt.get((C, type_of_pair(p, s), sp), 0)) for p in above)
                    if lhs > rhs:
                        raise AssertionError(f"tail claim fails from {g} at {C}, s={s}, s'={sp}")
    return out


def small_cost_bound(eps, K, delta, c_small_ref, c_ref):
    return (2 + 4 * eps) * c_small_ref + (K**8 * delta + 6 * eps) * (1 + eps) * c_ref


def build_small_solution(geometry, cb, cp, round_budgets, split, reference=None, types=None):
    """Per (cell, s, pair) GreedySelect over small jobs with the case-table budgets."""
    types = types or chain_types(geometry)
    picked = set()
    for (C, s), pairs in sorted(small_pairs(geometry, split, types).items()):
        add = cb.add_split(C)
        keep = _small_filter(split, C)
        for pair in pairs:
            tau = type_of_pair(pair, s)
            budgets = {}
            for sp in range(1, s + 1):
                g = cp.get(C, s, sp)
                base = round_budgets.get((C, tau, sp), 0)
                if pair < g:
                    budgets[sp] = None
                elif pair == g:
                    budgets[sp] = base + add
                else:
                    budgets[sp] = base
            picked |= greedy_select(geometry, C, tau, budgets, job_filter=keep, types=types).selection
    out = frozenset(picked)
    if reference is not None:
        small_rects = split.rects(geometry, "small")
        c_sm = sum(r.cost for r in reference & small_rects)
        bound = small_cost_bound(cb.epsilon, cb.K, split.delta, c_sm, sum(r.cost for r in reference))
        cost = sum(r.cost for r in out)
        if cost > bound:
            raise AssertionError(f"small solution cost {cost} exceeds {bound}")
    return out


def first_hit(chain, C):
    """1-based index of the chain rectangle that meets cell ``C``, or 0."""
    for r in chain:
        if r.beg < C.end and C.beg < r.end:
            return r.index_in_chain
    return 0


def sigma_minus(geometry, C, bottom, cp, split, types):
    best = TOP
    seen = set()
    for key in geometry.cell_chains.get(C, ()):
        if key not in split.small:
            continue
        s = types[key].s
        if s in seen:
            continue
        seen.add(s)
        r = first_hit(geometry.chains[key], bottom)
        if r:
            best = min(best, cp.get(C, s, r))
    return best


@lru_cache(maxsize=None)
def h_exponent(epsilon, K):
    """``k`` with ``(1+eps)^k <= K^7/eps < (1+eps)^(k+1)``."""
    eps = Fraction(epsilon)
    return power_floor_exp(Fraction(K**7) / eps, 1 + eps)


def restrict_small_to_path(geometry, small_sel, bottom, cp, cb, split, tree, types=None):
    """``R'_{sm,Q}`` for the root path ending in ``bottom``."""
    types = types or chain_types(geometry)
    path = tree.path(bottom)
    ell = len(path)
    h = h_exponent(cb.epsilon, cb.K)
    # sigma_minus for C_j, j < ell - 1 (0-based j <= ell - 3)
    sig_minus = [sigma_minus(geometry, path[j], bottom, cp, split, types) for j in range(max(ell - 2, 0))]
    keep = set()
    for i, C in enumerate(path):
        chains = [key for key in geometry.cell_chains.get(C, ()) if key in split.small]
        if i >= ell - 2:
            for key in chains:
                keep.update(r for r in geometry.chains[key] if r in small_sel)
            continue
        sig_plus = TOP
        for j in range(i + 1, ell - 2):
            sig_plus = min(sig_plus, scale_pair(sig_minus[j], h * (j - i)))
        for key in chains:
            chain = geometry.chains[key]
            k = prefix_len(chain, small_sel)
            r = first_hit(chain, bottom)
            if r == 0 or k < r:
                continue
            if pair_of(types[key]) >= sig_plus:
                continue
            keep.update(chain[:r])
    return frozenset(keep)


# -------------------------------------------------------------- large rectangles


def pbar_exp(p, epsilon):
    """``h`` with ``(1+eps)^h <= p < (1+eps)^(h+1)``."""
    return density_exp(p, 1, epsilon)


def group_of(tau):
    return (None if tau.rho2 is None else tau.rho - tau.rho2, tau.s)


def multiple_ceil(x, unit, strict=False):
    """Smallest integral multiple of ``unit`` that is ``>= x`` (``> x`` if strict)."""
    q = Fraction(x) / unit
    k = math.floor(q) + 1 if strict else math.ceil(q)
    return k * unit


@dataclass
class LargeLedger:
    b_opt: dict = field(default_factory=dict)
    b_round: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)
    pbar: dict = field(default_factory=dict)
    easy: dict = field(default_factory=dict)
    hard: dict = field(default_factory=dict)
    partners: dict = field(default_factory=dict)

    def to_json(self):
        rows = []
        for (C, g), info in sorted(self.groups.items(), key=lambda kv: (kv[0][0], _gkey(kv[0][1]))):
            rows.append({
                "cell": C.to_dict(), "group": [_enc(g[0]) if g[0] is not None else "inf", g[1]],
                "k": len(info["jobs"]), "jobs": info["jobs"], "sPrime": info["s_prime"],
                "budgets": [str(b) for b in info["budgets"]], "high": sorted(info["high"]),
                "easy": sorted(info["easy"]), "hard": sorted(info["hard"]),
            })
        return json.dumps(rows) + "\n"


def _gkey(g):
    return (g[0] is None, g[0] if g[0] is not None else 0, g[1])


class ExistenceError(AssertionError):
    pass


def build_large_solution(geometry, cb, split, reference, types=None, check=True):
    """Easy jobs keep their reference prefix; each hard job buys two stand-ins.

    Returns ``(selection, ledger)``.
    """
    types = types or chain_types(geometry)
    eps = cb.epsilon
    delta = split.delta
    inst = geometry.instance
    labels = inst.labels()
    procs = {j.id: j.proc for j in inst.jobs}
    led = LargeLedger()
    led.pbar = {j.id: pbar_exp(j.proc, eps) for j in inst.jobs}
    by_cell = {}
    for key in split.large:
        by_cell.setdefault(key[1], []).append(key[0])
    picked = set()
    for C in sorted(by_cell):
        jobs_here = sorted(by_cell[C], key=lambda j: labels[j])
        opt = sum(prefix_cost(geometry.chains[(j, C)], prefix_len(geometry.chains[(j, C)], reference))
                  for j in jobs_here)
        br = cb.b_round.get(C, 0)
        led.b_opt[C] = opt
        led.b_round[C] = multiple_ceil(opt, eps * br, strict=True) if br else Fraction(0)
        if not opt:
            continue
        unit = eps * delta * led.b_round[C]
        groups = {}
        for j in jobs_here:
            groups.setdefault(group_of(types[(j, C)]), []).append(j)
        led.easy[C], led.hard[C] = set(), set()
        for g, members in sorted(groups.items(), key=lambda kv: _gkey(kv[0])):
            chains = {j: geometry.chains[(j, C)] for j in members}
            sp = {j: prefix_len(chains[j], reference) for j in members}
            ref_jobs = [j for j in members if sp[j]]
            if not ref_jobs:
                continue
            k = len(ref_jobs)
            budgets = [multiple_ceil(prefix_cost(chains[j], sp[j]), unit) for j in ref_jobs]

            def fits(j, s_prime, b):
                return prefix_cost(chains[j], s_prime) <= b

            high = set()
            for jk, b in zip(ref_jobs, budgets):
                elig = [j for j in members if fits(j, sp[jk], b)]
                elig.sort(key=lambda j: (-procs[j], -labels[j]))
                high.update(elig[:k])
            easy = {j for j in ref_jobs if j in high}
            hard = [j for j in ref_jobs if j not in high]
            for j in easy:
                picked.update(chains[j][: sp[j]])
            led.easy[C] |= easy
            led.hard[C] |= set(hard)
            used = set()
            budget_of = dict(zip(ref_jobs, budgets))
            parts = {}
            for j in hard:
                parts.setdefault(led.pbar[j], []).append(j)
            for pb in sorted(parts):
                j_hat = None
                for jk in sorted(parts[pb], key=lambda j: -labels[j]):
                    b = budget_of[jk]
                    cands = [j for j in members if led.pbar[j] == pb and fits(j, sp[jk], b)
                             and (j_hat is None or labels[j] < labels[j_hat])]
                    cands.sort(key=lambda j: -labels[j])
                    if not cands:
                        raise ExistenceError(
                            f"no first stand-in for hard job {jk} in {C}, group {g}: "
                            f"budget {b}, prefix {sp[jk]}, j_hat {j_hat}, members {members}")
                    j1 = cands[0]
                    j2 = cands[1] if len(cands) > 1 else None
                    if jk != j1 and j2 is not None:
                        second = j2
                    else:
                        pool = [j for j in high - easy if j not in used and fits(j, sp[jk], b)]
                        pool.sort(key=lambda j: (-procs[j], -labels[j]))
                        if not pool:
                            raise ExistenceError(
                                f"no fallback stand-in for hard job {jk} in {C}, group {g}: "
                                f"high {sorted(high)}, easy {sorted(easy)}, used {sorted(used)}")
                        second = pool[0]
                        j2 = None
                    for x in (j1, second):
                        picked.update(chains[x][: sp[jk]])
                        used.add(x)
                    led.partners[(C, jk)] = (j1, second)
                    for x in (j1, j2):
                        if x is not None and x not in high:
                            j_hat = x
            led.groups[(C, g)] = {
                "jobs": ref_jobs, "s_prime": [sp[j] for j in ref_jobs], "budgets": budgets,
                "high": high, "easy": easy, "hard": set(hard),
            }
    out = frozenset(picked)
    if check:
        large_rects = split.rects(geometry, "large")
        c_l = sum(r.cost for r in reference & large_rects)
        c_ref = sum(r.cost for r in reference)
        cost = sum(r.cost for r in out)
        chain_bound = 2 * c_l + 2 * eps * sum(led.b_round.values())
        if cost > chain_bound:
            raise AssertionError(f"large solution cost {cost} exceeds 2c_l + 2eps sum B_l_round = {chain_bound}")
        if cost > 2 * c_l + 3 * eps * c_ref:
            raise AssertionError(f"large solution cost {cost} exceeds 2c_l + 3eps c* = {2 * c_l + 3 * eps * c_ref}")
    return out, led


def _meets(rect, C):
    return rect.beg < C.end and C.beg < rect.end


def restrict_large_to_path(geometry, large_sel, bottom, split, reference, led, tree):
    """``R'_{l,Q}`` for the root path ending in ``bottom``."""
    eps = geometry.grid.params.epsilon
    delta = split.delta
    path = tree.path(bottom)
    ell = len(path)
    deep = set(path[max(ell - 2, 0):])

    def hard_hits(C):
        """p-bar exponents of hard jobs of ``C`` with a reference rectangle meeting the bottom cell."""
        out = []
        for j in led.hard.get(C, ()):
            if any(r in reference and _meets(r, bottom) for r in geometry.chains[(j, C)]):
                out.append(led.pbar[j])
        return out

    hits = {C: hard_hits(C) for C in path}
    base = 1 + eps
    keep = set()
    for i, C in enumerate(path):
        for key in geometry.cell_chains.get(C, ()):
            if key not in split.large:
                continue
            j = key[0]
            rects = [r for r in geometry.chains[key] if r in large_sel]
            if not rects:
                continue
            if j in led.easy.get(C, ()):
                keep.update(rects)
                continue
            pb = led.pbar[j]
            if pb not in hits[C]:
                continue
            irrelevant = False
            for d, C2 in enumerate(path[i + 1:], start=1):
                if C2 in deep:
                    continue
                for pb2 in hits[C2]:
                    if base**pb <= base**pb2 * delta * eps**d:
                        irrelevant = True
                        break
                if irrelevant:
                    break
            if not irrelevant:
                keep.update(rects)
    return frozenset(keep)


# ------------------------------------------------------------------ coverage


def check_path_domination(geometry, per_path, reference_part, index, scope=PATH):
    """``p(R'_Q & R(I)) >= p(reference_part & R(I))`` for every ray of every path."""
    for cell in index.tree.parent:
        sub = per_path[cell]
        for ray in index.rays_for(cell, scope):
            got = sum(r.cap for r in sub & ray.rects)
            want = sum(r.cap for r in reference_part & ray.rects)
            if got < want:
                return Report(False, "coverage: path subset below reference", (cell, ray, got, want))
    return Report(True)


def check_path_monotone(per_path, index):
    tree = index.tree
    for cell in tree.parent:
        sub = per_path[cell]
        anc = tree.parent[cell]
        while anc is not None:
            if not (sub & index.path_rects(anc)) <= per_path[anc]:
                return Report(False, "path monotonicity", (cell, anc))
            anc = tree.parent[anc]
    return Report(True)


# ------------------------------------------------------------------ pipeline


def poly_constant(epsilon, K, delta):
    """``c1`` in ``c(R') <= (2 + c1 eps) c(R*)``, summed from the two cost chains."""
    eps = Fraction(epsilon)
    return (4 * eps + (K**8 * delta + 6 * eps) * (1 + eps) + 3 * eps) / eps


@dataclass
class PolyResult:
    solution: ConsistentSolution
    families: dict
    budgets: CellBudgets
    split: SmallLargeSplit
    critical: CriticalPairs
    small_round: dict
    small: frozenset
    large: frozenset
    large_ledger: LargeLedger


def build_poly_solution(geometry, reference, delta=None, check=True, index=None):
    """Small and large constructions with singleton families ``{R'_{sm,Q} | R'_{l,Q}}``.

    ``reference`` must be an IP2-feasible selection (normally an optimum).
    Returns a ``PolyResult``.
    """
    reference = frozenset(reference)
    idx = index or PathIndex(geometry)
    tree = idx.tree
    grid = geometry.grid
    eps, K = grid.params.epsilon, grid.K
    types = chain_types(geometry)
    cb = smooth_budgets(cell_opt_budgets(geometry, reference), eps, K, tree, check=check)
    split = split_small_large(geometry, cb, delta, reference if check else None)
    sm_opt = small_opt_budgets(geometry, split, reference, types)
    cp = critical_pairs(geometry, sm_opt, cb, split, types)
    rb = round_small_budgets(geometry, sm_opt, cp, cb, split, types, check=check)
    small = build_small_solution(geometry, cb, cp, rb, split, reference if check else None, types)
    large, led = build_large_solution(geometry, cb, split, reference, types, check=check)
    per_small = {c: restrict_small_to_path(geometry, small, c, cp, cb, split, tree, types) for c in tree.parent}
    per_large = {c: restrict_large_to_path(geometry, large, c, split, reference, led, tree) for c in tree.parent}
    per_path = {c: per_small[c] | per_large[c] for c in tree.parent}
    rects = small | large
    families = {c: [per_path[c]] for c in tree.parent}
    sol = ConsistentSolution(rects, per_path, {c: 0 for c in tree.parent})
    if check:
        small_ref = reference & split.rects(geometry, "small")
        large_ref = reference & split.rects(geometry, "large")
        for name, part, ref in (("small", per_small, small_ref), ("large", per_large, large_ref)):
            rep = check_path_monotone(part, idx)
            if not rep:
                raise AssertionError(f"{name} path restriction: {rep.message} {rep.witness}")
            rep = check_path_domination(geometry, part, ref, idx)
            if not rep:
                raise AssertionError(f"{name} path restriction: {rep.message} {rep.witness}")
        rep = check_consistent(geometry, sol, families, ray_scope=PATH, index=idx)
        if not rep:
            raise AssertionError(f"poly solution not consistent: {rep.message} {rep.witness}")
        bound = (2 + poly_constant(eps, K, split.delta) * eps) * sum(r.cost for r in reference)
        if sol.cost > bound:
            raise AssertionError(f"poly cost {sol.cost} exceeds {bound}")
    return PolyResult(sol, families, cb, split, cp, rb, small, large, led)
