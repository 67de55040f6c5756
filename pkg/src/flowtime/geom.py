"""Rectangles, rays and the covering formulation over a grid."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .grid import build_segments
from .instance import horizon
from .oracle import IpSolution, Report


class Rect:
    """Rectangle ``[beg, end) x [row, row+1)`` of one job segment.

    Hashing is by identity; rectangles belong to exactly one geometry.
    """

    __slots__ = ("rid", "job", "release", "beg", "end", "cell", "row", "cap", "cost", "index_in_chain")

    def __init__(self, rid, job, release, beg, end, cell, row, cap, cost, index_in_chain):
        self.rid = rid
        self.job = job
        self.release = release
        self.beg = beg
        self.end = end
        self.cell = cell
        self.row = row
        self.cap = cap
        self.cost = cost
        self.index_in_chain = index_in_chain

    @property
    def chain_key(self):
        return (self.job, self.cell)

    def __repr__(self):
        return f"Rect(job={self.job}, [{self.beg},{self.end}), lvl={self.cell.level}, cost={self.cost})"


@dataclass(frozen=True, eq=False)
class Ray:
    """Downward ray for ``I = [s, t]`` at ``x = t + 1/2`` from ``y = j(I) + 1/2``.

    Half-integer coordinates are kept doubled: ``x2 = 2t+1``, ``ybase2 = 2 j(I) + 1``.
    ``rects`` is ``R(I)``, the rectangles the ray meets.
    """

    s: int
    t: int
    first_row: int
    demand: int
    rects: frozenset = frozenset()

    @property
    def x2(self):
        return 2 * self.t + 1

    @property
    def ybase2(self):
        return 2 * self.first_row + 1

    def __repr__(self):
        return f"Ray([{self.s},{self.t}], d={self.demand})"


def intersects(ray, rect):
    """Geometric test on doubled coordinates.

    ``rect`` may also be a ``RectArrays`` view, giving a boolean array.
    """
    in_x = (2 * rect.beg <= ray.x2) & (ray.x2 < 2 * rect.end)
    in_y = 2 * rect.row + 2 > ray.ybase2
    return in_x & in_y


def intersects_algebraic(ray, rect):
    return (ray.s <= rect.release) & (rect.release <= ray.t) & (rect.beg <= ray.t) & (ray.t < rect.end)


@dataclass(frozen=True)
class RectArrays:
    """Column view of a list of rectangles for vectorized predicates."""

    beg: np.ndarray
    end: np.ndarray
    row: np.ndarray
    release: np.ndarray

    @classmethod
    def of(cls, rects):
        cols = np.array([(r.beg, r.end, r.row, r.release) for r in rects], dtype=np.int64).reshape(-1, 4)
        return cls(cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3])


class Geometry:
    """All rectangles and positive-demand rays for one instance and grid."""

    def __init__(self, instance, grid):
        self.instance = instance
        self.grid = grid
        self.T = horizon(instance) if instance.jobs else 0
        self.rects = []
        self.chains = {}
        self.job_chains = {}
        labels = instance.labels()
        for job in instance.jobs:
            keys = []
            prev = None
            for seg in build_segments(grid, job, self.T):
                key = (job.id, seg.cell)
                if key != prev:
                    self.chains[key] = []
                    keys.append(key)
                    prev = key
                chain = self.chains[key]
                if chain:
                    cost = job.weight * (seg.end - seg.beg)
                else:
                    cost = job.weight * (seg.end - job.release)
                r = Rect(len(self.rects), job.id, job.release, seg.beg, seg.end, seg.cell,
                         labels[job.id], job.proc, cost, len(chain) + 1)
                self.rects.append(r)
                chain.append(r)
            self.job_chains[job.id] = keys
        self.cell_chains = {}
        for key in self.chains:
            self.cell_chains.setdefault(key[1], []).append(key)
        self.rays = self._build_rays()

    def _build_rays(self):
        jobs = self.instance.jobs
        if not jobs:
            return []
        T = self.T
        starts = sorted({0} | {j.release for j in jobs})
        live = [r for r in self.rects if r.beg <= T]
        arr = RectArrays.of(live)
        rays = []
        for s in starts:
            first = next(i for i, j in enumerate(jobs) if j.release >= s) + 1
            for t in range(s, T + 1):
                inside = [j for j in jobs if s <= j.release <= t]
                d = sum(j.proc for j in inside) - (t - s)
                if d <= 0:
                    continue
                mask = intersects(Ray(s, t, first, d), arr)
                hit = frozenset(r for r, m in zip(live, mask) if m)
                rays.append(Ray(s, t, first, d, hit))
        return rays

    def rect_arrays(self):
        return RectArrays.of(self.rects)

    def chain(self, job_id, cell):
        return self.chains[(job_id, cell)]

    def cost(self, sel):
        return sum(r.cost for r in sel)


def build_geometry(instance, grid):
    return Geometry(instance, grid)


def selection_cost(sel):
    return sum(r.cost for r in sel)


def is_prefix_closed(geometry, sel):
    for r in sel:
        if r.index_in_chain > 1:
            prev = geometry.chains[r.chain_key][r.index_in_chain - 2]
            if prev not in sel:
                return False, r
    return True, None


def coverage(sel, ray):
    return sum(r.cap for r in sel & ray.rects)


def ip2_check(geometry, sel):
    ok, bad = is_prefix_closed(geometry, sel)
    if not ok:
        return Report(False, "prefix violation", bad)
    for ray in geometry.rays:
        if coverage(sel, ray) < ray.demand:
            return Report(False, f"ray [{ray.s},{ray.t}] uncovered", ray)
    return Report(True)


def _live_chains(geometry):
    T = geometry.T
    out = []
    for key, chain in geometry.chains.items():
        live = [r for r in chain if r.beg < T]
        if live:
            out.append(live)
    return out


def ip2_opt_bruteforce(geometry, bound=24):
    """Exact optimum by branch and bound over per-chain prefix lengths.

    Rectangles starting at or after T meet no ray and are never selected.
    Returns ``(cost, selection)`` or ``(None, None)`` if infeasible.
    """
    chains = _live_chains(geometry)
    total = sum(len(c) for c in chains)
    if total > bound:
        raise ValueError(f"{total} rectangles exceed the brute-force bound {bound}")
    rays = geometry.rays
    if not rays:
        return 0, frozenset()
    ray_idx = {id(ray): i for i, ray in enumerate(rays)}
    demand = np.array([ray.demand for ray in rays], dtype=np.int64)
    cols = {}
    for c in chains:
        for r in c:
            v = np.zeros(len(rays), dtype=np.int64)
            for ray in rays:
                if r in ray.rects:
                    v[ray_idx[id(ray)]] = r.cap
            cols[r] = v
    # prefix coverage and cost options per chain
    options = []
    for c in chains:
        acc = np.zeros(len(rays), dtype=np.int64)
        opts = [(0, acc.copy())]
        cost = 0
        for r in c:
            acc = acc + cols[r]
            cost += r.cost
            opts.append((cost, acc.copy()))
        options.append(opts)
    # suffix maximum coverage for pruning
    suffix = [np.zeros(len(rays), dtype=np.int64) for _ in range(len(chains) + 1)]
    for i in range(len(chains) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + options[i][-1][1]
    best = [None, None]
    choice = [0] * len(chains)

    def rec(i, cost, cov):
        if best[0] is not None and cost >= best[0]:
            return
        if np.any(cov + suffix[i] < demand):
            return
        if i == len(chains):
            best[0], best[1] = cost, list(choice)
            return
        for k, (c, v) in enumerate(options[i]):
            choice[i] = k
            rec(i + 1, cost + c, cov + v)
        choice[i] = 0

    rec(0, 0, np.zeros(len(rays), dtype=np.int64))
    if best[0] is None:
        return None, None
    sel = frozenset(r for c, k in zip(chains, best[1]) for r in c[:k])
    return best[0], sel


def ip2_opt(geometry):
    """Exact optimum via an integer program solved by HiGHS.

    The returned selection is re-checked for feasibility and its cost is
    recomputed in integers. Returns ``(None, None)`` if infeasible.
    """
    chains = _live_chains(geometry)
    rects = [r for c in chains for r in c]
    if not geometry.rays:
        return 0, frozenset()
    if not rects:
        return None, None
    pos = {r: i for i, r in enumerate(rects)}
    m = len(rects)
    rows, lb = [], []
    for ray in geometry.rays:
        row = np.zeros(m)
        for r in ray.rects:
            if r in pos:
                row[pos[r]] = r.cap
        rows.append(row)
        lb.append(ray.demand)
    for c in chains:
        for a, b in zip(c, c[1:]):
            row = np.zeros(m)
            row[pos[a]] = 1
            row[pos[b]] = -1
            rows.append(row)
            lb.append(0)
    A = np.array(rows)
    cons = LinearConstraint(A, np.array(lb, dtype=float), np.full(len(lb), np.inf))
    res = milp(
        c=np.array([r.cost for r in rects], dtype=float),
        constraints=cons,
        integrality=np.ones(m),
        bounds=Bounds(0, 1),
        options={"mip_rel_gap": 0},
    )
    if res.status == 2:
        return None, None
    if res.x is None:
        raise RuntimeError(f"MILP solver failed: {res.message}")
    sel = frozenset(r for r, v in zip(rects, res.x) if v > 0.5)
    rep = ip2_check(geometry, sel)
    if not rep:
        raise RuntimeError(f"MILP returned an infeasible selection: {rep.message}")
    return selection_cost(sel), sel


def ip2_to_ip(instance, sel):
    """Deadline of each job is the end of its rightmost selected segment."""
    T = horizon(instance)
    d = {j.id: j.release for j in instance.jobs}
    for r in sel:
        d[r.job] = max(d[r.job], min(r.end, T + 1))
    return IpSolution.from_deadlines(d)


def opt_to_ip2_witness(instance, geometry, flowtimes):
    """Select every segment meeting ``[r_j, r_j + F_j)``; asserts the per-job 8 w F bound."""
    sel = []
    for job in instance.jobs:
        F = flowtimes[job.id]
        spent = 0
        for key in geometry.job_chains[job.id]:
            for r in geometry.chains[key]:
                if r.beg < job.release + F:
                    sel.append(r)
                    spent += r.cost
        if spent > 8 * job.weight * F:
            raise AssertionError(f"witness cost {spent} for job {job.id} exceeds 8*w*F={8 * job.weight * F}")
    return frozenset(sel)


def witness_job_costs(instance, sel):
    out = {j.id: 0 for j in instance.jobs}
    for r in sel:
        out[r.job] += r.cost
    return out


def selection_to_json(geometry, sel):
    counts = {}
    for r in sel:
        counts[r.chain_key] = max(counts.get(r.chain_key, 0), r.index_in_chain)
    chains = [
        {"job": job, "cellLevel": cell.level, "cellBeg": cell.beg, "prefixLen": k}
        for (job, cell), k in sorted(counts.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    ]
    return json.dumps({"chains": chains}) + "\n"


def selection_from_json(geometry, text):
    data = json.loads(text)
    sel = []
    for item in data["chains"]:
        cell = geometry.grid.cell_at(item["cellLevel"], item["cellBeg"])
        key = (item["job"], cell)
        if key not in geometry.chains:
            raise ValueError(f"no chain for job {item['job']} in cell {cell}")
        chain = geometry.chains[key]
        k = item["prefixLen"]
        if not 0 <= k <= len(chain):
            raise ValueError(f"prefix length {k} out of range for chain of length {len(chain)}")
        sel.extend(chain[:k])
    return frozenset(sel)


def render_svg(geometry, sel=None, path=None, unit=32, row_h=24):
    """Static SVG of rectangles, rays and cell guides. Byte-stable."""
    sel = sel or frozenset()
    pad = 20
    rects = geometry.rects
    n = geometry.instance.n
    xmin = min([0] + [r.beg for r in rects])
    xmax = max([max(geometry.T, 1)] + [r.end for r in rects])
    width = (xmax - xmin) * unit + 2 * pad
    height = (n + 1) * row_h + 2 * pad

    def X(v2):
        return pad + (v2 - 2 * xmin) * unit // 2

    def Y(v2):
        return pad + v2 * row_h // 2

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
        "<defs>",
        '<pattern id="hatch" patternUnits="userSpaceOnUse" width="6" height="6">',
        '<path d="M0,6 L6,0" stroke="black" stroke-width="1"/>',
        "</pattern>",
        "</defs>",
    ]
    guides = sorted({c.beg for _, c in geometry.chains} | {c.end for _, c in geometry.chains})
    for g in guides:
        out.append(f'<line x1="{X(2 * g)}" y1="{pad}" x2="{X(2 * g)}" y2="{height - pad}" stroke="green" stroke-width="1"/>')
    for r in rects:
        fill = "url(#hatch)" if r in sel else "none"
        out.append(
            f'<rect x="{X(2 * r.beg)}" y="{Y(2 * r.row)}" width="{X(2 * r.end) - X(2 * r.beg)}" '
            f'height="{row_h}" fill="{fill}" stroke="black" stroke-width="1"/>'
        )
    for ray in geometry.rays:
        out.append(
            f'<line x1="{X(ray.x2)}" y1="{Y(ray.ybase2)}" x2="{X(ray.x2)}" y2="{height - pad}" '
            'stroke="red" stroke-width="1"/>'
        )
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
