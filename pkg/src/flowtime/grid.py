"""Offset-parameterized hierarchical grid and per-job segments."""

from __future__ import annotations

import json
import random
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction

from .instance import horizon
from .oracle import Report, completion_times, opt_schedule
from .validation import check_int


def branching(epsilon_inv):
    """K = (2/eps)^(1/eps), exactly."""
    return (2 * epsilon_inv) ** epsilon_inv


def max_level(epsilon_inv, T):
    """Smallest k with K^(k-2) >= T."""
    K = branching(epsilon_inv)
    k, power = 2, 1
    while power < T:
        power *= K
        k += 1
    return k


def offsets_domain(epsilon_inv, T):
    """Return ``(off_y values, off_x values)`` as sorted lists."""
    epsilon_inv = check_int(epsilon_inv, "epsilon_inv", 1)
    T = check_int(T, "T", 1)
    K = branching(epsilon_inv)
    lm = max_level(epsilon_inv, T)
    ys = [(2 * epsilon_inv) ** i for i in range(epsilon_inv)]
    xs = list(range(-(K ** (lm - 1)) + 1, 1))
    return ys, xs


@dataclass(frozen=True)
class GridParams:
    epsilon_inv: int
    K: int
    ell_max: int
    off_x: int
    off_y: int

    @classmethod
    def make(cls, epsilon_inv, T, off_x=0, off_y=1):
        ys, xs = offsets_domain(epsilon_inv, T)
        if off_y not in ys:
            raise ValueError(f"off_y={off_y} outside its domain {ys}")
        if not xs[0] <= off_x <= 0:
            raise ValueError(f"off_x={off_x} outside [{xs[0]}, 0]")
        return cls(epsilon_inv, branching(epsilon_inv), max_level(epsilon_inv, T), off_x, off_y)

    @property
    def epsilon(self):
        return Fraction(1, self.epsilon_inv)


@dataclass(frozen=True, order=True)
class Cell:
    level: int
    beg: int
    end: int

    @property
    def length(self):
        return self.end - self.beg

    def __contains__(self, t):
        return self.beg <= t < self.end

    def to_dict(self):
        return {"level": self.level, "beg": self.beg, "end": self.end}


@dataclass(frozen=True, order=True)
class Segment:
    beg: int
    end: int
    cell: Cell

    @property
    def length(self):
        return self.end - self.beg


class Grid:
    """The cell hierarchy for horizon ``T``. Cells are computed on demand."""

    def __init__(self, T, params):
        self.T = check_int(T, "T", 1)
        expected = GridParams.make(params.epsilon_inv, T, params.off_x, params.off_y)
        if expected != params:
            raise ValueError(f"inconsistent grid parameters {params}")
        self.params = params
        self.K = params.K
        self.ell_max = params.ell_max
        self.root = Cell(0, params.off_x, params.off_x + self.cell_len(0))

    def cell_len(self, level):
        return self.params.off_y * self.K ** (self.ell_max - level)

    def cell_at(self, level, t):
        if not 0 <= level <= self.ell_max:
            raise ValueError(f"level {level} out of range")
        if t not in self.root:
            raise ValueError(f"point {t} outside the root cell")
        L = self.cell_len(level)
        beg = self.params.off_x + (t - self.params.off_x) // L * L
        return Cell(level, beg, beg + L)

    def children(self, cell):
        if cell.level == self.ell_max:
            return []
        L = self.cell_len(cell.level + 1)
        return [Cell(cell.level + 1, b, b + L) for b in range(cell.beg, cell.end, L)]

    def parent(self, cell):
        if cell.level == 0:
            return None
        return self.cell_at(cell.level - 1, cell.beg)

    def is_ancestor(self, a, b):
        """True iff ``a`` is ``b`` or an ancestor of it."""
        return a.level <= b.level and a.beg <= b.beg and b.end <= a.end

    def path_to(self, cell):
        """Cells from the root down to ``cell``."""
        return [self.cell_at(k, cell.beg) for k in range(cell.level + 1)]

    def iter_cells(self):
        stack = [self.root]
        while stack:
            c = stack.pop()
            yield c
            stack.extend(reversed(self.children(c)))

    def cell_count(self):
        return sum(self.K**k for k in range(self.ell_max + 1))

    def to_json(self):
        def node(c):
            d = c.to_dict()
            d["children"] = [node(ch) for ch in self.children(c)]
            return d

        return json.dumps(node(self.root)) + "\n"


def build_grid(T, params):
    return Grid(T, params)


def build_segments(grid, job, T=None):
    """Segments of ``job`` as a list of ``Segment``, left to right."""
    T = grid.T if T is None else T
    if not 0 <= job.release < T:
        raise ValueError(f"release {job.release} outside [0,{T})")
    lm = grid.ell_max
    chain = [grid.cell_at(lm, job.release)]
    while chain[-1].end < T:
        chain.append(grid.cell_at(chain[-1].level - 1, chain[-1].end))
    segs = []
    start = job.release
    for cell in chain:
        step = grid.cell_len(cell.level + 2) if cell.level <= lm - 2 else 1
        for b in range(start, cell.end, step):
            segs.append(Segment(b, b + step, cell))
        start = cell.end
    return segs


def group_by_cell(segments):
    out = {}
    for s in segments:
        out.setdefault(s.cell, []).append(s)
    return out


def _ratio_ok(a, b, K, off_y, literal):
    if a == b == 1:
        return True
    if a == 1 and not literal:
        base = off_y
    else:
        if b % a:
            return False
        base, b = 1, b // a
        if b == 1:
            return False
    if b % base:
        return False
    q = b // base
    while q % K == 0:
        q //= K
    return q == 1


def check_segment_properties(instance, grid, segments=None, literal_ratio=False):
    """Validate the structural segment properties for every job.

    ``segments`` maps job id to its segment list (built if omitted). With
    ``literal_ratio`` the cross-cell length rule is checked as "1 -> 1 or
    times K^i"; otherwise unit segments may also be followed by segments of
    length ``off_y * K^i``, which is what the construction yields when
    ``off_y > 1``.
    """
    T = grid.T
    K = grid.K
    lm = grid.ell_max
    if segments is None:
        segments = {j.id: build_segments(grid, j, T) for j in instance.jobs}
    for job in instance.jobs:
        segs = segments[job.id]
        # (1) partition of [r_j, T)
        if not segs or segs[0].beg != job.release:
            return Report(False, "partition: first segment does not start at r_j", (job.id,))
        for a, b in zip(segs, segs[1:]):
            if a.end != b.beg:
                return Report(False, "partition: gap or overlap", (job.id, a, b))
        if segs[-1].end < T:
            return Report(False, "partition: segments stop before T", (job.id, segs[-1]))
        if any(s.beg >= T and s.cell != segs[-1].cell for s in segs):
            return Report(False, "partition: segments beyond T outside the last cell", (job.id,))
        groups = group_by_cell(segs)
        for cell, ss in groups.items():
            for s in ss:
                # (2) shape of each segment
                if not (cell.beg <= s.beg and s.end <= cell.end):
                    return Report(False, "containment: segment leaves its cell", (job.id, s))
                if cell.level <= lm - 2:
                    L = grid.cell_len(cell.level + 2)
                    if s.length != L or (s.beg - grid.params.off_x) % L:
                        return Report(False, "shape: segment is not a grandchild cell", (job.id, s))
                elif s.length != 1:
                    return Report(False, "shape: deep segment is not unit", (job.id, s))
            # (3) right alignment, count and uniform length
            if ss[-1].end != cell.end:
                return Report(False, "alignment: segments do not end at end(C)", (job.id, cell))
            if len(ss) > K * K:
                return Report(False, "count: more than K^2 segments", (job.id, cell, len(ss)))
            if len({s.length for s in ss}) != 1:
                return Report(False, "length: mixed lengths in one cell", (job.id, cell))
        # (4) length growth across consecutive cells
        cells = list(groups)
        for c1, c2 in zip(cells, cells[1:]):
            a, b = groups[c1][0].length, groups[c2][0].length
            if not _ratio_ok(a, b, K, grid.params.off_y, literal_ratio):
                return Report(False, "growth: length ratio across cells", (job.id, c1, c2, a, b))
    # nesting across jobs, on the part of the timeline that matters
    for j in instance.jobs:
        for j2 in instance.jobs:
            if j is j2 or j.release > j2.release:
                continue
            outer = segments[j.id]
            begs = [s.beg for s in outer]
            for s2 in segments[j2.id]:
                if s2.beg >= T:
                    continue
                k = bisect_right(begs, s2.beg) - 1
                if k < 0 or outer[k].end < s2.end:
                    return Report(False, "nesting: segment not inside an earlier job's segment", (j.id, j2.id, s2))
    return Report(True)


def flow_cell_statistics(instance, epsilon_inv, trials, seed=0, exhaustive=False):
    """Empirical frequency of ``F*_j >= len(C*_j) / (eps K)`` over random offsets.

    With ``exhaustive`` every offset pair is visited once and ``trials`` is ignored.
    Returns ``{"samples": [...], "frequency": {job_id: Fraction}}``.
    """
    T = horizon(instance)
    ys, xs = offsets_domain(epsilon_inv, T)
    if exhaustive:
        pairs = [(x, y) for y in ys for x in xs]
    else:
        rng = random.Random(seed)
        pairs = [(rng.choice(xs), rng.choice(ys)) for _ in range(trials)]
    if not pairs:
        return {"samples": [], "frequency": {}}
    _, sched = opt_schedule(instance)
    done = completion_times(instance, sched)
    K = branching(epsilon_inv)
    samples, hits = [], {j.id: 0 for j in instance.jobs}
    for off_x, off_y in pairs:
        grid = Grid(T, GridParams.make(epsilon_inv, T, off_x, off_y))
        row = {"off_x": off_x, "off_y": off_y, "events": {}}
        for j in instance.jobs:
            F = done[j.id] - j.release
            last = j.release + F - 1
            seg = next(s for s in build_segments(grid, j, T) if s.beg <= last < s.end)
            event = F * K >= seg.cell.length * epsilon_inv
            row["events"][j.id] = event
            hits[j.id] += event
        samples.append(row)
    freq = {jid: Fraction(h, len(pairs)) for jid, h in hits.items()}
    return {"samples": samples, "frequency": freq}
