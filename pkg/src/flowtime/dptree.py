"""Cell tree, root paths, consistent solutions and the exact tree DP.

A root path is identified with its bottom cell. Candidate families map a
bottom cell to a list of frozensets of rectangles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .oracle import Report

PATH = "path"
ALL = "all"


@dataclass
class CellTree:
    grid: object
    root: object
    children: dict
    parent: dict

    @property
    def vertices(self):
        return list(self.parent)

    def __len__(self):
        return len(self.parent)

    def leaves(self):
        return [c for c in self.parent if not self.children[c]]

    def path(self, cell):
        out = [cell]
        while self.parent[out[-1]] is not None:
            out.append(self.parent[out[-1]])
        return out[::-1]

    def postorder(self):
        out, stack = [], [(self.root, False)]
        while stack:
            c, done = stack.pop()
            if done:
                out.append(c)
                continue
            stack.append((c, True))
            for ch in reversed(self.children[c]):
                stack.append((ch, False))
        return out


def build_tree(grid):
    children, parent = {}, {grid.root: None}
    stack = [grid.root]
    while stack:
        c = stack.pop()
        kids = grid.children(c)
        children[c] = kids
        for k in kids:
            parent[k] = c
            stack.append(k)
    return CellTree(grid, grid.root, children, parent)


def path_for_interval(grid, interval):
    """Root-to-leaf cells containing ``t`` of ``interval = (s, t)``."""
    t = interval[1]
    return [grid.cell_at(k, t) for k in range(grid.ell_max + 1)]


class PathIndex:
    """Per-cell rectangle sets and per-path ray buckets for one geometry."""

    def __init__(self, geometry, tree=None):
        self.geometry = geometry
        self.grid = geometry.grid
        self.tree = tree or build_tree(geometry.grid)
        self.cell_rects = {}
        for (job, cell), chain in geometry.chains.items():
            self.cell_rects.setdefault(cell, set()).update(chain)
        self.cell_rects = {c: frozenset(s) for c, s in self.cell_rects.items()}
        self._path_rects = {}
        # deepest level any rectangle of R(I) lives on, per ray
        self.ray_level = {id(r): max((x.cell.level for x in r.rects), default=0) for r in geometry.rays}

    def rects_of_cell(self, cell):
        return self.cell_rects.get(cell, frozenset())

    def path_rects(self, cell):
        """R(Q) for the path ending in ``cell``."""
        got = self._path_rects.get(cell)
        if got is None:
            parent = self.tree.parent[cell]
            base = self.path_rects(parent) if parent is not None else frozenset()
            got = base | self.rects_of_cell(cell)
            self._path_rects[cell] = got
        return got

    def rays_for(self, cell, scope=PATH):
        """Rays ``I`` whose coverage the path ending in ``cell`` must provide."""
        out = []
        for ray in self.geometry.rays:
            if scope == PATH:
                if ray.t in cell and self.ray_level[id(ray)] <= cell.level:
                    out.append(ray)
            elif scope == ALL:
                if ray.rects <= self.path_rects(cell):
                    out.append(ray)
            else:
                raise ValueError(f"unknown ray scope {scope!r}")
        return out


@dataclass
class ConsistentSolution:
    rects: frozenset
    per_path: dict
    choice: dict = field(default_factory=dict)

    @property
    def cost(self):
        return sum(r.cost for r in self.rects)


def _covers(sel, ray):
    return sum(r.cap for r in sel & ray.rects) >= ray.demand


def check_consistent(geometry, sol, families=None, ray_scope=PATH, index=None):
    """Check containment, coverage and path monotonicity, plus family membership."""
    idx = index or PathIndex(geometry)
    tree = idx.tree
    for cell in tree.parent:
        sub = sol.per_path.get(cell)
        if sub is None:
            return Report(False, "missing path subset", cell)
        if not sub <= idx.path_rects(cell):
            return Report(False, "path subset uses rectangles off the path", cell)
        if families is not None and sub not in families.get(cell, ()):
            return Report(False, "path subset not in its candidate family", cell)
        if not sub <= sol.rects:
            return Report(False, "property 1: path subset not inside the global set", cell)
        for ray in idx.rays_for(cell, ray_scope):
            if not _covers(sub, ray):
                return Report(False, "property 2: ray not covered", (ray, cell))
        anc = tree.parent[cell]
        while anc is not None:
            if not (sub & idx.path_rects(anc)) <= sol.per_path[anc]:
                return Report(False, "property 3: path monotonicity", (cell, anc))
            anc = tree.parent[anc]
    return Report(True)


def dp_solve(geometry, families, ray_scope=PATH, index=None):
    """Cheapest consistent solution for ``families``, or ``None`` if there is none.

    Ties are broken towards the smallest candidate index.
    """
    idx = index or PathIndex(geometry)
    tree = idx.tree
    table = {}
    for v in tree.postorder():
        cands = families.get(v, ())
        RQ = idx.path_rects(v)
        kids = tree.children[v]
        rays = idx.rays_for(v, ray_scope) if not kids else ()
        entries = []
        for S in cands:
            if not kids:
                ok = all(_covers(S, ray) for ray in rays)
                entries.append((sum(r.cost for r in S), ()) if ok else None)
                continue
            total = sum(r.cost for r in S)
            picks = []
            for u in kids:
                best = None
                for k, Si in enumerate(families.get(u, ())):
                    ent = table[u][k]
                    if ent is None:
                        continue
                    shared = Si & RQ
                    if not shared <= S:
                        continue
                    extra = ent[0] - sum(r.cost for r in shared)
                    if best is None or extra < best[0]:
                        best = (extra, k)
                if best is None:
                    picks = None
                    break
                total += best[0]
                picks.append(best[1])
            entries.append((total, tuple(picks)) if picks is not None else None)
        table[v] = entries
    root = tree.root
    best = None
    for k, ent in enumerate(table[root]):
        if ent is not None and (best is None or ent[0] < best[0]):
            best = (ent[0], k)
    if best is None:
        return None
    choice = {}
    stack = [(root, best[1])]
    while stack:
        v, k = stack.pop()
        choice[v] = k
        for u, ku in zip(tree.children[v], table[v][k][1]):
            stack.append((u, ku))
    per_path = {v: families[v][k] for v, k in choice.items()}
    rects = frozenset().union(*per_path.values())
    return ConsistentSolution(rects, per_path, choice)


def singleton_families(geometry, rects, index=None):
    """``chi_Q = {rects & R(Q)}`` for every path."""
    idx = index or PathIndex(geometry)
    rects = frozenset(rects)
    return {c: [rects & idx.path_rects(c)] for c in idx.tree.parent}


def bruteforce_consistent(geometry, families, ray_scope=PATH, index=None):
    """Cheapest consistent solution by enumerating family members path by path.

    Branches are cut only when a partial assignment already violates coverage
    or monotonicity, or cannot beat the incumbent cost, so the result equals
    full enumeration. Returns ``(cost, per_path)`` or ``(None, None)``.
    """
    idx = index or PathIndex(geometry)
    tree = idx.tree
    order = list(reversed(tree.postorder()))  # parents before children
    rays = {c: idx.rays_for(c, ray_scope) for c in order}
    best = [None, None]
    chosen = {}

    def rec(i, union):
        cost = sum(r.cost for r in union)
        if best[0] is not None and cost >= best[0]:
            return
        if i == len(order):
            best[0], best[1] = cost, dict(chosen)
            return
        v = order[i]
        for S in families.get(v, ()):
            if not all(_covers(S, ray) for ray in rays[v]):
                continue
            anc, ok = tree.parent[v], True
            while anc is not None:
                if not (S & idx.path_rects(anc)) <= chosen[anc]:
                    ok = False
                    break
                anc = tree.parent[anc]
            if not ok:
                continue
            chosen[v] = S
            rec(i + 1, union | S)
            del chosen[v]

    rec(0, frozenset())
    return best[0], best[1]


def dump_table_json(sol):
    """Debug dump of the chosen candidate index per path."""
    rows = [
        {"level": c.level, "beg": c.beg, "end": c.end, "choice": k}
        for c, k in sorted(sol.choice.items())
    ]
    return json.dumps(rows) + "\n"
