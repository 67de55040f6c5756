"""Shared fixtures and helpers for the test suite."""

from flowtime.dptree import PathIndex
from flowtime.geom import build_geometry, ip2_opt
from flowtime.grid import Grid, GridParams
from flowtime.instance import Instance, gen_random, horizon

FIXTURE_ROWS = [(0, 2, 1), (1, 1, 2)]

# criterion number -> (passed, detail); filled by test_acceptance, printed by conftest
ACCEPTANCE = {}


def fixture_instance(epsilon_inv=1):
    return Instance.from_tuples(FIXTURE_ROWS, epsilon_inv)


def geometry_for(instance, off_x=0, off_y=1):
    T = horizon(instance)
    return build_geometry(instance, Grid(T, GridParams.make(instance.epsilon_inv, T, off_x, off_y)))


def solved(instance, off_x=0, off_y=1):
    """``(geometry, ip2 optimum cost, optimal selection, path index)``."""
    geo = geometry_for(instance, off_x, off_y)
    cost, ref = ip2_opt(geo)
    return geo, cost, ref, PathIndex(geo)


def rect(geo, job, beg):
    """The rectangle of ``job`` whose segment starts at ``beg``."""
    hits = [r for r in geo.rects if r.job == job and r.beg == beg]
    assert len(hits) == 1, hits
    return hits[0]


def corpus(epsilon_inv, count=50):
    """Seeded random instances with 2..5 jobs; T stays at most 15."""
    return [gen_random(seed, 2 + seed % 4, 2, 3, 5, epsilon_inv) for seed in range(count)]


def random_families(geo, index, rng, max_size=3):
    """Up to ``max_size`` candidates per path, built around a feasible selection.

    Each candidate is the path part of the optimum, of the optimum with a
    random chain suffix added, or of a random prefix-closed selection, so
    some combinations are consistent and many are not.
    """
    _, ref = ip2_opt(geo)
    pool = []
    for _ in range(max_size + 1):
        sel = set(ref) if rng.random() < 0.7 else set()
        for chain in geo.chains.values():
            if rng.random() < 0.4:
                sel.update(chain[: rng.randint(0, len(chain))])
        if sel and rng.random() < 0.3:
            sel.discard(rng.choice(sorted(sel, key=lambda r: r.rid)))
        pool.append(frozenset(sel))
    fams = {}
    for cell in index.tree.parent:
        R = index.path_rects(cell)
        k = rng.randint(1, max_size)
        cands = []
        for sel in rng.sample(pool, k):
            c = sel & R
            if c not in cands:
                cands.append(c)
        fams[cell] = cands
    return fams
