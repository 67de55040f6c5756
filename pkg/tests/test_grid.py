import json
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowtime.grid import (Cell, Grid, GridParams, Segment, branching, build_grid, build_segments,
                           check_segment_properties, flow_cell_statistics, group_by_cell, max_level,
                           offsets_domain)
from flowtime.instance import Instance, Job, gen_random, horizon

from _support import fixture_instance


def grid(eps_inv, T, off_x=0, off_y=1):
    return build_grid(T, GridParams.make(eps_inv, T, off_x, off_y))


def segs(g, r):
    return [(s.beg, s.end, s.cell.level, s.cell.beg, s.cell.end) for s in build_segments(g, Job(0, r, 1, 1))]


# ---------------------------------------------------------------- domains


def test_offsets_eps1_T4():
    ys, xs = offsets_domain(1, 4)
    assert ys == [1] and xs == list(range(-7, 1))
    assert branching(1) == 2 and max_level(1, 4) == 4


def test_offsets_eps_half_T1():
    ys, xs = offsets_domain(2, 1)
    assert branching(2) == 16 and max_level(2, 1) == 2
    assert ys == [1, 4] and xs == list(range(-15, 1))


def test_offsets_eps1_T1():
    ys, xs = offsets_domain(1, 1)
    assert max_level(1, 1) == 2 and xs == [-1, 0]


def test_params_out_of_domain():
    with pytest.raises(ValueError):
        GridParams.make(1, 4, off_x=1)
    with pytest.raises(ValueError):
        GridParams.make(1, 4, off_x=-8)
    with pytest.raises(ValueError):
        GridParams.make(2, 4, off_y=2)
    with pytest.raises(ValueError):
        Grid(4, replace(GridParams.make(1, 4), K=3))


# ---------------------------------------------------------------- cells


def test_grid_root_and_leaves():
    g = grid(1, 4)
    assert g.root == Cell(0, 0, 16)
    assert g.cell_at(4, 3) == Cell(4, 3, 4)


def test_grid_shifted_root():
    g = grid(1, 4, off_x=-7)
    assert g.root == Cell(0, -7, 9)
    assert all(t in g.root for t in range(4))


def test_cell_count():
    g = grid(1, 4)
    cells = list(g.iter_cells())
    assert len(cells) == g.cell_count() == sum(2**k for k in range(5)) == 31
    g2 = grid(2, 3)
    assert g2.cell_count() == 1 + 16 + 256 + 4096


def test_grid_json():
    g = grid(1, 1)
    tree = json.loads(g.to_json())
    assert tree["level"] == 0 and len(tree["children"]) == 2
    assert tree["children"][0]["children"][0] == {"level": 2, "beg": 0, "end": 1, "children": []}


def test_cell_at_rejects_outside():
    g = grid(1, 4)
    with pytest.raises(ValueError):
        g.cell_at(2, 16)
    with pytest.raises(ValueError):
        g.cell_at(5, 0)


def test_parent_and_path():
    g = grid(1, 4, off_x=-3)
    c = g.cell_at(4, 2)
    path = g.path_to(c)
    assert path[0] == g.root and path[-1] == c
    assert all(g.parent(b) == a for a, b in zip(path, path[1:]))
    assert g.parent(g.root) is None
    assert g.is_ancestor(g.root, c) and not g.is_ancestor(c, g.root)


@given(st.integers(1, 2), st.integers(1, 40), st.data())
def test_cells_tile(eps_inv, T, data):
    ys, xs = offsets_domain(eps_inv, T)
    g = grid(eps_inv, T, data.draw(st.sampled_from(xs)), data.draw(st.sampled_from(ys)))
    level = data.draw(st.integers(0, g.ell_max - 1))
    c = g.cell_at(level, data.draw(st.integers(0, T - 1)))
    assert c.length == g.params.off_y * g.K ** (g.ell_max - level)
    kids = g.children(c)
    assert len(kids) == g.K
    assert kids[0].beg == c.beg and kids[-1].end == c.end
    assert all(a.end == b.beg for a, b in zip(kids, kids[1:]))
    assert g.root.beg <= 0 and T <= g.root.end


# ---------------------------------------------------------------- segments


def test_segments_job_at_zero():
    assert segs(grid(1, 4), 0) == [
        (0, 1, 4, 0, 1),
        (1, 2, 3, 0, 2),
        (2, 3, 2, 0, 4), (3, 4, 2, 0, 4),
    ]


def test_segments_job_at_one():
    assert segs(grid(1, 4), 1) == [
        (1, 2, 4, 1, 2),
        (2, 3, 3, 2, 4), (3, 4, 3, 2, 4),
    ]


def test_segments_first_is_unit():
    g = grid(2, 10, off_x=-5, off_y=4)
    for r in range(10):
        first = build_segments(g, Job(0, r, 1, 1))[0]
        assert first.beg == r and first.length == 1


def test_segments_release_outside():
    with pytest.raises(ValueError):
        build_segments(grid(1, 4), Job(0, 4, 1, 1))


def test_segments_beyond_T_stay_in_last_cell():
    g = grid(2, 5, off_x=-3)
    out = build_segments(g, Job(0, 0, 1, 1))
    assert out[-1].end > 5
    assert {s.cell for s in out if s.beg >= 5} == {out[-1].cell}


# ---------------------------------------------------------------- properties


def test_fixture_properties_pass():
    x = fixture_instance()
    assert check_segment_properties(x, grid(1, 4))


def test_fixture_nesting():
    g = grid(1, 4)
    s1 = build_segments(g, Job(0, 0, 2, 1))
    s2 = build_segments(g, Job(1, 1, 1, 2))
    two = next(s for s in s2 if s.beg == 2)
    assert any(a.beg <= two.beg and two.end <= a.end for a in s1)


def test_perturbed_segments_fail_partition():
    x = fixture_instance()
    g = grid(1, 4)
    segments = {j.id: build_segments(g, j) for j in x.jobs}
    s = segments[0][1]
    segments[0][1] = Segment(s.beg + 1, s.end + 1, s.cell)
    rep = check_segment_properties(x, g, segments)
    assert not rep and rep.message.startswith("partition")


def test_merged_segment_detected():
    x = fixture_instance()
    g = grid(1, 4)
    segments = {j.id: build_segments(g, j) for j in x.jobs}
    a, b = segments[0][2], segments[0][3]
    segments[0][2:4] = [Segment(a.beg, b.end, a.cell)]
    rep = check_segment_properties(x, g, segments)
    assert not rep and rep.message.startswith("shape")


def test_literal_length_rule_counterexample():
    # off_y = 4: unit segments in the two deepest chain cells, then length-4 segments,
    # a factor of 4 that is not a power of K = 16
    x = Instance.from_tuples([(0, 100, 1)], 2)
    g = grid(2, horizon(x), 0, 4)
    lengths = [s.length for s in build_segments(g, x.jobs[0])]
    assert lengths[:64] == [1] * 64 and set(lengths[64:]) == {4}
    assert check_segment_properties(x, g)
    rep = check_segment_properties(x, g, literal_ratio=True)
    assert not rep and rep.message.startswith("growth")


def test_literal_rule_holds_when_off_y_is_one():
    x = Instance.from_tuples([(0, 100, 1)], 2)
    g = grid(2, horizon(x), 0, 1)
    assert check_segment_properties(x, g, literal_ratio=True)


@st.composite
def instance_and_grid(draw):
    eps_inv = draw(st.integers(1, 2))
    seed = draw(st.integers(0, 10**6))
    x = gen_random(seed, draw(st.integers(1, 5)), 3, 3, draw(st.integers(0, 8)), eps_inv)
    T = horizon(x)
    ys, xs = offsets_domain(eps_inv, T)
    return x, grid(eps_inv, T, draw(st.sampled_from(xs)), draw(st.sampled_from(ys)))


@given(instance_and_grid())
def test_segment_invariants(case):
    x, g = case
    assert check_segment_properties(x, g)
    for j in x.jobs:
        ss = build_segments(g, j)
        assert ss[0].beg == j.release
        assert all(a.end == b.beg for a, b in zip(ss, ss[1:]))
        assert all(a.length <= b.length for a, b in zip(ss, ss[1:]))
        assert all(isinstance(s.beg, int) and isinstance(s.end, int) for s in ss)
        for cell, group in group_by_cell(ss).items():
            assert len(group) <= g.K**2


# ---------------------------------------------------------------- statistics


def test_flow_stats_single_job():
    x = Instance.from_tuples([(0, 1, 1)])
    out = flow_cell_statistics(x, 1, 0, exhaustive=True)
    assert len(out["samples"]) == 2
    assert 0 <= out["frequency"][0] <= 1


def test_flow_stats_deterministic():
    x = fixture_instance()
    assert flow_cell_statistics(x, 1, 10, seed=3) == flow_cell_statistics(x, 1, 10, seed=3)


def test_flow_stats_no_trials():
    assert flow_cell_statistics(fixture_instance(), 1, 0) == {"samples": [], "frequency": {}}
