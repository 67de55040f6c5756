import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowtime.instance import (Instance, Job, busy_periods, gen_random, horizon, normalize_weights,
                               shift_releases, split_at_idle)
from flowtime.oracle import opt_schedule


def inst(*rows, eps_inv=1):
    return Instance.from_tuples(rows, eps_inv)


def rp(*pairs):
    """Unit-weight instance from ``(r, p)`` pairs."""
    return Instance.from_tuples([(r, p, 1) for r, p in pairs])


# ---------------------------------------------------------------- horizon


@pytest.mark.parametrize("rows, T", [
    ([(0, 2, 1), (1, 1, 2)], 4),
    ([(0, 1, 1)], 1),
    ([(5, 3, 1), (0, 2, 1)], 10),
])
def test_horizon_examples(rows, T):
    assert horizon(inst(*rows)) == T


def test_horizon_empty():
    with pytest.raises(ValueError, match="empty instance"):
        horizon(Instance())


# ---------------------------------------------------------------- shifting


@pytest.mark.parametrize("before, after", [
    ([3, 4], [0, 1]),
    ([0, 1], [0, 1]),
    ([7, 7, 9], [0, 0, 2]),
])
def test_shift_releases(before, after):
    out = shift_releases(rp(*[(r, 1) for r in before]))
    assert sorted(j.release for j in out.jobs) == after


def test_shift_identity_returns_same_object():
    x = rp((0, 1), (1, 1))
    assert shift_releases(x) is x


# ---------------------------------------------------------------- splitting


def _part_jobs(parts):
    return [sorted((j.release, j.proc) for j in p.jobs) for p in parts]


def test_split_far_apart():
    parts = split_at_idle(rp((0, 1), (10, 1)))
    assert _part_jobs(parts) == [[(0, 1)], [(0, 1)]]


def test_split_overlapping_stays_whole():
    assert len(split_at_idle(rp((0, 2), (1, 1)))) == 1


def test_split_three_jobs():
    parts = busy_periods(rp((0, 3), (2, 1), (8, 2)))
    assert [off for off, _ in parts] == [0, 8]
    assert _part_jobs([p for _, p in parts]) == [[(0, 3), (2, 1)], [(0, 2)]]


def test_split_back_to_back_jobs_share_a_period():
    # the second job starts exactly when the first completes; the third is released mid-way
    parts = split_at_idle(rp((0, 1), (2, 3), (4, 1)))
    assert _part_jobs(parts) == [[(0, 1)], [(0, 3), (2, 1)]]


def _assert_split_optimal(x):
    total = sum(opt_schedule(p)[0] for p in split_at_idle(x))
    assert total == opt_schedule(x)[0]


def test_split_preserves_optimum_exhaustive():
    # every multiset of up to three jobs with r <= 6 and p <= 3; weights vary by position
    options = [(r, p) for r in range(7) for p in range(1, 4)]
    for n in (1, 2, 3):
        for combo in itertools.combinations_with_replacement(options, n):
            rows = [(r, p, k + 1) for k, (r, p) in enumerate(combo)]
            _assert_split_optimal(shift_releases(Instance.from_tuples(rows)))


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(1, 3), st.integers(1, 3)), min_size=1, max_size=5))
def test_split_preserves_optimum_property(rows):
    _assert_split_optimal(shift_releases(Instance.from_tuples(rows)))


# ---------------------------------------------------------------- weights


def test_normalize_identity():
    x = inst((0, 1, 4))  # 4/eps^2 * n^2 * P = 4 at eps = 1
    out, dropped = normalize_weights(x)
    assert out is x and dropped == []


def test_normalize_scales_uniformly():
    out, dropped = normalize_weights(inst((0, 1, 1), (0, 1, 2)), target_max=8)
    assert sorted(j.weight for j in out.jobs) == [4, 8]
    assert dropped == []


def test_normalize_drops_light_jobs():
    x = inst((0, 1, 1), (0, 1, 1000), eps_inv=2)
    out, dropped = normalize_weights(x)
    # target 4/(1/4) * 2^2 * 1 = 64, so job 0 scales to 0.064 < 2
    assert [j.id for j in dropped] == [0]
    assert [(j.id, j.weight) for j in out.jobs] == [(1, 64)]


def test_normalize_adds_dummy_when_min_proc_exceeds_one():
    out, _ = normalize_weights(inst((0, 2, 1), (1, 3, 1)))
    dummy = out.job(2)
    assert (dummy.release, dummy.proc, dummy.weight) == (0, 1, 1)
    # n = 3 with the dummy, P = 3 / 1
    assert max(j.weight for j in out.jobs if j.id != 2) == 4 * 9 * 3


def test_normalize_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        normalize_weights(inst((0, 1, 1)), epsilon=Fraction(3, 2))


# ---------------------------------------------------------------- generation


def test_gen_singleton_ranges():
    x = gen_random(1, 1, 1, 1, 0)
    assert [(j.release, j.proc, j.weight) for j in x.jobs] == [(0, 1, 1)]


def test_gen_deterministic_bytes():
    assert gen_random(7, 3, 3, 3, 3).to_json() == gen_random(7, 3, 3, 3, 3).to_json()


def test_gen_seeds_differ():
    differ = sum(gen_random(s, 3, 3, 3, 3).to_json() != gen_random(s + 1, 3, 3, 3, 3).to_json()
                 for s in range(100))
    assert differ >= 95


@pytest.mark.parametrize("args", [(1, 0, 1, 1, 1), (1, 2, 0, 1, 1), (1, 2, 1, 0, 1), (1, 2, 1, 1, -1)])
def test_gen_invalid_bounds(args):
    with pytest.raises(ValueError):
        gen_random(*args)


@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 4), st.integers(1, 4), st.integers(0, 8))
def test_gen_ranges(seed, n, pmax, wmax, rmax):
    x = gen_random(seed, n, pmax, wmax, rmax)
    assert x.n == n and min(j.release for j in x.jobs) == 0
    assert all(1 <= j.proc <= pmax and 1 <= j.weight <= wmax and j.release <= rmax for j in x.jobs)


# ---------------------------------------------------------------- model


def test_job_invariants():
    with pytest.raises(ValueError):
        Job(0, 0, 0, 1)
    with pytest.raises(ValueError):
        Job(0, 0, 1, 0)
    with pytest.raises(ValueError):
        Job(0, -1, 1, 1)
    with pytest.raises(TypeError):
        Job(0, 0, 1.5, 1)


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        Instance((Job(0, 0, 1, 1), Job(0, 1, 1, 1)))


def test_order_and_labels():
    x = Instance.from_tuples([(2, 1, 1), (0, 1, 1), (2, 1, 1), (0, 3, 1)])
    assert [j.id for j in x.jobs] == [1, 3, 0, 2]
    assert x.labels() == {1: 1, 3: 2, 0: 3, 2: 4}
    assert x.label(2) == 4
    assert x.P == 3


def test_json_format():
    x = inst((0, 2, 1), (1, 1, 2))
    assert json.loads(x.to_json()) == {"epsilon_inv": 1, "jobs": [{"p": 2, "r": 0, "w": 1}, {"p": 1, "r": 1, "w": 2}]}


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(1, 9), st.integers(1, 9)), min_size=1, max_size=6),
       st.integers(1, 3))
def test_json_round_trip(rows, eps_inv):
    x = Instance.from_tuples(rows, eps_inv)
    text = x.to_json()
    y = Instance.from_json(text)
    assert y == x and y.to_json() == text
    assert [j.id for j in y.jobs] == [j.id for j in x.jobs]


def test_json_bad_keys():
    with pytest.raises(ValueError, match="r, p, w"):
        Instance.from_json('{"jobs": [{"release": 0, "p": 1, "w": 1}]}')


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(1, 5)), min_size=1, max_size=6))
def test_horizon_bounds(pairs):
    x = rp(*pairs)
    T = horizon(x)
    assert T >= sum(p for _, p in pairs)
    assert T >= max(r for r, _ in pairs) + min(p for _, p in pairs)
