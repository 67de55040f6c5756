import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowtime.dptree import ALL, PathIndex, check_consistent
from flowtime.geom import ip2_check, ip2_to_ip
from flowtime.grid import Cell, offsets_domain
from flowtime.instance import Instance, gen_random, horizon
from flowtime.oracle import ip_check, schedule_cost, schedule_from_ip
from flowtime.qpoly import (RectType, budgets_from_solution, build_qpoly_solution, chain_types,
                            check_greedy_dominance, density_exp, density_of, greedy_select, ledger_groups,
                            ledger_to_json, type_of)

from _support import corpus, fixture_instance, geometry_for, rect, solved

ROOT4 = Cell(2, 0, 4)


@pytest.mark.parametrize("cost, cap, eps, k", [
    (1, 2, 1, -1),
    (5, 5, 1, 0),
    (3, 1, 1, 1),
    (4, 1, 1, 2),
    (9, 4, Fraction(1, 2), 2),
    (1, 100, Fraction(1, 2), -12),
])
def test_density_exp(cost, cap, eps, k):
    assert density_exp(cost, cap, eps) == k
    b = 1 + Fraction(eps)
    assert b**k <= Fraction(cost, cap) < b ** (k + 1)


def test_density_needs_positive_inputs():
    with pytest.raises(ValueError):
        density_exp(0, 1, 1)
    with pytest.raises(ValueError):
        density_exp(1, 0, 1)


@given(st.integers(1, 10**6), st.integers(1, 10**4), st.integers(1, 4))
def test_density_exp_brackets(cost, cap, eps_inv):
    eps = Fraction(1, eps_inv)
    k = density_exp(cost, cap, eps)
    assert (1 + eps) ** k <= Fraction(cost, cap) < (1 + eps) ** (k + 1)


# ---------------------------------------------------------------- types


def test_type_fixture_chain():
    geo = geometry_for(fixture_instance())
    chain = geo.chains[(0, ROOT4)]
    assert [r.cost for r in chain] == [3, 1] and {r.cap for r in chain} == {2}
    assert type_of(chain, 1) == RectType(0, -1, 2)
    assert density_of(chain[1], 1) == -1


def test_type_single_and_empty():
    geo = geometry_for(fixture_instance())
    assert type_of(geo.chains[(1, Cell(4, 1, 2))], 1) == RectType(1, None, 1)
    assert type_of([], 1) == RectType(None, None, 0)
    assert RectType(0, -1, 2) == RectType(0, -1, 2)
    assert RectType(1, None, 1).to_dict() == {"rhoExp": 1, "rho2Exp": "inf", "s": 1}


def test_type_window():
    # rho' within rho / (K^2 (1+eps)) and (1+eps) K^2 rho for every chain with two rects
    for eps_inv in (1, 2):
        for x in corpus(eps_inv, 10):
            T = horizon(x)
            ys, xs = offsets_domain(eps_inv, T)
            for ox in xs[:: max(1, len(xs) // 4)]:
                geo = geometry_for(x, ox, ys[-1])
                b, K = 1 + x.epsilon, geo.grid.K
                for tau in chain_types(geo).values():
                    if tau.rho2 is not None:
                        assert b**tau.rho / (K * K * b) <= b**tau.rho2 <= b * K * K * b**tau.rho


# ---------------------------------------------------------------- ledgers


def test_ledger_fixture():
    geo, cost, ref, idx = solved(fixture_instance())
    led = budgets_from_solution(geo, ref)
    assert led == {
        (Cell(4, 0, 1), RectType(-1, None, 1), 1): 1,
        (Cell(3, 0, 2), RectType(0, None, 1), 1): 2,
        (ROOT4, RectType(0, -1, 2), 1): 3,
        (Cell(4, 1, 2), RectType(1, None, 1), 1): 2,
    }
    assert sum(led.values()) == cost


def test_ledger_empty():
    geo = geometry_for(fixture_instance())
    assert budgets_from_solution(geo, frozenset()) == {}


def test_ledger_json():
    geo, _, ref, _ = solved(fixture_instance())
    rows = json.loads(ledger_to_json(budgets_from_solution(geo, ref)))
    assert rows[0] == {"cell": {"level": 2, "beg": 0, "end": 4}, "type": {"rhoExp": 0, "rho2Exp": -1, "s": 2},
                       "sPrime": 1, "budget": 3}
    assert [r["budget"] for r in rows] == [3, 2, 1, 2]


@given(st.integers(0, 10**6), st.data())
def test_ledger_partitions_cost(seed, data):
    x = gen_random(seed, data.draw(st.integers(1, 5)), 3, 3, 4)
    geo, cost, ref, _ = solved(x, data.draw(st.sampled_from(offsets_domain(1, horizon(x))[1])))
    assert sum(budgets_from_solution(geo, ref).values()) == cost


# ---------------------------------------------------------------- GreedySelect


def test_greedy_zero_budgets():
    geo = geometry_for(fixture_instance())
    res = greedy_select(geo, ROOT4, RectType(0, -1, 2), {1: 0, 2: 0})
    assert res.selection == frozenset()


def test_greedy_fixture_single_job():
    geo = geometry_for(fixture_instance())
    res = greedy_select(geo, ROOT4, RectType(0, -1, 2), {1: 3})
    assert res.selection == {rect(geo, 0, 2)}
    assert res.fractional_spend == {2: 0, 1: 3}
    assert sum(r.cost for r in res.selection) <= 3 * 3


def test_greedy_two_identical_jobs():
    x = Instance.from_tuples([(0, 2, 1), (0, 2, 1)])
    geo = geometry_for(x)
    tau = chain_types(geo)[(0, ROOT4)]
    assert tau == chain_types(geo)[(1, ROOT4)]
    c = geo.chains[(0, ROOT4)][0].cost
    res = greedy_select(geo, ROOT4, tau, {1: c}, debug=True)
    # the phase may spend (1+eps) c = 2c, enough to saturate both first rectangles
    assert res.fractional_spend[1] == 2 * c
    assert res.selection == {geo.chains[(0, ROOT4)][0], geo.chains[(1, ROOT4)][0]}
    assert sum(r.cost for r in res.selection) <= 3 * c


def test_greedy_partial_fraction_rounds_up():
    x = Instance.from_tuples([(0, 2, 1), (0, 2, 1), (0, 2, 1)])
    geo = geometry_for(x)
    C = Cell(3, 0, 4)  # T = 6 here, so the grid is one level deeper
    tau = chain_types(geo)[(0, C)]
    c = geo.chains[(0, C)][0].cost
    res = greedy_select(geo, C, tau, {1: Fraction(5 * c, 4)}, debug=True)
    # 2.5c after the (1+eps) slack: two jobs saturate, the third is half bought and rounded up
    fr = sorted(v[1] for v in res.x.values())
    assert fr == [Fraction(1, 2), 1, 1]
    assert len(res.selection) == 3


def test_greedy_skips_jobs_over_budget():
    x = Instance.from_tuples([(0, 2, 1), (0, 2, 1)])
    geo = geometry_for(x)
    tau = chain_types(geo)[(0, ROOT4)]
    c = geo.chains[(0, ROOT4)][0].cost
    assert greedy_select(geo, ROOT4, tau, {1: Fraction(c, 2)}).selection == frozenset()


def test_greedy_job_filter():
    x = Instance.from_tuples([(0, 2, 1), (0, 2, 1)])
    geo = geometry_for(x)
    tau = chain_types(geo)[(0, ROOT4)]
    res = greedy_select(geo, ROOT4, tau, {1: None}, job_filter=lambda j: j == 0)
    assert res.selection == {geo.chains[(0, ROOT4)][0]}


def test_dominance_with_own_ledger():
    geo, _, ref, _ = solved(fixture_instance())
    for (C, tau), B in ledger_groups(budgets_from_solution(geo, ref)).items():
        assert check_greedy_dominance(geo, C, tau, B, ref)
        assert check_greedy_dominance(geo, C, tau, {k: 2 * v for k, v in B.items()}, ref)


def test_dominance_precondition():
    geo, _, ref, _ = solved(fixture_instance())
    rep = check_greedy_dominance(geo, ROOT4, RectType(0, -1, 2), {1: 2}, ref)
    assert not rep and rep.message.startswith("precondition")


@given(st.integers(0, 10**6), st.integers(1, 2), st.data())
def test_greedy_dominance_property(seed, eps_inv, data):
    x = gen_random(seed, data.draw(st.integers(1, 5)), 3, 3, 4, eps_inv)
    ys, xs = offsets_domain(eps_inv, horizon(x))
    geo, _, ref, _ = solved(x, data.draw(st.sampled_from(xs)), data.draw(st.sampled_from(ys)))
    types = chain_types(geo)
    for (C, tau), B in ledger_groups(budgets_from_solution(geo, ref, types)).items():
        out = greedy_select(geo, C, tau, B, types=types, debug=True).selection
        assert check_greedy_dominance(geo, C, tau, B, ref, types, output=out)
        assert sum(r.cost for r in out) <= (2 + x.epsilon) * sum(B.values())


# ---------------------------------------------------------------- construction


def test_qpoly_fixture_golden():
    geo, cost, ref, idx = solved(fixture_instance())
    sol, fams = build_qpoly_solution(geo, budgets_from_solution(geo, ref), reference=ref, index=idx)
    assert sol.cost == 8 <= 3 * cost
    assert sol.rects == ref
    assert check_consistent(geo, sol, fams, ray_scope=ALL, index=idx)


def test_qpoly_empty_ledger_without_rays():
    geo = geometry_for(Instance.from_tuples([(0, 1, 1)]))
    geo.rays = []
    sol, fams = build_qpoly_solution(geo, {})
    assert sol.rects == frozenset() and all(f == [frozenset()] for f in fams.values())


def test_qpoly_to_schedule():
    x = gen_random(9, 4, 3, 3, 3)
    geo, cost, ref, idx = solved(x, -3)
    sol, _ = build_qpoly_solution(geo, budgets_from_solution(geo, ref), reference=ref, index=idx)
    assert ip2_check(geo, sol.rects)
    ip = ip2_to_ip(x, sol.rects)
    assert ip_check(x, ip)
    assert schedule_cost(x, schedule_from_ip(x, ip)) <= sol.cost <= 3 * cost
