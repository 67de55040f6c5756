"""Exact ground truth: brute-force optimal schedules and the time-indexed IP."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from itertools import product

from .instance import horizon

DEFAULT_GUARD = (8, 24)


class OracleTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    """``slots[t]`` is the job id run in ``[t, t+1)`` or ``None`` for idle."""

    slots: tuple

    def to_json(self):
        return json.dumps({"slots": list(self.slots)}) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(tuple(json.loads(text)["slots"]))


@dataclass(frozen=True)
class IpSolution:
    """An IP solution stored by its deadlines: ``x[j,t] = 1`` iff ``r_j <= t < d_j``.

    ``finish`` is a tuple of ``(job_id, d_j)`` pairs sorted by id.
    """

    finish: tuple

    @classmethod
    def from_deadlines(cls, deadlines):
        return cls(tuple(sorted(dict(deadlines).items())))

    def deadlines(self):
        return dict(self.finish)

    def x(self, job, t):
        d = dict(self.finish)[job.id]
        return int(job.release <= t < d)

    @classmethod
    def from_matrix(cls, instance, rows):
        """Build from explicit 0/1 rows ``rows[job_id][t - r_j]`` for ``t = r_j..T``."""
        T = horizon(instance)
        out = {}
        for job in instance.jobs:
            row = list(rows[job.id])
            if len(row) != T - job.release + 1:
                raise ValueError(f"row for job {job.id} must have length {T - job.release + 1}")
            for k in range(1, len(row)):
                if row[k] > row[k - 1]:
                    raise ValueError(f"prefix violation at ({job.id},{job.release + k})")
            out[job.id] = job.release + sum(row)
        return cls.from_deadlines(out)

    def to_matrix(self, instance):
        T = horizon(instance)
        d = self.deadlines()
        return {j.id: [int(t < d[j.id]) for t in range(j.release, T + 1)] for j in instance.jobs}

    def to_json(self, instance):
        d = self.deadlines()
        return json.dumps({"finish": [d[j.id] for j in sorted(instance.jobs, key=lambda j: j.id)]}) + "\n"

    @classmethod
    def from_json(cls, instance, text):
        finish = json.loads(text)["finish"]
        ids = sorted(j.id for j in instance.jobs)
        if len(finish) != len(ids):
            raise ValueError("finish list length does not match the instance")
        return cls.from_deadlines(zip(ids, finish))


@dataclass(frozen=True)
class Report:
    ok: bool
    message: str = ""
    witness: object = None

    def __bool__(self):
        return self.ok


def _guard():
    raw = os.environ.get("FLOWTIME_ORACLE_GUARD")
    if not raw:
        return DEFAULT_GUARD
    try:
        n, T = (int(v) for v in raw.split(","))
    except ValueError:
        raise ValueError("FLOWTIME_ORACLE_GUARD must look like 'n,T'") from None
    return n, T


def opt_schedule(instance, guard=None):
    """Minimum total weighted flow time by memoized search over unit slots."""
    T = horizon(instance)
    max_n, max_T = guard or _guard()
    if instance.n > max_n or T > max_T:
        raise OracleTooLarge("instance too large for oracle")
    jobs = instance.jobs
    rel = [j.release for j in jobs]
    w = [j.weight for j in jobs]
    memo = {}

    def best(t, rem):
        key = (t, rem)
        if key in memo:
            return memo[key][0]
        if not any(rem):
            memo[key] = (0, None)
            return 0
        live = [i for i in range(len(jobs)) if rem[i] and rel[i] <= t]
        if not live:
            memo[key] = (best(t + 1, rem), None)
            return memo[key][0]
        waiting = sum(w[i] for i in live)
        choice, value = None, None
        for i in live:
            nxt = list(rem)
            nxt[i] -= 1
            v = waiting + best(t + 1, tuple(nxt))
            if value is None or v < value:
                choice, value = i, v
        memo[key] = (value, choice)
        return value

    start = tuple(j.proc for j in jobs)
    cost = best(0, start)
    slots, rem = [], start
    for t in range(T):
        if not any(rem):
            slots.extend([None] * (T - t))
            break
        _, i = memo[(t, rem)]
        if i is None:
            slots.append(None)
            continue
        slots.append(jobs[i].id)
        rem = rem[:i] + (rem[i] - 1,) + rem[i + 1:]
    return cost, Schedule(tuple(slots))


def completion_times(instance, schedule):
    """Validate ``schedule`` and return ``{job_id: completion}``."""
    T = horizon(instance)
    if len(schedule.slots) != T:
        raise ValueError(f"schedule must have exactly T={T} slots, got {len(schedule.slots)}")
    counts, last = {}, {}
    for t, jid in enumerate(schedule.slots):
        if jid is None:
            continue
        try:
            job = instance.job(jid)
        except KeyError:
            raise ValueError(f"unknown job id {jid} in slot {t}") from None
        if t < job.release:
            raise ValueError(f"job {jid} runs in slot {t} before its release {job.release}")
        counts[jid] = counts.get(jid, 0) + 1
        last[jid] = t + 1
    for job in instance.jobs:
        if counts.get(job.id, 0) != job.proc:
            raise ValueError(
                f"job {job.id} receives {counts.get(job.id, 0)} slots, needs {job.proc}"
            )
    return last


def schedule_cost(instance, schedule):
    done = completion_times(instance, schedule)
    return sum(j.weight * (done[j.id] - j.release) for j in instance.jobs)


def ip_from_schedule(instance, schedule):
    return IpSolution.from_deadlines(completion_times(instance, schedule))


def ip_cost(instance, x):
    d = x.deadlines()
    return sum(j.weight * max(0, d[j.id] - j.release) for j in instance.jobs)


def ip_check(instance, x):
    """Check every covering constraint with ``s`` in ``{0} | releases`` and ``s <= t <= T``."""
    T = horizon(instance)
    d = x.deadlines()
    for j in instance.jobs:
        if j.id not in d:
            raise ValueError(f"no deadline for job {j.id}")
    starts = sorted({0} | {j.release for j in instance.jobs})
    for s in starts:
        for t in range(s, T + 1):
            inside = [j for j in instance.jobs if s <= j.release <= t]
            rhs = sum(j.proc for j in inside) - (t - s)
            if rhs <= 0:
                continue
            lhs = sum(j.proc for j in inside if d[j.id] > t)
            if lhs < rhs:
                return Report(False, f"constraint ({s},{t}) violated: {lhs} < {rhs}", (s, t))
    return Report(True)


def schedule_from_ip(instance, x):
    """Earliest-deadline-first realization of the deadlines implied by ``x``."""
    T = horizon(instance)
    d = x.deadlines()
    rem = {j.id: j.proc for j in instance.jobs}
    order = {j.id: k for k, j in enumerate(instance.jobs)}
    slots = []
    for t in range(T):
        live = [j for j in instance.jobs if j.release <= t and rem[j.id]]
        if not live:
            slots.append(None)
            continue
        job = min(live, key=lambda j: (d[j.id], order[j.id]))
        rem[job.id] -= 1
        slots.append(job.id)
        if rem[job.id] == 0 and t + 1 > d[job.id]:
            raise RuntimeError(f"IP feasibility witness failed: job {job.id} misses deadline {d[job.id]}")
    return Schedule(tuple(slots))


def all_schedules(instance):
    """Yield every valid schedule (idle slots allowed anywhere). Tiny instances only."""
    T = horizon(instance)
    jobs = instance.jobs

    def rec(t, rem, acc):
        if t == T:
            if not any(rem):
                yield Schedule(tuple(acc))
            return
        if sum(rem) > T - t:
            return
        yield from rec(t + 1, rem, acc + [None])
        for i, j in enumerate(jobs):
            if rem[i] and j.release <= t:
                yield from rec(t + 1, rem[:i] + (rem[i] - 1,) + rem[i + 1:], acc + [j.id])

    yield from rec(0, tuple(j.proc for j in jobs), [])


def min_ip_cost(instance):
    """Minimum IP cost over all feasible deadline vectors, by exhaustive enumeration."""
    T = horizon(instance)
    ranges = [range(j.release + j.proc, T + 2) for j in instance.jobs]
    best = None
    for combo in product(*ranges):
        x = IpSolution.from_deadlines({j.id: d for j, d in zip(instance.jobs, combo)})
        c = ip_cost(instance, x)
        if best is not None and c >= best:
            continue
        if ip_check(instance, x):
            best = c
    return best
