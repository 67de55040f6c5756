"""Jobs, instances, preprocessing and random generation."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .validation import check_int


@dataclass(frozen=True)
class Job:
    id: int
    release: int
    proc: int
    weight: int

    def __post_init__(self):
        check_int(self.id, "id", 0)
        check_int(self.release, "release", 0)
        check_int(self.proc, "proc", 1)
        check_int(self.weight, "weight", 1)


def _order_key(job):
    return (job.release, job.id)


@dataclass(frozen=True)
class Instance:
    """A single-machine instance; ``jobs`` is kept sorted by release, then id."""

    jobs: tuple = ()
    epsilon_inv: int = 1
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        check_int(self.epsilon_inv, "epsilon_inv", 1)
        jobs = tuple(sorted(self.jobs, key=_order_key))
        ids = [j.id for j in jobs]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate job ids")
        object.__setattr__(self, "jobs", jobs)
        object.__setattr__(self, "_by_id", {j.id: j for j in jobs})

    @property
    def n(self):
        return len(self.jobs)

    @property
    def epsilon(self):
        return Fraction(1, self.epsilon_inv)

    @property
    def T(self):
        return horizon(self)

    @property
    def P(self):
        procs = [j.proc for j in self.jobs]
        return Fraction(max(procs), min(procs))

    def job(self, job_id):
        return self._by_id[job_id]

    def label(self, job_id):
        """1-based position of the job under the order; its rectangle row."""
        for i, j in enumerate(self.jobs):
            if j.id == job_id:
                return i + 1
        raise KeyError(job_id)

    def labels(self):
        return {j.id: i + 1 for i, j in enumerate(self.jobs)}

    @classmethod
    def from_tuples(cls, rows, epsilon_inv=1):
        """Build from ``(r, p, w)`` triples; ids follow the input order."""
        return cls(tuple(Job(i, r, p, w) for i, (r, p, w) in enumerate(rows)), epsilon_inv)

    def to_dict(self):
        jobs = sorted(self.jobs, key=lambda j: j.id)
        return {
            "epsilon_inv": self.epsilon_inv,
            "jobs": [{"r": j.release, "p": j.proc, "w": j.weight} for j in jobs],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "jobs" not in data:
            raise ValueError("instance JSON needs a 'jobs' list")
        rows = []
        for k, item in enumerate(data["jobs"]):
            try:
                rows.append((item["r"], item["p"], item["w"]))
            except (KeyError, TypeError):
                raise ValueError(f"job {k}: expected keys r, p, w") from None
        return cls.from_tuples(rows, data.get("epsilon_inv", 1))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def horizon(instance):
    """T = max release + total processing."""
    if not instance.jobs:
        raise ValueError("empty instance")
    return max(j.release for j in instance.jobs) + sum(j.proc for j in instance.jobs)


def shift_releases(instance):
    if not instance.jobs:
        return instance
    r0 = min(j.release for j in instance.jobs)
    if r0 == 0:
        return instance
    jobs = tuple(Job(j.id, j.release - r0, j.proc, j.weight) for j in instance.jobs)
    return Instance(jobs, instance.epsilon_inv)


def busy_periods(instance):
    """Split into busy periods; returns ``(offset, part)`` with releases re-shifted.

    A new part starts whenever a job is released no earlier than the time all
    previously released work would be done by a work-conserving schedule.
    """
    parts = []
    cur, cur_end, start = [], None, 0
    for j in instance.jobs:
        if cur and j.release >= cur_end:
            parts.append((start, cur))
            cur = []
        if not cur:
            start = j.release
            cur_end = j.release
        cur.append(j)
        cur_end = max(cur_end, j.release) + j.proc
    if cur:
        parts.append((start, cur))
    out = []
    for off, jobs in parts:
        shifted = tuple(Job(j.id, j.release - off, j.proc, j.weight) for j in jobs)
        out.append((off, Instance(shifted, instance.epsilon_inv)))
    return out


def split_at_idle(instance):
    return [part for _, part in busy_periods(instance)]


def normalize_weights(instance, epsilon=None, dummy_weight=1, target_max=None):
    """Bounded-weight preprocessing.

    Adds a unit dummy job if ``min p > 1``, scales weights so the maximum is
    ``target_max`` (default ``4/eps^2 * n^2 * P``), drops jobs whose scaled
    weight is below ``1/eps`` and rounds the rest up. The dummy is never
    scaled or dropped. Returns ``(instance, dropped_jobs)``.
    """
    if not instance.jobs:
        return instance, []
    eps = Fraction(epsilon) if epsilon is not None else instance.epsilon
    if eps <= 0 or eps > 1:
        raise ValueError("epsilon must lie in (0, 1]")
    jobs = list(instance.jobs)
    dummy = None
    if min(j.proc for j in jobs) > 1:
        dummy = Job(max(j.id for j in jobs) + 1, 0, 1, check_int(dummy_weight, "dummy_weight", 1))
    n = len(jobs) + (dummy is not None)
    pmax = max(j.proc for j in jobs)
    pmin = 1 if dummy else min(j.proc for j in jobs)
    if target_max is None:
        target = 4 / eps**2 * n * n * Fraction(pmax, pmin)
    else:
        target = Fraction(target_max)
    factor = target / max(j.weight for j in jobs)
    kept, dropped = [], []
    for j in jobs:
        w = j.weight * factor
        if w < 1 / eps:
            dropped.append(j)
        else:
            kept.append(Job(j.id, j.release, j.proc, math.ceil(w)))
    if dummy is not None:
        kept.append(dummy)
    if factor == 1 and not dropped and dummy is None:
        return instance, []
    return Instance(tuple(kept), instance.epsilon_inv), dropped


def gen_random(seed, n, pmax, wmax, rmax, epsilon_inv=1):
    n = check_int(n, "n", 1)
    pmax = check_int(pmax, "pmax", 1)
    wmax = check_int(wmax, "wmax", 1)
    rmax = check_int(rmax, "rmax", 0)
    rng = random.Random(seed)
    rows = [(rng.randint(0, rmax), rng.randint(1, pmax), rng.randint(1, wmax)) for _ in range(n)]
    return shift_releases(Instance.from_tuples(rows, epsilon_inv))
