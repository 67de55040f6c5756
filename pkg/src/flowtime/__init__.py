"""Approximation pipeline for preemptive weighted flow time on one machine."""

from .estimator import FlowTimeScheduler
from .instance import Instance, Job, gen_random, horizon
from .oracle import Schedule, opt_schedule, schedule_cost
from .solver import solve

__all__ = [
    "FlowTimeScheduler",
    "Instance",
    "Job",
    "Schedule",
    "gen_random",
    "horizon",
    "opt_schedule",
    "schedule_cost",
    "solve",
]
__version__ = "0.1.0"
