"""Scikit-learn style front end: one fitted schedule per job table."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .instance import Instance, Job
from .oracle import completion_times
from .solver import MODES, solve
from .validation import check_int, check_jobs_array, check_offsets_spec


class FlowTimeScheduler(BaseEstimator):
    """Schedule a table of jobs given as rows ``(release, proc, weight)``.

    ``fit`` solves the instance; ``predict`` returns completion times in row
    order. Like clustering estimators this is transductive: ``predict`` only
    accepts the table seen by ``fit`` (or nothing).
    """

    def __init__(self, epsilon_inv=1, mode="qpoly", offsets=None, seed=0, normalize=False):
        self.epsilon_inv = epsilon_inv
        self.mode = mode
        self.offsets = offsets
        self.seed = seed
        self.normalize = normalize

    def _validate_params(self):
        check_int(self.epsilon_inv, "epsilon_inv", 1)
        check_int(self.seed, "seed")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.offsets is not None:
            check_offsets_spec(self.offsets)

    def fit(self, X, y=None):
        self._validate_params()
        rows = check_jobs_array(X)
        if not rows:
            raise ValueError("need at least one job")
        inst = Instance(tuple(Job(i, r, p, w) for i, (r, p, w) in enumerate(rows)), self.epsilon_inv)
        res = solve(inst, self.mode, self.offsets, self.seed, normalize=self.normalize)
        done = completion_times(inst, res.schedule)
        self.rows_ = np.asarray(rows, dtype=np.int64)
        self.instance_ = inst
        self.schedule_ = res.schedule
        self.cost_ = res.cost
        self.completion_ = np.array([done[i] for i in range(len(rows))], dtype=np.int64)
        self.n_features_in_ = 3
        return self

    def predict(self, X=None):
        check_is_fitted(self, "completion_")
        if X is not None:
            rows = np.asarray(check_jobs_array(X), dtype=np.int64)
            if rows.shape != self.rows_.shape or not np.array_equal(rows, self.rows_):
                raise ValueError("predict only accepts the job table passed to fit")
        return self.completion_.copy()

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()

    def score(self, X=None, y=None):
        """Negative total weighted flow time, so larger is better."""
        check_is_fitted(self, "cost_")
        if X is not None:
            self.predict(X)
        return -self.cost_
