"""Estimator base class shared by every policy.

A policy is fitted on an instance (``fit`` precomputes whatever tables it
needs) and then maps joint states to budget-feasible actions through
``act`` (one state) or ``predict`` (a batch).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..core import check_instance
from ..validation import check_action, check_random_state, check_state, check_states


class BasePolicy(BaseEstimator):
    """Common ``fit`` / ``act`` / ``predict`` plumbing.

    Subclasses implement ``_fit(inst, rng)`` and ``_act(s, rng)``.  ``act``
    validates its input and output so an infeasible action never leaves a
    policy.
    """

    #: True when ``act`` ignores its rng, so exact policy evaluation applies.
    deterministic = True

    def fit(self, inst, y=None, rng=None):
        check_instance(inst)
        self.instance_ = inst
        self._fit(inst, check_random_state(rng if rng is not None else getattr(self, "random_state", None)))
        return self

    def _fit(self, inst, rng):
        pass

    def _check_fitted(self):
        if not hasattr(self, "instance_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted; call fit(instance) first")

    def act(self, s, rng=None) -> np.ndarray:
        self._check_fitted()
        inst = self.instance_
        s = check_state(s, inst.n_arms, inst.state_count)
        a = self._act(s, check_random_state(rng) if rng is not None else self._default_rng())
        return check_action(a, inst.n_arms, inst.budget)

    def predict(self, S, rng=None) -> np.ndarray:
        self._check_fitted()
        S = check_states(S, self.instance_.n_arms, self.instance_.state_count)
        rng = check_random_state(rng) if rng is not None else None
        return np.stack([self.act(s, rng) for s in S])

    def _default_rng(self):
        if not hasattr(self, "_rng"):
            self._rng = check_random_state(getattr(self, "random_state", None))
        return self._rng

    def _act(self, s, rng):
        raise NotImplementedError
