"""Random, greedy, index-table and iterative-index policies."""

from __future__ import annotations

import numpy as np

from ..reward import marginal_p
from ..validation import check_random_state, indicator, top_k
from ..whittle import (IndexTable, iterative_indices, linear_whittle_table,
                       shapley_whittle_table, vanilla_whittle_table)
from .base import BasePolicy


def choose_random(inst, s, rng) -> np.ndarray:
    """Uniform subset of exactly ``K`` arms."""
    rng = check_random_state(rng)
    return indicator(rng.choice(inst.n_arms, size=inst.budget, replace=False), inst.n_arms)


def p_table(inst) -> np.ndarray:
    return np.array([[marginal_p(inst.global_reward, i, s, inst.n_arms)
                      for s in range(inst.state_count)] for i in range(inst.n_arms)])


def choose_greedy(inst, s, p) -> np.ndarray:
    """Top-``K`` arms by ``p_i(s_i)``; ties go to the lower arm id."""
    s = np.asarray(s)
    return indicator(top_k(p[np.arange(inst.n_arms), s], inst.budget), inst.n_arms)


def choose_by_index(inst, s, table: IndexTable, *, allow_fewer: bool = False) -> np.ndarray:
    """Top-``K`` arms by ``table.w[i, s_i]``.

    With ``allow_fewer`` only arms with a strictly positive index are pulled.
    """
    s = np.asarray(s)
    w = table.w[np.arange(inst.n_arms), s]
    chosen = top_k(w, inst.budget)
    if allow_fewer:
        chosen = chosen[w[chosen] > 0]
    return indicator(chosen, inst.n_arms)


def choose_iterative(inst, s, flavor: str, table: IndexTable, rng=None, *,
                     n_samples: int = 1000, cache: dict | None = None) -> np.ndarray:
    """Pick ``K`` arms one at a time, each maximizing the index conditioned on earlier picks.

    ``cache`` memoizes indices by ``(arm, s_i, one-step bonus)``; the
    continuation part of the index depends on nothing else.
    """
    rng = check_random_state(rng)
    s = np.asarray(s, dtype=np.int64)
    n = inst.n_arms
    chosen: list[int] = []
    for _ in range(inst.budget):
        cand = [i for i in range(n) if i not in chosen]
        vals = _iterative_round(inst, s, chosen, cand, flavor, table, rng, n_samples, cache)
        best = max(range(len(cand)), key=lambda j: (vals[j], -cand[j]))
        chosen.append(cand[best])
    return indicator(chosen, n)


def _iterative_round(inst, s, chosen, cand, flavor, table, rng, n_samples, cache):
    from ..whittle import immediate_bonus, whittle_indices_batch

    r = np.array([immediate_bonus(inst, i, s, chosen, flavor, n_samples, rng) for i in cand])
    keys = [(i, int(s[i]), float(ri)) for i, ri in zip(cand, r)]
    out = np.empty(len(cand))
    todo = [j for j, k in enumerate(keys) if cache is None or k not in cache]
    for j, k in enumerate(keys):
        if j not in todo:
            out[j] = cache[k]
    if todo:
        arms = np.array([cand[j] for j in todo])
        offset = (1.0 - inst.alpha) * (r[todo] - table.bonus[arms, s[arms]])
        vals = whittle_indices_batch(inst.transitions[arms], inst.alpha * inst.per_arm_rewards[arms],
                                     (1.0 - inst.alpha) * table.bonus[arms], s[arms], inst.gamma,
                                     offset=offset)
        for j, v in zip(todo, vals):
            out[j] = v
            if cache is not None:
                cache[keys[j]] = float(v)
    return out


class RandomPolicy(BasePolicy):
    """Pull a uniformly random set of ``K`` arms each round."""

    deterministic = False

    def __init__(self, random_state=None):
        self.random_state = random_state

    def _act(self, s, rng):
        return choose_random(self.instance_, s, rng)


class GreedyPolicy(BasePolicy):
    """Pull the ``K`` arms with the largest optimistic marginal ``p_i(s_i)``."""

    def _fit(self, inst, rng):
        self.p_ = p_table(inst)

    def _act(self, s, rng):
        return choose_greedy(self.instance_, s, self.p_)


class IndexPolicy(BasePolicy):
    """Pull the top-``K`` arms of a precomputed index table.

    ``flavor`` selects the bonus: ``vanilla`` (none), ``linear`` (``p_i``)
    or ``shapley`` (``u_i``, estimated from ``shapley_samples`` draws).
    """

    def __init__(self, flavor="linear", shapley_samples=1000, allow_fewer=False, random_state=None):
        self.flavor = flavor
        self.shapley_samples = shapley_samples
        self.allow_fewer = allow_fewer
        self.random_state = random_state

    def _fit(self, inst, rng):
        self.table_ = build_table(inst, self.flavor, self.shapley_samples, rng)

    def _act(self, s, rng):
        return choose_by_index(self.instance_, s, self.table_, allow_fewer=self.allow_fewer)


class IterativeWhittlePolicy(BasePolicy):
    """Pick arms one by one, re-scoring the rest given what is already chosen."""

    def __init__(self, flavor="linear", shapley_samples=1000, random_state=None):
        self.flavor = flavor
        self.shapley_samples = shapley_samples
        self.random_state = random_state

    @property
    def deterministic(self):
        return self.flavor == "linear"

    def _fit(self, inst, rng):
        if self.flavor not in ("linear", "shapley"):
            raise ValueError(f"flavor must be 'linear' or 'shapley', got {self.flavor!r}")
        self.table_ = build_table(inst, self.flavor, self.shapley_samples, rng)
        self.cache_ = {}

    def _act(self, s, rng):
        return choose_iterative(self.instance_, s, self.flavor, self.table_, rng,
                                n_samples=self.shapley_samples, cache=self.cache_)


def build_table(inst, flavor: str, shapley_samples: int, rng) -> IndexTable:
    if flavor == "vanilla":
        return vanilla_whittle_table(inst)
    if flavor == "linear":
        return linear_whittle_table(inst)
    if flavor == "shapley":
        return shapley_whittle_table(inst, shapley_samples, rng)
    raise ValueError(f"unknown flavor {flavor!r}")


__all__ = ["choose_random", "choose_greedy", "choose_by_index", "choose_iterative",
           "RandomPolicy", "GreedyPolicy", "IndexPolicy", "IterativeWhittlePolicy",
           "build_table", "p_table", "iterative_indices"]
