"""Exact joint value iteration and greedy selection over the exact Q."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import SizeGuardError, enumerate_feasible_actions, enumerate_states
from ..reward import total_reward_batch
from ..whittle import ConvergenceError
from .base import BasePolicy

DEFAULT_MAX_ARMS = 4
HARD_MAX_ARMS = 12
MAX_TABLE_ENTRIES = 50_000_000
DENSE_LIMIT = 5_000_000
JOINT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class JointValueFunction:
    """``V[state_index]`` and ``Q[state_index, action_index]`` over the full joint space."""

    V: np.ndarray
    Q: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    gamma: float
    state_count: int
    budget: int

    def __post_init__(self):
        object.__setattr__(self, "_action_pos",
                           {tuple(int(x) for x in a): j for j, a in enumerate(self.actions)})

    def state_index(self, s) -> int:
        idx = 0
        for v in s:
            idx = idx * self.state_count + int(v)
        return idx

    def value(self, s) -> float:
        return float(self.V[self.state_index(s)])

    def q(self, s, a) -> float:
        return float(self.Q[self.state_index(s), self._action_pos[tuple(int(x) for x in a)]])

    def best_action(self, s) -> np.ndarray:
        """Maximizer of ``Q(s, .)``; ties go to the first action in lexicographic order."""
        return self.actions[int(np.argmax(self.Q[self.state_index(s)]))].astype(np.int64)


def _expected_next(inst, actions, V_flat, dense):
    """``E[V(s') | s, a]`` for every (state, action), shape ``(S^N, |A|)``."""
    n, S = inst.n_arms, inst.state_count
    if dense is not None:
        return (dense @ V_flat).reshape(len(actions), -1).T
    out = np.empty((S ** n, len(actions)))
    for j, a in enumerate(actions):
        W = V_flat.reshape((S,) * n)
        for arm in range(n):
            M = inst.transitions[arm, :, a[arm], :]
            W = np.moveaxis(np.tensordot(M, W, axes=([1], [arm])), 0, arm)
        out[:, j] = W.reshape(-1)
    return out


def _dense_transitions(inst, actions):
    blocks = []
    for a in actions:
        T = np.ones((1, 1))
        for arm in range(inst.n_arms):
            T = np.kron(T, inst.transitions[arm, :, a[arm], :])
        blocks.append(T)
    return np.concatenate(blocks, axis=0)


def solve_optimal(inst, *, max_arms: int = DEFAULT_MAX_ARMS, tol: float = JOINT_TOL,
                  max_iter: int = 100_000) -> JointValueFunction:
    """Joint value iteration over all states and all actions with at most ``K`` pulls."""
    n, S = inst.n_arms, inst.state_count
    cap = min(int(max_arms), HARD_MAX_ARMS)
    if n > cap:
        raise SizeGuardError(f"N={n} exceeds the exact-solver cap of {cap} arms")
    states = enumerate_states(n, S)
    actions = enumerate_feasible_actions(n, inst.budget).astype(np.int64)
    n_s, n_a = len(states), len(actions)
    if n_s * n_a > MAX_TABLE_ENTRIES:
        raise SizeGuardError(f"Q table of {n_s} x {n_a} entries exceeds the memory guard")
    R = np.empty((n_s, n_a))
    for j, a in enumerate(actions):
        R[:, j] = total_reward_batch(inst, states, np.broadcast_to(a, states.shape))
    dense = _dense_transitions(inst, actions) if n_a * n_s * n_s <= DENSE_LIMIT else None
    V = np.zeros(n_s)
    for _ in range(int(max_iter)):
        Q = R + inst.gamma * _expected_next(inst, actions, V, dense)
        V_new = Q.max(axis=1)
        residual = float(np.max(np.abs(V_new - V)))
        V = V_new
        if residual <= tol:
            Q = R + inst.gamma * _expected_next(inst, actions, V, dense)
            return JointValueFunction(Q.max(axis=1), Q, states, actions, inst.gamma, S, inst.budget)
    raise ConvergenceError("joint value iteration did not converge", residual)


def greedy_over_q(vf: JointValueFunction, s) -> np.ndarray:
    """``K`` rounds, each adding the arm whose inclusion maximizes ``Q(s, .)``.

    Ties go to the lower arm id.
    """
    n = vf.states.shape[1]
    a = np.zeros(n, dtype=np.int64)
    row = vf.Q[vf.state_index(s)]
    for _ in range(vf.budget):
        best, best_q = None, -math.inf
        for i in range(n):
            if a[i]:
                continue
            a[i] = 1
            q = row[vf._action_pos[tuple(a.tolist())]]
            a[i] = 0
            if q > best_q:
                best, best_q = i, q
        a[best] = 1
    return a


class OptimalPolicy(BasePolicy):
    """Act greedily with respect to the exact joint Q-function."""

    def __init__(self, max_arms=DEFAULT_MAX_ARMS):
        self.max_arms = max_arms

    def _fit(self, inst, rng):
        self.value_function_ = solve_optimal(inst, max_arms=self.max_arms)

    def _act(self, s, rng):
        return self.value_function_.best_action(s)


class GreedyOverQPolicy(BasePolicy):
    """Build the pull set arm by arm against the exact joint Q-function."""

    def __init__(self, max_arms=DEFAULT_MAX_ARMS):
        self.max_arms = max_arms

    def _fit(self, inst, rng):
        self.value_function_ = solve_optimal(inst, max_arms=self.max_arms)

    def _act(self, s, rng):
        return greedy_over_q(self.value_function_, s)
