"""Tree search over pull sets.

The policy search builds one arm per tree level: a root-to-leaf path of
length ``K`` is an ordered pick of distinct arms, scored at the leaf by the
one-step reward plus each arm's index-model continuation value.  The vanilla
baseline searches several rounds ahead with sampled transitions instead.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import sample_next_state
from ..reward import total_reward_batch
from ..validation import check_random_state, indicator
from ..whittle import solve_q_batch
from .base import BasePolicy
from .index import build_table


class MctsNode:
    __slots__ = ("arm", "depth", "n", "v", "children")

    def __init__(self, arm: int | None, depth: int):
        self.arm = arm
        self.depth = depth
        self.n = 0
        self.v = 0.0
        self.children: dict[int, MctsNode] = {}

    def child(self, arm: int) -> "MctsNode":
        node = self.children.get(arm)
        if node is None:
            node = self.children[arm] = MctsNode(arm, self.depth + 1)
        return node

    @property
    def mean(self) -> float:
        return self.v / self.n if self.n else -math.inf


def _uct_pick(node: MctsNode, options, c: float, classic: bool) -> int:
    best, best_score = None, -math.inf
    for arm in options:
        ch = node.children[arm]
        bonus = math.log(node.n) if classic else node.n
        score = ch.v / ch.n + c * math.sqrt(bonus / ch.n)
        if score > best_score:
            best, best_score = arm, score
    return best


def continuation_q(inst, table) -> np.ndarray:
    """Per-arm ``Q_{i,0}(s, a)`` at zero subsidy, shape ``(N, S, 2)``."""
    bonus = (1.0 - inst.alpha) * table.bonus
    R = inst.alpha * inst.per_arm_rewards + np.stack([np.zeros_like(bonus), bonus], axis=2)
    return solve_q_batch(inst.transitions, R, inst.gamma)


def leaf_rewards(inst, s, A, q0, bonus) -> np.ndarray:
    """``R(s, a) + sum_i [Q_{i,0}(s_i, a_i) - bonus_i(s_i) a_i - alpha R_i(s_i, a_i)]`` per row of ``A``."""
    A = np.asarray(A, dtype=np.int64)
    n = inst.n_arms
    idx = np.arange(n)
    s = np.asarray(s, dtype=np.int64)
    tail = (q0[idx, s, A] - (1.0 - inst.alpha) * bonus[idx, s] * A
            - inst.alpha * inst.per_arm_rewards[idx, s, A]).sum(axis=1)
    return total_reward_batch(inst, s, A) + tail


def mcts_policy_search(inst, s, index_w, q0, bonus, iterations: int = 400, c: float = 5.0,
                       epsilon: float = 0.1, rng=None, *, classic_uct: bool = False) -> np.ndarray:
    """Search ordered pull sets of size ``K``; return the leaf with the best mean.

    Fully explored nodes pick children by ``v/n + c * sqrt(n_parent / n_child)``
    (``classic_uct`` swaps in ``log n_parent``).  From the first node with an
    unexplored child the path is completed by an epsilon-greedy rollout that
    favours the unexplored child with the largest index ``index_w[i, s_i]``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = check_random_state(rng)
    n, K = inst.n_arms, inst.budget
    s = np.asarray(s, dtype=np.int64)
    w_now = np.asarray(index_w)[np.arange(n), s]
    root = MctsNode(None, 0)
    leaves: dict[frozenset, MctsNode] = {}
    leaf_cache: dict[frozenset, float] = {}
    for _ in range(iterations):
        node, path, picked = root, [root], []
        rolling = False
        while node.depth < K:
            options = [i for i in range(n) if i not in picked]
            unexplored = [i for i in options if i not in node.children or node.children[i].n == 0]
            if unexplored:
                rolling = True
            if rolling:
                if rng.random() < epsilon:
                    arm = unexplored[int(rng.integers(len(unexplored)))]
                else:
                    arm = max(unexplored, key=lambda i: (w_now[i], -i))
            else:
                arm = _uct_pick(node, options, c, classic_uct)
            node = node.child(arm)
            path.append(node)
            picked.append(arm)
        key = frozenset(picked)
        r = leaf_cache.get(key)
        if r is None:
            r = float(leaf_rewards(inst, s, indicator(picked, n)[None], q0, bonus)[0])
            leaf_cache[key] = r
        for nd in path:
            nd.n += 1
            nd.v += r
        leaves.setdefault(key, node)
        if leaves[key] is not node and node.mean > leaves[key].mean:
            leaves[key] = node
    best = max(leaves.items(), key=lambda kv: kv[1].mean)[0]
    return indicator(sorted(best), n)


def vanilla_mcts(inst, s, iterations: int = 400, depth: int | None = None, rng=None, *,
                 c: float = 5.0, classic_uct: bool = False) -> np.ndarray:
    """Multi-round search with uniform rollouts and one sampled successor per visit.

    Every ``K`` picks close a round: its reward ``gamma^t * R(s_t, a_t)`` is
    accrued and the next state is sampled.  Returns the first-round action
    of the best depth-``K`` node.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = check_random_state(rng)
    n, K = inst.n_arms, inst.budget
    depth = 2 * K if depth is None else int(depth)
    if depth < K:
        raise ValueError("depth must be at least K")
    s0 = np.asarray(s, dtype=np.int64)
    root = MctsNode(None, 0)
    first_round: dict[tuple, MctsNode] = {}
    for _ in range(iterations):
        node, path, picked = root, [root], []
        state, total, t = s0, 0.0, 0
        rolling = False
        first_key = None
        while node.depth < depth:
            options = [i for i in range(n) if i not in picked]
            unexplored = [i for i in options if i not in node.children or node.children[i].n == 0]
            if unexplored:
                rolling = True
            if rolling:
                arm = unexplored[int(rng.integers(len(unexplored)))] if unexplored else \
                    options[int(rng.integers(len(options)))]
            else:
                arm = _uct_pick(node, options, c, classic_uct)
            node = node.child(arm)
            path.append(node)
            picked.append(arm)
            if len(picked) == K:
                a = indicator(picked, n)
                total += inst.gamma ** t * float(total_reward_batch(inst, state, a[None])[0])
                if node.depth == K:
                    first_key = tuple(sorted(picked))
                    first_round.setdefault(first_key, node)
                state = sample_next_state(inst, state, a, rng)
                picked, t = [], t + 1
        for nd in path:
            nd.n += 1
            nd.v += total
    best = max(first_round.items(), key=lambda kv: kv[1].mean)[0]
    return indicator(best, n)


class MctsWhittlePolicy(BasePolicy):
    """Tree search over pull sets guided by Linear- or Shapley-Whittle indices."""

    deterministic = False

    def __init__(self, flavor="linear", mcts_iterations=400, mcts_c=5.0, rollout_epsilon=0.1,
                 shapley_samples=1000, exploration="ratio", random_state=None):
        self.flavor = flavor
        self.mcts_iterations = mcts_iterations
        self.mcts_c = mcts_c
        self.rollout_epsilon = rollout_epsilon
        self.shapley_samples = shapley_samples
        self.exploration = exploration
        self.random_state = random_state

    def _fit(self, inst, rng):
        if self.flavor not in ("linear", "shapley"):
            raise ValueError(f"flavor must be 'linear' or 'shapley', got {self.flavor!r}")
        if self.exploration not in ("ratio", "classic"):
            raise ValueError("exploration must be 'ratio' or 'classic'")
        self.table_ = build_table(inst, self.flavor, self.shapley_samples, rng)
        self.q0_ = continuation_q(inst, self.table_)

    def _act(self, s, rng):
        return mcts_policy_search(self.instance_, s, self.table_.w, self.q0_, self.table_.bonus,
                                  self.mcts_iterations, self.mcts_c, self.rollout_epsilon, rng,
                                  classic_uct=self.exploration == "classic")


class VanillaMctsPolicy(BasePolicy):
    """Multi-round tree search with uniform rollouts, depth ``mcts_depth_factor * K``."""

    deterministic = False

    def __init__(self, mcts_iterations=400, mcts_c=5.0, mcts_depth_factor=2, random_state=None):
        self.mcts_iterations = mcts_iterations
        self.mcts_c = mcts_c
        self.mcts_depth_factor = mcts_depth_factor
        self.random_state = random_state

    def _act(self, s, rng):
        K = self.instance_.budget
        return vanilla_mcts(self.instance_, s, self.mcts_iterations, self.mcts_depth_factor * K,
                            rng, c=self.mcts_c)
