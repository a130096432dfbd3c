"""Reference computations written independently of the package internals.

They only read raw arrays off instances (kernels, reward tables, reward
parameters) and use plain loops, so an agreement with the package is
evidence rather than tautology.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def glob_reward(kind, params, s, a):
    """Direct transcription of the four closed forms."""
    x = [si * ai for si, ai in zip(s, a)]
    if kind == "linear":
        return sum(m * xi for m, xi in zip(params["m"], x))
    if kind == "probability":
        prod = 1.0
        for m, xi in zip(params["m"], x):
            prod *= 1.0 - m * xi
        return 1.0 - prod
    if kind == "max":
        return max(m * xi for m, xi in zip(params["m"], x))
    if kind == "subset":
        covered = set()
        for y, xi in zip(params["sets"], x):
            if xi:
                covered |= set(y)
        return float(len(covered))
    raise ValueError(kind)


def spec_params(spec):
    if spec.kind == "subset":
        return {"sets": [set(y) for y in spec.sets]}
    return {"m": list(spec.m)}


def combined_reward(inst, s, a):
    g = glob_reward(inst.global_reward.kind, spec_params(inst.global_reward), s, a)
    per = sum(inst.arms[i].per_arm_reward[s[i], a[i]] for i in range(inst.n_arms))
    return (1 - inst.alpha) * g + inst.alpha * per


def shapley_by_permutations(kind, params, i, s_i, n, k_budget):
    """Average gain of ``i`` over orderings where ``i`` lands in the first ``K`` slots.

    Evaluated at the all-engaged completion.
    """
    s = [1] * n
    s[i] = s_i
    total, count = 0.0, 0
    for perm in itertools.permutations(range(n)):
        pos = perm.index(i)
        if pos >= k_budget:
            continue
        before = set(perm[:pos])
        a = [1 if j in before else 0 for j in range(n)]
        b = list(a)
        b[i] = 1
        total += glob_reward(kind, params, s, b) - glob_reward(kind, params, s, a)
        count += 1
    return total / count


def bellman_q(P, R, bonus, w, gamma, iters=10_000):
    """Naive fixed-count Bellman iteration for one arm."""
    S = P.shape[0]
    v = np.zeros(S)
    for _ in range(iters):
        q = np.empty((S, 2))
        for s in range(S):
            for a in range(2):
                q[s, a] = R[s, a] + a * (bonus[s] - w) + gamma * sum(P[s, a, t] * v[t] for t in range(S))
        v = q.max(axis=1)
    return q


def grid_scan_index(P, R, bonus, s, gamma, half_width, fine=1e-4):
    """Smallest grid subsidy at which passivity strictly wins, refined coarse-to-fine."""

    def gaps(grid):
        G, S = grid.size, P.shape[0]
        v = np.zeros((G, S))
        r = np.broadcast_to(R, (G, S, 2)).copy()
        r[:, :, 1] += bonus[None, :] - grid[:, None]
        for _ in range(400):
            q = r + gamma * np.einsum("sat,gt->gsa", P, v)
            v = q.max(axis=2)
        q = r + gamma * np.einsum("sat,gt->gsa", P, v)
        return q[:, s, 1] - q[:, s, 0]

    coarse = np.arange(-half_width, half_width + 1e-2, 1e-2)
    g = gaps(coarse)
    j = int(np.argmax(g < 0))
    lo = coarse[max(j - 1, 0)]
    finer = np.arange(lo, coarse[j] + fine, fine)
    g = gaps(finer)
    return float(finer[int(np.argmax(g < 0))])


def joint_value_iteration(inst, iters=None, tol=1e-11):
    """Dictionary-based joint value iteration over actions with at most ``K`` pulls."""
    n = inst.n_arms
    S = inst.state_count
    states = list(itertools.product(range(S), repeat=n))
    actions = [a for a in itertools.product((0, 1), repeat=n) if sum(a) <= inst.budget]
    P = [arm.transitions for arm in inst.arms]
    trans = {}
    for s in states:
        for a in actions:
            trans[s, a] = [(t, math.prod(P[i][s[i], a[i], t[i]] for i in range(n))) for t in states]
    rew = {(s, a): combined_reward(inst, s, a) for s in states for a in actions}
    V = {s: 0.0 for s in states}
    for _ in range(iters or 100_000):
        newV = {s: max(rew[s, a] + inst.gamma * sum(p * V[t] for t, p in trans[s, a]) for a in actions)
                for s in states}
        diff = max(abs(newV[s] - V[s]) for s in states)
        V = newV
        if iters is None and diff < tol:
            break
    Q = {(s, a): rew[s, a] + inst.gamma * sum(p * V[t] for t, p in trans[s, a])
         for s in states for a in actions}
    return V, Q


def policy_value_finite(inst, policy_fn, T):
    """Expected ``T``-step discounted reward of a deterministic policy from every state."""
    n = inst.n_arms
    states = list(itertools.product(range(inst.state_count), repeat=n))
    acts = {s: tuple(int(x) for x in policy_fn(np.array(s))) for s in states}
    V = {s: 0.0 for s in states}
    for _ in range(T):
        V = {s: combined_reward(inst, s, acts[s]) + inst.gamma * sum(
            math.prod(inst.arms[i].transitions[s[i], acts[s][i], t[i]] for i in range(n)) * V[t]
            for t in states) for s in states}
    return V
