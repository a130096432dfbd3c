"""Instance-dependent approximation-ratio quantities, by enumeration.

All four quantities compare the true combined reward
``R(s, a) = (1 - alpha) R_glob(s, a) + alpha * sum_i R_i(s_i, a_i)`` with
its linearization ``sum_i [alpha R_i(s_i, a_i) + (1 - alpha) b_i(s_i) a_i]``
where ``b`` is ``p`` (linear) or the Shapley value ``u`` (shapley).
Actions range over binary vectors with at most ``K`` pulls.

Ratio conventions: ``0/0`` pairs are skipped; ``x/0`` with ``x > 0`` counts
as ``+inf`` for a max and is left out of a min.
"""

from __future__ import annotations

import numpy as np

from .core import ArmModel, SizeGuardError, enumerate_feasible_actions, enumerate_states
from .reward import marginal_p, shapley_u_exact, total_reward_batch
from .validation import top_k

MAX_BOUND_ARMS = 10
ZERO = 1e-12


class UndefinedBoundError(ValueError):
    pass


def _guard(inst):
    if inst.n_arms > MAX_BOUND_ARMS:
        raise SizeGuardError(f"bound enumeration capped at N={MAX_BOUND_ARMS}, got {inst.n_arms}")


def bonus_table(inst, flavor: str) -> np.ndarray:
    n, S, K = inst.n_arms, inst.state_count, inst.budget
    spec = inst.global_reward
    if flavor == "linear":
        return np.array([[marginal_p(spec, i, s, n) for s in range(S)] for i in range(n)])
    if flavor == "shapley":
        return np.array([[shapley_u_exact(spec, i, s, n, K) for s in range(S)] for i in range(n)])
    raise ValueError(f"flavor must be 'linear' or 'shapley', got {flavor!r}")


def _grid(inst):
    states = enumerate_states(inst.n_arms, inst.state_count)
    actions = enumerate_feasible_actions(inst.n_arms, inst.budget).astype(np.int64)
    S_all = np.repeat(states, len(actions), axis=0)
    A_all = np.tile(actions, (len(states), 1))
    return states, actions, S_all, A_all


def _linearized(inst, bonus, S_all, A_all) -> np.ndarray:
    idx = np.arange(inst.n_arms)
    per = inst.per_arm_rewards[idx, S_all, A_all]
    return (inst.alpha * per + (1.0 - inst.alpha) * bonus[idx, S_all] * A_all).sum(axis=1)


def _ratios(inst, bonus) -> np.ndarray:
    """Finite ratios R / linearized over all (s, a), with +inf for x/0 and 0/0 dropped."""
    _, _, S_all, A_all = _grid(inst)
    num = total_reward_batch(inst, S_all, A_all)
    den = _linearized(inst, bonus, S_all, A_all)
    zero_den = np.abs(den) <= ZERO
    zero_num = np.abs(num) <= ZERO
    keep = ~(zero_den & zero_num)
    ratio = np.where(zero_den, np.inf, num / np.where(zero_den, 1.0, den))
    return ratio[keep]


def _beta_min(inst, bonus) -> tuple[float, float]:
    r = _ratios(inst, bonus)
    finite = r[np.isfinite(r)]
    if finite.size == 0:
        raise UndefinedBoundError("every (state, action) ratio has a zero denominator")
    return float(finite.min()), float(r.max())


def beta_linear(inst) -> float:
    """Smallest ratio of the true reward to its ``p``-linearization."""
    _guard(inst)
    return _beta_min(inst, bonus_table(inst, "linear"))[0]


def beta_shapley(inst, exact_u: np.ndarray | None = None) -> float:
    """Smallest over largest ratio of the true reward to its ``u``-linearization."""
    _guard(inst)
    u = bonus_table(inst, "shapley") if exact_u is None else np.asarray(exact_u, dtype=float)
    lo, hi = _beta_min(inst, u)
    return lo / hi


def linearized_action(inst, s, bonus) -> np.ndarray:
    """Top-``K`` arms by linearized pull gain; ties go to the lower arm id."""
    s = np.asarray(s, dtype=np.int64)
    idx = np.arange(inst.n_arms)
    gain = (inst.alpha * (inst.per_arm_rewards[idx, s, 1] - inst.per_arm_rewards[idx, s, 0])
            + (1.0 - inst.alpha) * bonus[idx, s])
    a = np.zeros(inst.n_arms, dtype=np.int64)
    a[top_k(gain, inst.budget)] = 1
    return a


def _theta(inst, bonus) -> float:
    states, actions, S_all, A_all = _grid(inst)
    best = total_reward_batch(inst, S_all, A_all).reshape(len(states), len(actions)).max(axis=1)
    A_hat = np.stack([linearized_action(inst, s, bonus) for s in states])
    got = total_reward_batch(inst, states, A_hat)
    keep = best > ZERO
    if not keep.any():
        raise UndefinedBoundError("optimal one-step reward is zero in every state")
    return float(np.min(got[keep] / best[keep]))


def theta_linear(inst) -> float:
    """Worst-state ratio of the linearized greedy action's reward to the best one-step reward."""
    _guard(inst)
    return _theta(inst, bonus_table(inst, "linear"))


def theta_shapley(inst, exact_u: np.ndarray | None = None) -> float:
    _guard(inst)
    u = bonus_table(inst, "shapley") if exact_u is None else np.asarray(exact_u, dtype=float)
    return _theta(inst, u)


def theta_argmin_state(inst, flavor: str = "linear") -> np.ndarray:
    """A state attaining the theta minimum (first in enumeration order)."""
    _guard(inst)
    bonus = bonus_table(inst, flavor)
    states, actions, S_all, A_all = _grid(inst)
    best = total_reward_batch(inst, S_all, A_all).reshape(len(states), len(actions)).max(axis=1)
    A_hat = np.stack([linearized_action(inst, s, bonus) for s in states])
    got = total_reward_batch(inst, states, A_hat)
    ratio = np.where(best > ZERO, got / np.where(best > ZERO, best, 1.0), np.inf)
    return states[int(np.argmin(ratio))]


def identity_transition_instance(inst):
    """Same rewards and budget, but every arm keeps its state forever."""
    S = inst.state_count
    P = np.zeros((S, 2, S))
    for s in range(S):
        P[s, :, s] = 1.0
    arms = tuple(ArmModel(P, arm.per_arm_reward) for arm in inst.arms)
    return inst.replace(arms=arms)


def all_bounds(inst) -> dict:
    """Every bound keyed by name; undefined ones map to ``nan``."""
    u = None
    out = {}
    for name, fn in (("beta_linear", beta_linear), ("beta_shapley", beta_shapley),
                     ("theta_linear", theta_linear), ("theta_shapley", theta_shapley)):
        try:
            if name.endswith("shapley"):
                u = bonus_table(inst, "shapley") if u is None else u
                out[name] = fn(inst, u)
            else:
                out[name] = fn(inst)
        except UndefinedBoundError:
            out[name] = float("nan")
    return out
