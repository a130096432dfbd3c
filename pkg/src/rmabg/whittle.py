"""Subsidized single-arm Q-values and Whittle-style indices.

For one arm with kernel ``P[s, a, s']``, reward table ``R[s, a]`` and a pull
bonus ``b[s]`` the subsidized Q-function at subsidy ``w`` is

    Q_w(s, a) = -a w + R(s, a) + a b(s) + gamma * sum_s' P[s, a, s'] V_w(s')

with ``V_w = max_a Q_w``.  The index of state ``s`` is the smallest ``w`` at
which passivity wins, located by bisection on ``Q_w(s, 1) - Q_w(s, 0)``.
Bisection runs on a batch of problems at once: each step solves every
problem exactly by policy iteration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .reward import marginal_p, shapley_u, shapley_u_exact
from .validation import check_random_state

VI_TOL = 1e-9
VI_MAX_ITER = 100_000
TOL_W = 1e-4
MAX_BISECTIONS = 64
FLAVORS = ("vanilla", "linear", "shapley")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class NonIndexableError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SubsidizedQ:
    q: np.ndarray
    w: float
    bonus: np.ndarray

    @property
    def v(self) -> np.ndarray:
        return self.q.max(axis=1)


def value_iteration_subsidized(arm, bonus, w: float, gamma: float, tol: float = VI_TOL,
                               max_iter: int = VI_MAX_ITER, *, reward_scale: float = 1.0) -> SubsidizedQ:
    """Plain Bellman iteration to sup-norm ``tol``; raises ``ConvergenceError`` on budget exhaustion."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    P = arm.transitions
    bonus = np.asarray(bonus, dtype=float)
    r = reward_scale * arm.per_arm_reward + np.outer(bonus, [0.0, 1.0]) - np.array([0.0, w])
    v = np.zeros(P.shape[0])
    residual = math.inf
    for _ in range(int(max_iter)):
        q = r + gamma * P @ v
        v_new = q.max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= tol:
            return SubsidizedQ(r + gamma * P @ v, float(w), bonus)
    raise ConvergenceError(f"value iteration did not converge in {max_iter} iterations", residual)


def solve_q_batch(P: np.ndarray, R: np.ndarray, gamma: float) -> np.ndarray:
    """Exact Q-values for a batch of two-action MDPs by policy iteration.

    ``P`` has shape ``(B, S, 2, S)`` and ``R`` shape ``(B, S, 2)``.
    """
    B, S = R.shape[:2]
    bi = np.arange(B)[:, None]
    si = np.arange(S)[None, :]
    eye = np.eye(S)
    pi = R.argmax(axis=2)
    for _ in range(1000):
        P_pi = P[bi, si, pi]
        r_pi = R[bi, si, pi]
        v = np.linalg.solve(eye - gamma * P_pi, r_pi[..., None])[..., 0]
        q = R + gamma * np.einsum("bsat,bt->bsa", P, v)
        # Keep the incumbent action unless the other is strictly better; avoids cycling on ties.
        other = 1 - pi
        better = q[bi, si, other] > q[bi, si, pi] + 1e-12 * (1.0 + np.abs(q[bi, si, pi]))
        if not better.any():
            return q
        pi = np.where(better, other, pi)
    raise ConvergenceError("policy iteration did not stabilize", math.nan)


def _bracket(R: np.ndarray, bonus: np.ndarray, offset: np.ndarray, gamma: float) -> np.ndarray:
    rmax = np.abs(R).reshape(R.shape[0], -1).max(axis=1)
    bmax = np.abs(bonus).max(axis=1) + np.abs(offset)
    return (2.0 * rmax + bmax) / (1.0 - gamma) + 1.0


def whittle_indices_batch(P, R, bonus, states, gamma: float, *, offset=None,
                          tol_w: float = TOL_W) -> np.ndarray:
    """Bisection indices for a batch of (arm, state) problems.

    ``offset`` shifts the pull value at the root state only, which is how
    the iterative indices inject a one-step bonus that differs from the
    continuation bonus.
    """
    P = np.asarray(P, dtype=float)
    R = np.asarray(R, dtype=float)
    bonus = np.asarray(bonus, dtype=float)
    states = np.asarray(states, dtype=np.int64)
    n = P.shape[0]
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    rows = np.arange(n)
    base = R + np.stack([np.zeros_like(bonus), bonus], axis=2)

    def gap(w):
        q = solve_q_batch(P, base - np.stack([np.zeros_like(bonus), np.broadcast_to(w[:, None], bonus.shape)], axis=2), gamma)
        return q[rows, states, 1] - q[rows, states, 0] + offset

    half = _bracket(R, bonus, offset, gamma)
    lo, hi = -half, half.copy()
    g_lo, g_hi = gap(lo), gap(hi)
    bad = (g_lo <= 0) | (g_hi >= 0)
    if bad.any():
        j = int(np.nonzero(bad)[0][0])
        raise NonIndexableError(
            f"problem {j}: no sign change on [{lo[j]:.4g}, {hi[j]:.4g}] "
            f"(gap {g_lo[j]:.4g} .. {g_hi[j]:.4g})")
    for _ in range(MAX_BISECTIONS):
        if np.all(hi - lo <= tol_w):
            break
        mid = 0.5 * (lo + hi)
        pull = gap(mid) >= 0
        lo = np.where(pull, mid, lo)
        hi = np.where(pull, hi, mid)
    return 0.5 * (lo + hi)


def whittle_index(arm, bonus, s: int, gamma: float, tol_w: float = TOL_W, *,
                  reward_scale: float = 1.0, offset: float = 0.0) -> float:
    """Index of state ``s`` for one arm; raises ``NonIndexableError`` if the bracket fails."""
    P = arm.transitions[None]
    R = reward_scale * arm.per_arm_reward[None]
    b = np.asarray(bonus, dtype=float)[None]
    return float(whittle_indices_batch(P, R, b, [s], gamma, offset=[offset], tol_w=tol_w)[0])


def subsidy_gap_curve(arm, bonus, gamma: float, grid, *, reward_scale: float = 1.0) -> np.ndarray:
    """``Q_w(s, 1) - Q_w(s, 0)`` for every ``w`` in ``grid``; shape ``(len(grid), S)``."""
    grid = np.asarray(grid, dtype=float)
    G, S = grid.size, arm.state_count
    P = np.broadcast_to(arm.transitions, (G,) + arm.transitions.shape)
    bonus = np.asarray(bonus, dtype=float)
    R = reward_scale * arm.per_arm_reward + np.outer(bonus, [0.0, 1.0])
    R = R[None] - grid[:, None, None] * np.array([0.0, 1.0])
    q = solve_q_batch(P, R, gamma)
    return q[:, :, 1] - q[:, :, 0]


def indexability_violations(arm, bonus, gamma: float, grid, *, reward_scale: float = 1.0) -> list:
    """States whose subsidy gap increases somewhere on ``grid`` (empirical check, never raises)."""
    curve = subsidy_gap_curve(arm, bonus, gamma, grid, reward_scale=reward_scale)
    rises = np.diff(curve, axis=0) > 1e-9
    return [int(s) for s in np.nonzero(rises.any(axis=0))[0]]


# --- index tables ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IndexTable:
    """Per-arm, per-state indices ``w[i, s]`` plus the bonus they were built from."""

    w: np.ndarray
    flavor: str
    bonus: np.ndarray | None = None
    u_stderr: np.ndarray | None = None

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if not np.all(np.isfinite(self.w)):
            raise ValueError("index table has non-finite entries")

    def to_dict(self) -> dict:
        out = {"flavor": self.flavor, "w": np.asarray(self.w).tolist()}
        if self.u_stderr is not None:
            out["u_stderr"] = np.asarray(self.u_stderr).tolist()
        if self.bonus is not None:
            out["bonus"] = np.asarray(self.bonus).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "IndexTable":
        def arr(key):
            return None if data.get(key) is None else np.array(data[key], dtype=float)
        return cls(np.array(data["w"], dtype=float), data["flavor"], arr("bonus"), arr("u_stderr"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "IndexTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def cached_table(cache_dir, inst, flavor: str, build):
    """Load ``<hash>-<flavor>.json`` from ``cache_dir`` or build and store it."""
    from .core import content_hash

    path = Path(cache_dir) / f"{content_hash(inst)}-{flavor}.json"
    if path.exists():
        return IndexTable.load(path)
    table = build()
    path.parent.mkdir(parents=True, exist_ok=True)
    table.save(path)
    return table


def _table_from_bonus(inst, bonus: np.ndarray, flavor: str, u_stderr=None) -> IndexTable:
    n, S = inst.n_arms, inst.state_count
    P = np.repeat(inst.transitions, S, axis=0)
    R = np.repeat(inst.alpha * inst.per_arm_rewards, S, axis=0)
    b = np.repeat((1.0 - inst.alpha) * bonus, S, axis=0)
    states = np.tile(np.arange(S), n)
    w = whittle_indices_batch(P, R, b, states, inst.gamma).reshape(n, S)
    return IndexTable(w, flavor, bonus=np.asarray(bonus, dtype=float), u_stderr=u_stderr)


def vanilla_whittle_table(inst) -> IndexTable:
    """Indices of the per-arm rewards alone (global reward ignored)."""
    return _table_from_bonus(inst, np.zeros((inst.n_arms, inst.state_count)), "vanilla")


def linear_whittle_table(inst, marginals=None) -> IndexTable:
    """Indices with the optimistic marginal ``p_i(s_i)`` as pull bonus."""
    if marginals is None:
        p = np.array([[marginal_p(inst.global_reward, i, s, inst.n_arms)
                       for s in range(inst.state_count)] for i in range(inst.n_arms)])
    else:
        p = marginals.p
    return _table_from_bonus(inst, p, "linear")


def shapley_whittle_table(inst, n_samples: int = 1000, rng=None, *, exact: bool = False) -> IndexTable:
    """Indices with the Shapley value ``u_i(s_i)`` as pull bonus."""
    n, S, K = inst.n_arms, inst.state_count, inst.budget
    spec = inst.global_reward
    u = np.zeros((n, S))
    se = np.zeros((n, S))
    rng = check_random_state(rng)
    for i in range(n):
        for s in range(S):
            if exact:
                u[i, s] = shapley_u_exact(spec, i, s, n, K)
            else:
                u[i, s], se[i, s] = shapley_u(spec, i, s, n, K, n_samples, rng)
    return _table_from_bonus(inst, u, "shapley", u_stderr=se)


# --- iterative indices -------------------------------------------------------------

def immediate_bonus(inst, i: int, s, X, flavor: str, n_samples: int = 1000, rng=None) -> float:
    """One-step pull value of arm ``i`` given the already-chosen arms ``X``.

    Linear: ``R_glob(s, e_i | X) - R_glob(s, X)`` at the current state.
    Shapley: the Shapley value restricted to pull sets containing ``X``.
    """
    spec = inst.global_reward
    n = inst.n_arms
    X = sorted(int(x) for x in X)
    if i in X:
        raise ValueError(f"arm {i} already chosen")
    if len(X) >= inst.budget:
        raise ValueError("chosen set already fills the budget")
    s = np.asarray(s, dtype=np.int64)
    if flavor == "linear":
        a = np.zeros((2, n), dtype=np.int64)
        a[:, X] = 1
        a[1, i] = 1
        r = spec.evaluate_batch(s, a)
        return float(r[1] - r[0])
    if flavor == "shapley":
        if n_samples is None:
            return shapley_u_exact(spec, i, int(s[i]), n, inst.budget, given=X)
        return shapley_u(spec, i, int(s[i]), n, inst.budget, n_samples, rng, given=X)[0]
    raise ValueError(f"flavor must be 'linear' or 'shapley', got {flavor!r}")


def iterative_indices(inst, s, X, flavor: str, table: IndexTable, arms, *,
                      n_samples: int = 1000, rng=None) -> np.ndarray:
    """Iterative indices for ``arms`` given chosen set ``X``, solved as one batch.

    The root state's pull bonus becomes the conditioned one-step value while
    continuation values keep the table's unconditioned bonus, so only the
    root gap moves by ``(1 - alpha) * (r - bonus(s_i))``.
    """
    rng = check_random_state(rng)
    arms = np.asarray(list(arms), dtype=np.int64)
    s = np.asarray(s, dtype=np.int64)
    r = np.array([immediate_bonus(inst, int(i), s, X, flavor, n_samples, rng) for i in arms])
    base = table.bonus[arms, s[arms]]
    offset = (1.0 - inst.alpha) * (r - base)
    return whittle_indices_batch(inst.transitions[arms], inst.alpha * inst.per_arm_rewards[arms],
                                 (1.0 - inst.alpha) * table.bonus[arms], s[arms], inst.gamma,
                                 offset=offset)


def iterative_index(inst, i: int, s, X, flavor: str, n_samples: int = 1000, rng=None,
                    table: IndexTable | None = None) -> float:
    if table is None:
        table = linear_whittle_table(inst) if flavor == "linear" else \
            shapley_whittle_table(inst, n_samples, rng)
    return float(iterative_indices(inst, s, X, flavor, table, [i], n_samples=n_samples, rng=rng)[0])
