"""Global reward families, combined reward, marginal rewards and Shapley values.

Four closed-form families are supported (``linear``, ``probability``, ``max``,
``subset``) plus an explicit ``table`` for small hand-built functions.  Every
family is evaluated through :meth:`GlobalRewardSpec.evaluate_batch`, which
takes a state (or a batch of states) and a batch of binary action rows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .validation import check_random_state

KINDS = ("linear", "probability", "max", "subset", "table")
MONOTONE_KINDS = ("linear", "probability", "max", "subset")
MAX_EXACT_ARMS = 12


class RewardSpecError(ValueError):
    pass


class MissingTableEntry(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class GlobalRewardSpec:
    """Tagged union over the global reward families.

    ``m`` holds per-arm magnitudes (linear / probability / max), ``sets`` the
    per-arm item sets ``Y_i`` over ``{1..universe}`` (subset), and ``table``
    maps ``(state tuple, action tuple)`` to a reward (table).
    """

    kind: str
    m: tuple[float, ...] | None = None
    sets: tuple[frozenset, ...] | None = None
    universe: int | None = None
    table: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RewardSpecError(f"unknown reward kind {self.kind!r}")
        expected = {
            "linear": {"m"}, "probability": {"m"}, "max": {"m"},
            "subset": {"sets", "universe"}, "table": {"table"},
        }[self.kind]
        present = {name for name in ("m", "sets", "universe", "table")
                   if getattr(self, name) is not None}
        if present != expected:
            raise RewardSpecError(
                f"{self.kind} reward needs fields {sorted(expected)}, got {sorted(present)}")
        if self.m is not None:
            object.__setattr__(self, "m", tuple(float(x) for x in self.m))
            if self.kind == "probability" and any(not 0.0 <= x <= 1.0 for x in self.m):
                raise RewardSpecError("probability reward requires every m_i in [0, 1]")
        if self.sets is not None:
            sets = tuple(frozenset(int(x) for x in y) for y in self.sets)
            object.__setattr__(self, "sets", sets)
            for i, y in enumerate(sets):
                if any(not 1 <= x <= self.universe for x in y):
                    raise RewardSpecError(f"set Y_{i} has items outside 1..{self.universe}")
        if self.table is not None:
            table = {(tuple(int(v) for v in s), tuple(int(v) for v in a)): float(r)
                     for (s, a), r in self.table.items()}
            object.__setattr__(self, "table", table)
            if len({len(s) for s, _ in table} | {len(a) for _, a in table}) > 1:
                raise RewardSpecError("table entries disagree on the number of arms")

    @property
    def n_arms(self) -> int:
        if self.m is not None:
            return len(self.m)
        if self.sets is not None:
            return len(self.sets)
        return len(next(iter(self.table))[0]) if self.table else 0

    @property
    def is_monotone_family(self) -> bool:
        return self.kind in MONOTONE_KINDS

    @property
    def table_state_count(self) -> int:
        return max(2, 1 + max((max(s) for s, _ in self.table), default=1))

    def _m_array(self) -> np.ndarray:
        cached = self.__dict__.get("_m_cache")
        if cached is None:
            cached = np.array(self.m, dtype=float)
            object.__setattr__(self, "_m_cache", cached)
        return cached

    def _membership(self) -> np.ndarray:
        cached = self.__dict__.get("_membership_cache")
        if cached is None:
            cached = np.zeros((len(self.sets), self.universe), dtype=np.int64)
            for i, y in enumerate(self.sets):
                for x in y:
                    cached[i, x - 1] = 1
            object.__setattr__(self, "_membership_cache", cached)
        return cached

    def evaluate(self, s, a) -> float:
        return float(self.evaluate_batch(s, np.asarray(a)[None, :])[0])

    def evaluate_batch(self, S, A) -> np.ndarray:
        """Rewards for action rows ``A`` (B, N) at states ``S`` ((N,) or (B, N))."""
        A = np.asarray(A)
        S = np.asarray(S)
        if self.kind == "table":
            S_b = np.broadcast_to(S, A.shape)
            out = np.empty(A.shape[0])
            for b in range(A.shape[0]):
                key = (tuple(int(v) for v in S_b[b]), tuple(int(v) for v in A[b]))
                try:
                    out[b] = self.table[key]
                except KeyError:
                    raise MissingTableEntry(f"no table entry for s={key[0]}, a={key[1]}") from None
            return out
        x = S * A
        if self.kind == "linear":
            return x @ self._m_array()
        if self.kind == "probability":
            return 1.0 - np.prod(1.0 - self._m_array() * x, axis=-1)
        if self.kind == "max":
            return np.max(self._m_array() * x, axis=-1)
        covered = ((x > 0).astype(np.int64) @ self._membership()) > 0
        return covered.sum(axis=-1).astype(float)


def linear_reward(m) -> GlobalRewardSpec:
    return GlobalRewardSpec("linear", m=tuple(m))


def probability_reward(m) -> GlobalRewardSpec:
    return GlobalRewardSpec("probability", m=tuple(m))


def max_reward(m) -> GlobalRewardSpec:
    return GlobalRewardSpec("max", m=tuple(m))


def subset_reward(sets, universe: int | None = None) -> GlobalRewardSpec:
    sets = tuple(frozenset(y) for y in sets)
    if universe is None:
        universe = max((max(y) for y in sets if y), default=1)
    return GlobalRewardSpec("subset", sets=sets, universe=int(universe))


def table_reward(entries: dict) -> GlobalRewardSpec:
    return GlobalRewardSpec("table", table=dict(entries))


def global_reward(spec: GlobalRewardSpec, s, a) -> float:
    return spec.evaluate(s, a)


def total_reward(inst, s, a) -> float:
    """``(1 - alpha) * R_glob(s, a) + alpha * sum_i R_i(s_i, a_i)``."""
    return float(total_reward_batch(inst, s, np.asarray(a)[None, :])[0])


def total_reward_batch(inst, S, A) -> np.ndarray:
    A = np.asarray(A, dtype=np.int64)
    S = np.broadcast_to(np.asarray(S, dtype=np.int64), A.shape)
    glob = inst.global_reward.evaluate_batch(S, A)
    per = inst.per_arm_rewards[np.arange(inst.n_arms), S, A].sum(axis=-1)
    return (1.0 - inst.alpha) * glob + inst.alpha * per


# --- marginal rewards and Shapley values --------------------------------------

def _completions(spec: GlobalRewardSpec, i: int, s_i: int, n: int) -> np.ndarray:
    """States ``s'`` with ``s'_i = s_i`` over which the max / min is taken.

    The monotone families only need the all-engaged completion: it maximizes
    ``R_glob(s', e_i)`` and, by submodularity, minimizes every marginal gain.
    """
    if spec.is_monotone_family:
        s = np.ones((1, n), dtype=np.int64)
        s[0, i] = s_i
        return s
    if n > MAX_EXACT_ARMS:
        raise RewardSpecError(f"table completion enumeration capped at N={MAX_EXACT_ARMS}")
    values = range(spec.table_state_count)
    rows = [c for c in itertools.product(values, repeat=n) if c[i] == s_i]
    return np.array(rows, dtype=np.int64)


def marginal_p(spec: GlobalRewardSpec, i: int, s_i: int, n: int | None = None) -> float:
    """Optimistic marginal ``p_i(s_i) = max_{s' : s'_i = s_i} R_glob(s', e_i)``."""
    n = spec.n_arms if n is None else n
    e_i = np.zeros((1, n), dtype=np.int64)
    e_i[0, i] = 1
    return float(max(spec.evaluate_batch(c, e_i)[0] for c in _completions(spec, i, s_i, n)))


def _size_log_weights(n: int, pool: int, k_max: int) -> np.ndarray:
    """Log mass of each pull-set size: C(pool, k) * k! * (n - k - 1)!."""
    ks = np.arange(k_max + 1)
    return np.array([math.lgamma(pool + 1) - math.lgamma(pool - k + 1) + math.lgamma(n - k)
                     for k in ks])


def _pool_and_cap(i: int, n: int, k_budget: int, given: Sequence[int]):
    given = sorted(set(int(g) for g in given))
    if i in given:
        raise ValueError(f"arm {i} is already in the conditioning set")
    pool = [j for j in range(n) if j != i and j not in given]
    k_max = min(k_budget - 1 - len(given), len(pool))
    if k_max < 0:
        raise ValueError("conditioning set already exhausts the budget")
    return given, pool, k_max


def shapley_u_exact(spec: GlobalRewardSpec, i: int, s_i: int, n: int, k_budget: int,
                    *, given: Sequence[int] = (), renormalize: bool = True) -> float:
    """Budget-restricted Shapley value by full enumeration.

    Pull sets exclude ``i`` (and ``given``) and have size at most
    ``k_budget - 1 - |given|``.  Each set of size ``k`` is weighted by
    ``k! (n - k - 1)! / (n! / (n - K)!)``; with ``renormalize`` the weights are
    rescaled to sum to one, otherwise the raw weighted sum is returned.
    """
    if n > MAX_EXACT_ARMS:
        raise RewardSpecError(f"exact Shapley enumeration capped at N={MAX_EXACT_ARMS}")
    given, pool, k_max = _pool_and_cap(i, n, k_budget, given)
    rows, weights = [], []
    log_denom = math.lgamma(n + 1) - math.lgamma(max(n - k_budget, 0) + 1)
    for k in range(k_max + 1):
        w = math.exp(math.lgamma(k + 1) + math.lgamma(n - k) - log_denom)
        for combo in itertools.combinations(pool, k):
            row = np.zeros(n, dtype=np.int64)
            row[list(combo)] = 1
            row[given] = 1
            rows.append(row)
            weights.append(w)
    A = np.array(rows)
    weights = np.array(weights)
    if renormalize:
        weights = weights / weights.sum()
    A_i = A.copy()
    A_i[:, i] = 1
    best = math.inf
    for c in _completions(spec, i, s_i, n):
        gains = spec.evaluate_batch(c, A_i) - spec.evaluate_batch(c, A)
        best = min(best, float(weights @ gains))
    return best


def sample_pull_sets(n: int, i: int, k_budget: int, n_samples: int, rng,
                     given: Sequence[int] = ()) -> np.ndarray:
    """Random pull sets for Shapley estimation, shape ``(n_samples, n)``.

    The set size is drawn with the mass the exact weights assign to each
    size (uniform over ``0..K-1`` when nothing is conditioned on), then a
    uniform subset of that size is drawn.
    """
    given, pool, k_max = _pool_and_cap(i, n, k_budget, given)
    logw = _size_log_weights(n, len(pool), k_max)
    probs = np.exp(logw - logw.max())
    probs /= probs.sum()
    sizes = rng.choice(k_max + 1, size=n_samples, p=probs)
    A = np.zeros((n_samples, n), dtype=np.int64)
    if pool:
        keys = rng.random((n_samples, len(pool)))
        ranks = keys.argsort(axis=1).argsort(axis=1)
        A[:, pool] = ranks < sizes[:, None]
    if given:
        A[:, given] = 1
    return A


def shapley_u(spec: GlobalRewardSpec, i: int, s_i: int, n: int, k_budget: int,
              n_samples: int = 1000, rng=None, *, given: Sequence[int] = ()) -> tuple[float, float]:
    """Monte Carlo Shapley estimate and its standard error."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = check_random_state(rng)
    A = sample_pull_sets(n, i, k_budget, n_samples, rng, given)
    A_i = A.copy()
    A_i[:, i] = 1
    best = None
    for c in _completions(spec, i, s_i, n):
        gains = spec.evaluate_batch(c, A_i) - spec.evaluate_batch(c, A)
        mean = float(gains.mean())
        if best is None or mean < best[0]:
            best = (mean, gains)
    mean, gains = best
    stderr = float(gains.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else math.inf
    return mean, stderr


@dataclass(frozen=True, eq=False)
class MarginalTable:
    """Per-arm, per-state optimistic (``p``) and Shapley (``u``) marginals."""

    p: np.ndarray
    u: np.ndarray
    u_stderr: np.ndarray


def marginal_table(inst, *, shapley: str = "mc", n_samples: int = 1000, rng=None) -> MarginalTable:
    """Compute ``p`` and ``u`` for every (arm, state); ``shapley`` is ``"mc"`` or ``"exact"``."""
    spec, n, K, S = inst.global_reward, inst.n_arms, inst.budget, inst.state_count
    rng = check_random_state(rng)
    p = np.zeros((n, S))
    u = np.zeros((n, S))
    se = np.zeros((n, S))
    for i in range(n):
        for s in range(S):
            p[i, s] = marginal_p(spec, i, s, n)
            if shapley == "exact":
                u[i, s] = shapley_u_exact(spec, i, s, n, K)
            elif shapley == "mc":
                u[i, s], se[i, s] = shapley_u(spec, i, s, n, K, n_samples, rng)
            else:
                raise ValueError(f"shapley must be 'mc' or 'exact', got {shapley!r}")
    return MarginalTable(p, u, se)


# --- structural checks ---------------------------------------------------------

@dataclass
class SubmodularityReport:
    trials: int
    monotone_violations: list = field(default_factory=list)
    submodular_violations: list = field(default_factory=list)
    max_gap: float = 0.0
    min_gap: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.monotone_violations and not self.submodular_violations

    @property
    def modular(self) -> bool:
        return self.ok and max(abs(self.max_gap), abs(self.min_gap)) <= 1e-12


def check_monotone_submodular(spec: GlobalRewardSpec, n: int, trials: int = 10_000, rng=None,
                              *, state_count: int = 2, tol: float = 1e-12) -> SubmodularityReport:
    """Randomized search for monotonicity / diminishing-returns counterexamples in ``a``."""
    rng = check_random_state(rng)
    if n < 2:
        raise ValueError("need at least two arms")
    S = rng.integers(0, state_count, size=(trials, n))
    A = (rng.random((trials, n)) < 0.5).astype(np.int64)
    i = rng.integers(0, n, size=trials)
    j = (i + rng.integers(1, n, size=trials)) % n
    rows = np.arange(trials)
    A[rows, i] = 0
    A[rows, j] = 0
    A_i = A.copy(); A_i[rows, i] = 1
    A_j = A.copy(); A_j[rows, j] = 1
    A_ij = A_i.copy(); A_ij[rows, j] = 1
    if spec.kind == "table":
        ev = lambda X: np.array([spec.evaluate(S[t], X[t]) for t in range(trials)])
    else:
        ev = lambda X: spec.evaluate_batch(S, X)
    r, r_i, r_j, r_ij = ev(A), ev(A_i), ev(A_j), ev(A_ij)
    gain_i = r_i - r
    gap = gain_i - (r_ij - r_j)
    report = SubmodularityReport(trials, max_gap=float(gap.max()), min_gap=float(gap.min()))
    for t in np.nonzero(gain_i < -tol)[0]:
        report.monotone_violations.append((S[t].tolist(), A[t].tolist(), int(i[t]), float(gain_i[t])))
    for t in np.nonzero(gap < -tol)[0]:
        report.submodular_violations.append(
            (S[t].tolist(), A[t].tolist(), int(i[t]), int(j[t]), float(gap[t])))
    return report


# --- serialization -----------------------------------------------------------------

def spec_to_dict(spec: GlobalRewardSpec) -> dict:
    if spec.kind in ("linear", "probability", "max"):
        params = {"m": list(spec.m)}
    elif spec.kind == "subset":
        params = {"universe": spec.universe, "sets": [sorted(y) for y in spec.sets]}
    else:
        params = {"entries": [{"s": list(s), "a": list(a), "r": r}
                              for (s, a), r in sorted(spec.table.items())]}
    return {"kind": spec.kind, "params": params}


def spec_from_dict(data: dict) -> GlobalRewardSpec:
    kind = data.get("kind")
    if kind not in KINDS:
        raise RewardSpecError(f"unknown reward kind {kind!r}")
    params = data.get("params", {})
    try:
        if kind in ("linear", "probability", "max"):
            return GlobalRewardSpec(kind, m=tuple(params["m"]))
        if kind == "subset":
            return GlobalRewardSpec(kind, sets=tuple(frozenset(y) for y in params["sets"]),
                                    universe=int(params["universe"]))
        return GlobalRewardSpec(kind, table={(tuple(e["s"]), tuple(e["a"])): e["r"]
                                             for e in params["entries"]})
    except KeyError as exc:
        raise RewardSpecError(f"{kind} reward is missing parameter {exc}") from None
