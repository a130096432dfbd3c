"""Domain types and joint-transition mechanics for RMAB-G instances.

An instance is ``N`` two-action arms sharing a state space of size ``S``, a
per-round pull budget ``K``, a discount factor and a global reward over the
joint (state, action) vector.  Arm ``i`` carries a transition tensor of shape
``(S, 2, S)`` indexed ``[state, action, next_state]`` and a per-arm reward
table of shape ``(S, 2)``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .reward import GlobalRewardSpec

ROW_SUM_TOL = 1e-9
RENORMALIZE_TOL = 1e-6
MAX_ENUMERATION_ARMS = 20


class InstanceError(ValueError):
    """Raised when an instance (or its serialized form) is malformed."""


class SizeGuardError(ValueError):
    """Raised when an enumeration would blow up combinatorially."""


@dataclass(frozen=True, eq=False)
class ArmModel:
    """One arm: transition kernel ``P[s, a, s']`` and reward table ``R[s, a]``."""

    transitions: np.ndarray
    per_arm_reward: np.ndarray

    def __post_init__(self):
        P = np.array(self.transitions, dtype=float)
        R = np.array(self.per_arm_reward, dtype=float)
        P.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "per_arm_reward", R)

    @property
    def state_count(self) -> int:
        return self.transitions.shape[0]


@dataclass(frozen=True)
class Violation:
    arm: int | None
    field: str
    message: str

    def __str__(self):
        where = "instance" if self.arm is None else f"arm {self.arm}"
        return f"{where}: {self.field}: {self.message}"


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


@dataclass(frozen=True, eq=False)
class RmabgInstance:
    """``N`` arms, budget ``K``, discount ``gamma``, weighting ``alpha`` and a global reward.

    The combined per-round reward is
    ``(1 - alpha) * R_glob(s, a) + alpha * sum_i R_i(s_i, a_i)``.
    """

    arms: tuple[ArmModel, ...]
    budget: int
    gamma: float
    global_reward: "GlobalRewardSpec"
    alpha: float = 0.5
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def state_count(self) -> int:
        return self.arms[0].state_count if self.arms else 0

    @cached_property
    def transitions(self) -> np.ndarray:
        """Stacked kernels, shape ``(N, S, 2, S)``."""
        out = np.stack([arm.transitions for arm in self.arms])
        out.setflags(write=False)
        return out

    @cached_property
    def per_arm_rewards(self) -> np.ndarray:
        """Stacked reward tables, shape ``(N, S, 2)``."""
        out = np.stack([arm.per_arm_reward for arm in self.arms])
        out.setflags(write=False)
        return out

    def replace(self, **changes) -> "RmabgInstance":
        kwargs = dict(arms=self.arms, budget=self.budget, gamma=self.gamma,
                      global_reward=self.global_reward, alpha=self.alpha,
                      metadata=dict(self.metadata))
        kwargs.update(changes)
        return RmabgInstance(**kwargs)


def validate_instance(inst: RmabgInstance) -> ValidationResult:
    """Check every type invariant; never raises."""
    out: list[Violation] = []
    n = inst.n_arms
    if n == 0:
        out.append(Violation(None, "arms", "instance has no arms"))
    if not (1 <= inst.budget <= max(n, 0)):
        out.append(Violation(None, "budget", f"K={inst.budget} outside [1, N={n}]"))
    if not (0.0 <= inst.gamma < 1.0):
        out.append(Violation(None, "gamma", f"gamma={inst.gamma} outside [0, 1)"))
    if not (0.0 <= inst.alpha <= 1.0):
        out.append(Violation(None, "alpha", f"alpha={inst.alpha} outside [0, 1]"))
    n_states = inst.state_count
    for i, arm in enumerate(inst.arms):
        P, R = arm.transitions, arm.per_arm_reward
        if P.ndim != 3 or P.shape[1] != 2 or P.shape[0] != P.shape[2]:
            out.append(Violation(i, "transitions", f"shape {P.shape} is not (S, 2, S)"))
            continue
        if P.shape[0] != n_states:
            out.append(Violation(i, "transitions", f"|S|={P.shape[0]} differs from arm 0 ({n_states})"))
        if R.shape != (P.shape[0], 2):
            out.append(Violation(i, "per_arm_reward", f"shape {R.shape} is not ({P.shape[0]}, 2)"))
        if not np.all(np.isfinite(R)):
            out.append(Violation(i, "per_arm_reward", "non-finite entry"))
        if np.any(P < 0) or np.any(P > 1):
            out.append(Violation(i, "transitions", "probability outside [0, 1]"))
        sums = P.sum(axis=2)
        for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)):
            out.append(Violation(i, "transitions",
                                 f"row (state={s}, action={a}) sums to {sums[s, a]:.12g}"))
    spec = inst.global_reward
    spec_n = getattr(spec, "n_arms", None)
    if spec_n is not None and spec_n != n:
        out.append(Violation(None, "global_reward", f"sized for {spec_n} arms, instance has {n}"))
    return ValidationResult(tuple(out))


def check_instance(inst: RmabgInstance) -> RmabgInstance:
    result = validate_instance(inst)
    if not result.ok:
        raise InstanceError("; ".join(str(v) for v in result.violations))
    return inst


def enumerate_feasible_actions(n: int, k: int) -> np.ndarray:
    """All binary vectors of length ``n`` with at most ``k`` ones, lexicographic order."""
    if n > MAX_ENUMERATION_ARMS:
        raise SizeGuardError(f"n={n} exceeds the enumeration guard ({MAX_ENUMERATION_ARMS})")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    rows = [v for v in itertools.product((0, 1), repeat=n) if sum(v) <= k]
    return np.array(rows, dtype=np.int8).reshape(len(rows), n)


def enumerate_states(n: int, state_count: int = 2) -> np.ndarray:
    """All joint states in mixed-radix order (arm 0 most significant)."""
    if n > MAX_ENUMERATION_ARMS:
        raise SizeGuardError(f"n={n} exceeds the enumeration guard ({MAX_ENUMERATION_ARMS})")
    rows = list(itertools.product(range(state_count), repeat=n))
    return np.array(rows, dtype=np.int64).reshape(len(rows), n)


def state_index(s: Sequence[int], state_count: int = 2) -> int:
    idx = 0
    for v in s:
        idx = idx * state_count + int(v)
    return idx


def sample_next_state(inst: RmabgInstance, s, a, rng: np.random.Generator) -> np.ndarray:
    """Draw every arm's next state independently from its kernel row."""
    s = np.asarray(s, dtype=np.int64)
    a = np.asarray(a, dtype=np.int64)
    rows = inst.transitions[np.arange(inst.n_arms), s, a]
    cum = np.cumsum(rows, axis=1)
    u = rng.random(inst.n_arms)
    nxt = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(nxt, inst.state_count - 1)


def joint_transition_prob(inst: RmabgInstance, s, a, s_next) -> float:
    s, a, s_next = (np.asarray(v, dtype=np.int64) for v in (s, a, s_next))
    return float(np.prod(inst.transitions[np.arange(inst.n_arms), s, a, s_next]))


# --- serialization -----------------------------------------------------------

def instance_to_dict(inst: RmabgInstance) -> dict:
    from .reward import spec_to_dict

    return {
        "n_arms": inst.n_arms,
        "budget": int(inst.budget),
        "gamma": float(inst.gamma),
        "alpha": float(inst.alpha),
        "state_count": inst.state_count,
        "arms": [
            {"transitions": arm.transitions.tolist(),
             "per_arm_reward": arm.per_arm_reward.tolist()}
            for arm in inst.arms
        ],
        "global_reward": spec_to_dict(inst.global_reward),
    }


def _load_kernel(raw, arm: int) -> np.ndarray:
    P = np.array(raw, dtype=float)
    if P.ndim != 3:
        raise InstanceError(f"arm {arm}: transitions must be a 3-d array")
    sums = P.sum(axis=2, keepdims=True)
    err = np.abs(sums - 1.0)
    if np.any(err > RENORMALIZE_TOL):
        s, a, _ = np.argwhere(err > RENORMALIZE_TOL)[0]
        raise InstanceError(
            f"arm {arm}: transition row (state={s}, action={a}) sums to {sums[s, a, 0]!r}")
    # Rows within RENORMALIZE_TOL are renormalized; anything worse is rejected above.
    return P / sums


def instance_from_dict(data: dict) -> RmabgInstance:
    from .reward import spec_from_dict

    required = ("n_arms", "budget", "gamma", "alpha", "state_count", "arms", "global_reward")
    for key in required:
        if key not in data:
            raise InstanceError(f"missing field {key!r}")
    unknown = set(data) - set(required)
    if unknown:
        raise InstanceError(f"unknown field(s) {sorted(unknown)}")
    arms = []
    for i, raw in enumerate(data["arms"]):
        arms.append(ArmModel(_load_kernel(raw["transitions"], i),
                             np.array(raw["per_arm_reward"], dtype=float)))
    if len(arms) != data["n_arms"]:
        raise InstanceError(f"n_arms={data['n_arms']} but {len(arms)} arms listed")
    inst = RmabgInstance(arms=tuple(arms), budget=int(data["budget"]),
                         gamma=float(data["gamma"]), alpha=float(data["alpha"]),
                         global_reward=spec_from_dict(data["global_reward"]))
    if inst.state_count != data["state_count"]:
        raise InstanceError(f"state_count={data['state_count']} but kernels have {inst.state_count}")
    return check_instance(inst)


def dumps_instance(inst: RmabgInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


def content_hash(inst: RmabgInstance) -> str:
    """SHA-256 of the canonical JSON encoding."""
    return hashlib.sha256(dumps_instance(inst).encode()).hexdigest()


def save_instance(inst: RmabgInstance, path) -> str:
    text = dumps_instance(inst)
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load_instance(path) -> RmabgInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: invalid JSON ({exc})") from exc
    return instance_from_dict(data)
