"""Instance generators, fixed reference instances and event-log ingestion."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .core import ArmModel, RmabgInstance, check_instance
from .reward import (GlobalRewardSpec, max_reward, probability_reward, subset_reward)
from .validation import check_random_state

DEFAULT_UNIVERSE = 20
DEFAULT_SET_SIZE = 6
LOG_HEADER = ("volunteer_id", "period", "notified", "completed")


class IngestError(ValueError):
    pass


# --- synthetic generation ------------------------------------------------------

def gen_transitions(n: int, q: float, rng=None) -> np.ndarray:
    """Two-state kernels where engagement and pulling can only help.

    ``P(0,0,1) ~ U(0, q)``, then ``P(1,0,1)`` and ``P(0,1,1)`` are uniform
    above it and ``P(1,1,1)`` is uniform above both.  Returns shape
    ``(n, 2, 2, 2)`` indexed ``[arm, s, a, s']``.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    rng = check_random_state(rng)
    p001 = rng.uniform(0.0, q, size=n)
    p101 = rng.uniform(p001, 1.0)
    p011 = rng.uniform(p001, 1.0)
    p111 = rng.uniform(np.maximum(p101, p011), 1.0)
    up = np.empty((n, 2, 2))
    up[:, 0, 0], up[:, 1, 0], up[:, 0, 1], up[:, 1, 1] = p001, p101, p011, p111
    return np.stack([1.0 - up, up], axis=3)


def gen_reward(kind: str, n: int, params: dict | None = None, rng=None) -> GlobalRewardSpec:
    """Random global reward of the given family.

    ``m_i ~ U(0, 1)`` for linear / probability / max; subset draws each
    ``Y_i`` as ``set_size`` distinct items from ``{1..universe}``.
    """
    params = dict(params or {})
    rng = check_random_state(rng)
    if kind in ("linear", "probability", "max"):
        if params:
            raise ValueError(f"unexpected parameters for {kind}: {sorted(params)}")
        return GlobalRewardSpec(kind, m=tuple(rng.uniform(0.0, 1.0, size=n)))
    if kind == "subset":
        universe = int(params.pop("universe", DEFAULT_UNIVERSE))
        size = int(params.pop("set_size", DEFAULT_SET_SIZE))
        if params:
            raise ValueError(f"unexpected parameters for subset: {sorted(params)}")
        if size > universe:
            raise ValueError("set_size exceeds the universe")
        sets = [frozenset(int(x) + 1 for x in rng.choice(universe, size=size, replace=False))
                for _ in range(n)]
        return subset_reward(sets, universe)
    raise ValueError(f"unknown reward kind {kind!r}")


def per_arm_engagement_reward(n: int, state_count: int = 2) -> np.ndarray:
    """``R_i(s, a) = s / N`` for every arm, shape ``(n, S, 2)``."""
    col = np.arange(state_count, dtype=float) / n
    return np.repeat(np.stack([col, col], axis=1)[None], n, axis=0)


def make_instance(kernels, spec: GlobalRewardSpec, budget: int, *, gamma: float = 0.9,
                  alpha: float = 0.5, per_arm_reward=None, metadata=None) -> RmabgInstance:
    kernels = np.asarray(kernels, dtype=float)
    n = kernels.shape[0]
    if per_arm_reward is None:
        per_arm_reward = per_arm_engagement_reward(n, kernels.shape[1])
    arms = tuple(ArmModel(kernels[i], per_arm_reward[i]) for i in range(n))
    return check_instance(RmabgInstance(arms, int(budget), float(gamma), spec, float(alpha),
                                        dict(metadata or {})))


def make_synthetic_instance(kind: str, n: int, k: int | None = None, q: float = 1.0, rng=None, *,
                            gamma: float = 0.9, alpha: float = 0.5,
                            reward_params: dict | None = None) -> RmabgInstance:
    """Random kernels plus a random global reward; ``K`` defaults to ``N // 2``."""
    rng = check_random_state(rng)
    k = max(1, n // 2) if k is None else k
    kernels = gen_transitions(n, q, rng)
    spec = gen_reward(kind, n, reward_params, rng)
    return make_instance(kernels, spec, k, gamma=gamma, alpha=alpha,
                         metadata={"generator": "synthetic", "kind": kind, "q": q})


@dataclass(frozen=True)
class ThetaSubsets:
    spec: GlobalRewardSpec
    nominal_theta_raw: float

    @property
    def nominal_theta(self) -> float:
        return min(1.0, self.nominal_theta_raw)


def gen_theta_subsets(n: int, k: int, a: int, b: int) -> ThetaSubsets:
    """``k`` copies of ``{1..b}`` followed by ``n - k`` consecutive disjoint blocks of size ``a``.

    The nominal linearity is ``b / (k a)``; values above one are kept raw and
    clamped by ``nominal_theta``.
    """
    if not 1 <= a < b:
        raise ValueError(f"need 1 <= a < b, got a={a}, b={b}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    shared = [frozenset(range(1, b + 1))] * k
    blocks = [frozenset(range(j * a + 1, (j + 1) * a + 1)) for j in range(n - k)]
    universe = max(b, (n - k) * a)
    return ThetaSubsets(subset_reward(shared + blocks, universe), b / (k * a))


def make_theta_instance(n: int, k: int, a: int, b: int, q: float = 1.0, rng=None, *,
                        gamma: float = 0.9, alpha: float = 0.5) -> RmabgInstance:
    theta = gen_theta_subsets(n, k, a, b)
    return make_instance(gen_transitions(n, q, rng), theta.spec, k, gamma=gamma, alpha=alpha,
                         metadata={"generator": "theta", "nominal_theta": theta.nominal_theta_raw})


# --- fixed constructions -------------------------------------------------------------

def _absorb_on_pull(n: int) -> np.ndarray:
    P = np.zeros((n, 2, 2, 2))
    P[:, 0, 0, 0] = P[:, 1, 0, 1] = 1.0
    P[:, :, 1, 0] = 1.0
    return P


def adversarial_instance(n: int, gamma: float = 0.9, variant: str = "full_budget",
                         k: int | None = None) -> RmabgInstance:
    """Pulling an arm sends it to state 0 for good; idle arms keep their state.

    ``full_budget``: ``K = N``, max reward with every ``m_i = 1``, pure global reward.
    ``two_hot``: max reward with ``m_1 = m_2 = 1`` and the rest 0, budget ``k``
    (default 2), ``R_i = s / N`` and ``alpha = 0.5``.
    """
    if variant == "full_budget":
        spec = max_reward([1.0] * n)
        return make_instance(_absorb_on_pull(n), spec, n, gamma=gamma, alpha=0.0,
                             per_arm_reward=np.zeros((n, 2, 2)),
                             metadata={"generator": "adversarial", "variant": variant})
    if variant == "two_hot":
        if n < 2:
            raise ValueError("two_hot needs at least two arms")
        spec = max_reward([1.0, 1.0] + [0.0] * (n - 2))
        return make_instance(_absorb_on_pull(n), spec, 2 if k is None else k, gamma=gamma,
                             metadata={"generator": "adversarial", "variant": variant})
    raise ValueError(f"unknown variant {variant!r}")


EXAMPLE1_SETS = ({1, 2, 3}, {1, 2, 3}, {1, 2}, {3, 4})


def example1_instance(transitions: str = "absorbing", gamma: float = 0.9) -> RmabgInstance:
    """Four arms, ``K = 2``, subset reward over ``{1,2,3}, {1,2,3}, {1,2}, {3,4}``.

    ``absorbing`` sends every arm to state 1 whatever happens; ``identity``
    keeps every state fixed.  Per-arm rewards are zero and ``alpha = 0``.
    """
    P = np.zeros((4, 2, 2, 2))
    if transitions == "absorbing":
        P[..., 1] = 1.0
    elif transitions == "identity":
        P[:, 0, :, 0] = P[:, 1, :, 1] = 1.0
    else:
        raise ValueError("transitions must be 'absorbing' or 'identity'")
    return make_instance(P, subset_reward(EXAMPLE1_SETS, 4), 2, gamma=gamma, alpha=0.0,
                         per_arm_reward=np.zeros((4, 2, 2)),
                         metadata={"generator": "example1", "transitions": transitions})


# --- event-log ingestion ---------------------------------------------------------------

@dataclass
class IngestReport:
    volunteers: list
    excluded: list
    cluster_of: dict
    match_probability: dict
    zero_count_cells: list = field(default_factory=list)
    never_notified: list = field(default_factory=list)


def _id_key(v: str):
    return (0, int(v), "") if v.isdigit() else (1, 0, v)


def _parse_log(text: str) -> dict:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("line 1: empty log") from None
    if tuple(h.strip() for h in header) != LOG_HEADER:
        raise IngestError(f"line 1: header must be {','.join(LOG_HEADER)}, got {','.join(header)}")
    rows: dict[str, dict[int, tuple[int, int]]] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise IngestError(f"line {line_no}: expected 4 fields, got {len(row)}")
        vid, period, notified, completed = (c.strip() for c in row)
        try:
            period, notified, completed = int(period), int(notified), int(completed)
        except ValueError:
            raise IngestError(f"line {line_no}: non-integer field in {row}") from None
        if not vid:
            raise IngestError(f"line {line_no}: empty volunteer_id")
        if period < 0 or notified not in (0, 1) or completed not in (0, 1):
            raise IngestError(f"line {line_no}: period must be >= 0 and flags 0/1")
        per = rows.setdefault(vid, {})
        if period in per:
            raise IngestError(f"line {line_no}: duplicate period {period} for volunteer {vid}")
        per[period] = (notified, completed)
    return rows


def ingest_volunteer_log(data, *, n_clusters: int = 100, budget: int | None = None,
                         gamma: float = 0.9, alpha: float = 0.5, min_completions: int = 3,
                         action_source: str = "notified", return_report: bool = False):
    """Build an instance from a ``volunteer_id,period,notified,completed`` log.

    Volunteers with fewer than ``min_completions`` completed trips are dropped.
    The rest are sorted by (total trips, id) and cut into equal-frequency
    clusters; each cluster gets one kernel estimated from consecutive-period
    transitions with +1 smoothing.  The state is ``completed`` in a period.
    The action is ``notified`` in the following period, or with
    ``action_source="completed"`` the current period's completion.  Each
    volunteer's match probability (accepted / notified) feeds a probability
    global reward.
    """
    if action_source not in ("notified", "completed"):
        raise ValueError("action_source must be 'notified' or 'completed'")
    text = data.decode() if isinstance(data, (bytes, bytearray)) else str(data)
    rows = _parse_log(text)
    totals = {v: sum(c for _, c in per.values()) for v, per in rows.items()}
    kept = sorted((v for v in rows if totals[v] >= min_completions), key=_id_key)
    excluded = sorted((v for v in rows if totals[v] < min_completions), key=_id_key)
    if not kept:
        raise IngestError("no volunteer has enough completed trips")
    G = min(n_clusters, len(kept))
    ordered = sorted(kept, key=lambda v: (totals[v], _id_key(v)))
    cluster_of = {}
    for g, chunk in enumerate(np.array_split(np.arange(len(ordered)), G)):
        for j in chunk:
            cluster_of[ordered[j]] = g
    counts = np.zeros((G, 2, 2, 2))
    for v in kept:
        per = rows[v]
        for t in sorted(per):
            if t + 1 not in per:
                continue
            s, s_next = per[t][1], per[t + 1][1]
            a = per[t + 1][0] if action_source == "notified" else per[t][1]
            counts[cluster_of[v], s, a, s_next] += 1
    zero_cells = [(g, s, a) for g, s, a in zip(*np.nonzero(counts.sum(axis=3) == 0))]
    smoothed = counts + 1.0
    kernels_by_cluster = smoothed / smoothed.sum(axis=3, keepdims=True)
    m, never = {}, []
    for v in kept:
        notified = sum(nf for nf, _ in rows[v].values())
        accepted = sum(1 for nf, c in rows[v].values() if nf and c)
        if notified == 0:
            never.append(v)
        m[v] = accepted / notified if notified else 0.0
    n = len(kept)
    kernels = np.stack([kernels_by_cluster[cluster_of[v]] for v in kept])
    spec = probability_reward([m[v] for v in kept])
    k = max(1, n // 2) if budget is None else budget
    inst = make_instance(kernels, spec, k, gamma=gamma, alpha=alpha,
                         metadata={"generator": "ingest", "volunteers": kept})
    if not return_report:
        return inst
    report = IngestReport(kept, excluded, cluster_of, m,
                          [(int(g), int(s), int(a)) for g, s, a in zero_cells], never)
    return inst, report


def gen_synthetic_log(n_volunteers: int, n_periods: int, rng=None) -> bytes:
    """Fixture event log: engaged volunteers complete more, roughly a quarter are casual."""
    rng = check_random_state(rng)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(LOG_HEADER)
    for v in range(n_volunteers):
        casual = rng.random() < 0.25
        p_notify = rng.uniform(0.3, 0.9)
        p_accept = rng.uniform(0.0, 0.05) if casual else rng.uniform(0.2, 0.8)
        engaged = 0
        for t in range(n_periods):
            notified = int(rng.random() < p_notify)
            boost = 1.5 if engaged else 1.0
            completed = int(notified and rng.random() < min(1.0, p_accept * boost))
            w.writerow((v, t, notified, completed))
            engaged = completed
    return out.getvalue().encode()
