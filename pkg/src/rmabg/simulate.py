"""Episode engine, exact finite-horizon evaluation and experiment aggregation.

Random streams are derived from ``SeedSequence`` entropy tuples so every
(policy, seed, trial) cell is reproducible on its own:

* instance for a seed:        ``(master_seed, 1, seed)``
* initial state:              ``(master_seed, 2, seed, trial)``
* episode dynamics + actions: ``(master_seed, 3, crc32(policy name), seed, trial)``
* policy fitting:             ``(master_seed, 4, crc32(policy name), seed)``
"""

from __future__ import annotations

import csv
import io
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import content_hash, enumerate_states, sample_next_state
from .reward import total_reward, total_reward_batch
from .validation import check_random_state, check_state

RESULTS_HEADER = ("policy", "seed", "trial", "discounted_reward", "normalized_reward")
SUMMARY_HEADER = ("policy", "mean_normalized", "stderr", "n_runs")
NORMALIZATION_FLOOR = 1e-9
RANDOM_NAME = "Random"


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: int = 50
    gamma: float | None = None
    seeds: int = 15
    trials_per_seed: int = 5
    initial_state_rule: str = "sampled"
    initial_state: tuple | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.seeds < 1 or self.trials_per_seed < 1:
            raise ValueError("seeds and trials_per_seed must be >= 1")
        if self.initial_state_rule not in ("sampled", "fixed"):
            raise ValueError("initial_state_rule must be 'sampled' or 'fixed'")
        if self.initial_state_rule == "fixed" and self.initial_state is None:
            raise ValueError("fixed initial_state_rule needs initial_state")


def stream(*entropy) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(e) for e in entropy])))


def name_key(name: str) -> int:
    return zlib.crc32(name.encode())


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray


def run_episode(inst, policy, s0, T: int, rng, *, gamma: float | None = None):
    """Roll ``policy`` for ``T`` rounds; return ``(discounted reward, trajectory)``."""
    gamma = inst.gamma if gamma is None else gamma
    rng = check_random_state(rng)
    s = check_state(s0, inst.n_arms, inst.state_count)
    states, actions, rewards = [], [], []
    total = 0.0
    for t in range(T):
        a = policy.act(s, rng)
        r = total_reward(inst, s, a)
        total += gamma ** t * r
        states.append(s)
        actions.append(a)
        rewards.append(r)
        s = sample_next_state(inst, s, a, rng)
    return total, Trajectory(np.array(states), np.array(actions), np.array(rewards))


def exact_policy_value(inst, policy, T: int | None = None, *, gamma: float | None = None) -> np.ndarray:
    """Expected discounted reward of a deterministic policy from every joint state.

    ``T=None`` gives the infinite-horizon value (linear solve); otherwise a
    ``T``-step backward recursion.  Indexed like ``enumerate_states``.
    """
    gamma = inst.gamma if gamma is None else gamma
    n, S = inst.n_arms, inst.state_count
    states = enumerate_states(n, S)
    A = np.stack([policy.act(s) for s in states])
    r = total_reward_batch(inst, states, A)
    # Row j of M: joint transition distribution from states[j] under A[j].
    M = np.ones((len(states), 1))
    for arm in range(n):
        rows = inst.transitions[arm, states[:, arm], A[:, arm]]
        M = (M[:, :, None] * rows[:, None, :]).reshape(len(states), -1)
    if T is None:
        return np.linalg.solve(np.eye(len(states)) - gamma * M, r)
    v = np.zeros(len(states))
    for _ in range(T):
        v = r + gamma * M @ v
    return v


@dataclass
class ExperimentReport:
    results: list
    summary: list
    metadata: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def results_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for row in self.results:
            w.writerow((row["policy"], row["seed"], row["trial"],
                        repr(float(row["discounted_reward"])), repr(float(row["normalized_reward"]))))
        return out.getvalue()

    def summary_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in self.summary:
            w.writerow((row["policy"], repr(float(row["mean_normalized"])),
                        repr(float(row["stderr"])), row["n_runs"]))
        return out.getvalue()

    def markdown(self) -> str:
        unit = "absolute" if self.metadata.get("absolute") else "normalized"
        lines = [f"| policy | mean {unit} reward |", "|---|---|"]
        for row in self.summary:
            lines.append(f"| {row['policy']} | {row['mean_normalized']:.4f} ± {row['stderr']:.4f} |")
        for name, msg in sorted(self.errors.items()):
            lines.append(f"| {name} | error: {msg} |")
        return "\n".join(lines) + "\n"

    def mean(self, policy: str) -> float:
        return next(r["mean_normalized"] for r in self.summary if r["policy"] == policy)

    def raw_mean(self, policy: str) -> float:
        vals = [r["discounted_reward"] for r in self.results if r["policy"] == policy]
        return float(np.mean(vals))


def _resolve_instance(source, seed: int, master_seed: int):
    return source(stream(master_seed, 1, seed)) if callable(source) else source


def _initial_state(inst, cfg: EpisodeConfig, master_seed: int, seed: int, trial: int):
    if cfg.initial_state_rule == "fixed":
        return check_state(cfg.initial_state, inst.n_arms, inst.state_count)
    rng = stream(master_seed, 2, seed, trial)
    return rng.integers(0, inst.state_count, size=inst.n_arms)


def _run_policy_seed(args):
    """All trials of one (policy, seed) cell; returns rows or an error string."""
    source, name, factory, cfg, master_seed, seed = args
    try:
        inst = _resolve_instance(source, seed, master_seed)
        policy = factory()
        policy.fit(inst, rng=stream(master_seed, 4, name_key(name), seed))
        rows = []
        for trial in range(cfg.trials_per_seed):
            s0 = _initial_state(inst, cfg, master_seed, seed, trial)
            rng = stream(master_seed, 3, name_key(name), seed, trial)
            total, _ = run_episode(inst, policy, s0, cfg.horizon, rng, gamma=cfg.gamma)
            rows.append({"policy": name, "seed": seed, "trial": trial, "discounted_reward": total})
        return name, seed, rows, None
    except Exception as exc:  # noqa: BLE001 - one failing policy must not sink the rest
        return name, seed, [], f"{type(exc).__name__}: {exc}"


class _Factory:
    """Picklable zero-argument constructor for a policy."""

    def __init__(self, kind, params):
        self.kind, self.params = kind, dict(params)

    def __call__(self):
        from .policies import make_policy
        return make_policy(self.kind, **self.params)


def _as_factories(policies) -> dict:
    out = {}
    items = policies.items() if isinstance(policies, dict) else ((p, {}) for p in policies)
    for name, spec in items:
        if callable(spec) and not isinstance(spec, dict):
            out[name] = spec
        else:
            spec = dict(spec or {})
            kind = spec.pop("kind", name)
            out[name] = _Factory(kind, spec)
    return out


def run_experiment(source, policies, cfg: EpisodeConfig | None = None, master_seed: int = 0,
                   *, jobs: int | None = 1) -> ExperimentReport:
    """Run every policy over the seed x trial grid and normalize by Random.

    ``source`` is an instance or a callable ``rng -> instance`` drawn once per
    seed.  ``policies`` is a list of registered kinds or a mapping from display
    name to either a parameter dict (optional ``kind`` key) or a zero-argument
    factory.  Random is added when missing.  Initial states depend only on
    (seed, trial) so every policy sees the same ones.
    """
    cfg = cfg or EpisodeConfig()
    factories = _as_factories(policies)
    random_added = RANDOM_NAME not in factories
    if random_added:
        factories = {RANDOM_NAME: _Factory("Random", {}), **factories}
    tasks = [(source, name, fac, cfg, master_seed, seed)
             for name, fac in factories.items() for seed in range(cfg.seeds)]
    jobs = (os.cpu_count() or 1) if jobs is None else max(1, int(jobs))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_policy_seed, tasks))
    else:
        outcomes = [_run_policy_seed(t) for t in tasks]
    rows, errors = [], {}
    for name, seed, cell_rows, err in outcomes:
        if err is not None:
            errors.setdefault(name, err)
        rows.extend(cell_rows)
    order = {name: j for j, name in enumerate(factories)}
    failed = set(errors)
    rows = [r for r in rows if r["policy"] not in failed]
    rows.sort(key=lambda r: (order[r["policy"]], r["seed"], r["trial"]))
    if RANDOM_NAME in errors:
        raise RuntimeError(f"Random baseline failed: {errors[RANDOM_NAME]}")
    base = float(np.mean([r["discounted_reward"] for r in rows if r["policy"] == RANDOM_NAME]))
    absolute = abs(base) < NORMALIZATION_FLOOR
    for r in rows:
        r["normalized_reward"] = r["discounted_reward"] if absolute else r["discounted_reward"] / base
    summary = []
    for name in factories:
        vals = np.array([r["normalized_reward"] for r in rows if r["policy"] == name])
        if vals.size == 0:
            continue
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        summary.append({"policy": name, "mean_normalized": float(vals.mean()), "stderr": se,
                        "n_runs": int(vals.size)})
    meta = {
        "master_seed": master_seed, "horizon": cfg.horizon, "seeds": cfg.seeds,
        "trials_per_seed": cfg.trials_per_seed, "initial_state_rule": cfg.initial_state_rule,
        "normalization": "global Random mean", "random_mean": base, "absolute": absolute,
        "random_added": random_added,
    }
    if not callable(source):
        meta["instance_hash"] = content_hash(source)
    return ExperimentReport(rows, summary, meta, errors)
