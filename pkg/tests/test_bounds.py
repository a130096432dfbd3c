import itertools

import numpy as np
import pytest

from oracles import combined_reward, glob_reward, shapley_by_permutations, spec_params
from rmabg.bounds import (UndefinedBoundError, all_bounds, beta_linear, beta_shapley,
                          identity_transition_instance, theta_argmin_state, theta_linear,
                          theta_shapley)
from rmabg.core import SizeGuardError, enumerate_states
from rmabg.instances import (example1_instance, gen_theta_subsets, make_instance,
                             make_synthetic_instance, make_theta_instance)
from rmabg.policies import make_policy
from rmabg.reward import linear_reward
from rmabg.simulate import exact_policy_value


# --- independent enumeration oracle ------------------------------------------------

def oracle_bonus(inst, flavor):
    kind, params, n = inst.global_reward.kind, spec_params(inst.global_reward), inst.n_arms
    out = np.zeros((n, 2))
    for i in range(n):
        for si in (0, 1):
            if flavor == "linear":
                s = [1] * n
                s[i] = si
                out[i, si] = glob_reward(kind, params, s, [int(j == i) for j in range(n)])
            else:
                out[i, si] = shapley_by_permutations(kind, params, i, si, n, inst.budget)
    return out


def feasible(n, k):
    return [a for a in itertools.product((0, 1), repeat=n) if sum(a) <= k]


def oracle_ratios(inst, bonus):
    n = inst.n_arms
    ratios = []
    for s in itertools.product((0, 1), repeat=n):
        for a in feasible(n, inst.budget):
            num = combined_reward(inst, s, a)
            den = sum(inst.alpha * inst.arms[i].per_arm_reward[s[i], a[i]]
                      + (1 - inst.alpha) * bonus[i, s[i]] * a[i] for i in range(n))
            if abs(den) < 1e-12:
                if abs(num) >= 1e-12:
                    ratios.append(float("inf"))
                continue
            ratios.append(num / den)
    return ratios


def oracle_theta(inst, bonus):
    n, k = inst.n_arms, inst.budget
    worst = float("inf")
    for s in itertools.product((0, 1), repeat=n):
        best = max(combined_reward(inst, s, a) for a in feasible(n, k))
        if best <= 1e-12:
            continue
        gain = [inst.alpha * (inst.arms[i].per_arm_reward[s[i], 1] - inst.arms[i].per_arm_reward[s[i], 0])
                + (1 - inst.alpha) * bonus[i, s[i]] for i in range(n)]
        chosen = sorted(range(n), key=lambda i: (-gain[i], i))[:k]
        a_hat = [int(i in chosen) for i in range(n)]
        worst = min(worst, combined_reward(inst, s, a_hat) / best)
    return worst


# --- golden values -----------------------------------------------------------------

def test_example1_golden_bounds(example1):
    assert beta_linear(example1) == pytest.approx(0.5)
    assert theta_linear(example1) == pytest.approx(0.75)


def test_linear_reward_gives_unit_bounds():
    P = np.full((4, 2, 2, 2), 0.5)
    inst = make_instance(P, linear_reward([0.2, 0.5, 0.7, 0.9]), 2, alpha=0.0,
                         per_arm_reward=np.zeros((4, 2, 2)))
    for name, value in all_bounds(inst).items():
        assert value == pytest.approx(1.0), name


def test_example1_shapley_bounds_match_oracle(example1):
    u = oracle_bonus(example1, "shapley")
    r = oracle_ratios(example1, u)
    finite = [x for x in r if np.isfinite(x)]
    assert beta_shapley(example1) == pytest.approx(min(finite) / max(r))
    assert theta_shapley(example1) == pytest.approx(oracle_theta(example1, u))


@pytest.mark.parametrize("kind", ["probability", "max", "subset"])
@pytest.mark.parametrize("seed", range(2))
def test_bounds_match_oracle_on_random_instances(kind, seed):
    inst = make_synthetic_instance(kind, 4, 2, 1.0, seed)
    p, u = oracle_bonus(inst, "linear"), oracle_bonus(inst, "shapley")
    finite = [x for x in oracle_ratios(inst, p) if np.isfinite(x)]
    assert beta_linear(inst) == pytest.approx(min(finite), abs=1e-10)
    ru = oracle_ratios(inst, u)
    assert beta_shapley(inst) == pytest.approx(min(x for x in ru if np.isfinite(x)) / max(ru), abs=1e-10)
    assert theta_linear(inst) == pytest.approx(oracle_theta(inst, p), abs=1e-10)
    assert theta_shapley(inst) == pytest.approx(oracle_theta(inst, u), abs=1e-10)


@pytest.mark.parametrize("seed", range(6))
def test_shapley_beta_and_theta_ranges(seed):
    inst = make_synthetic_instance(["probability", "max", "subset"][seed % 3], 5, 2, 1.0, seed)
    assert 0 < beta_shapley(inst) <= 1 + 1e-12
    assert theta_shapley(inst) <= 1 + 1e-12 and theta_linear(inst) <= 1 + 1e-12


def test_theta_subsets_full_engagement_state():
    inst = make_theta_instance(4, 2, 2, 3, rng=0, alpha=0.0)
    assert gen_theta_subsets(4, 2, 2, 3).nominal_theta == pytest.approx(0.75)
    # All-ones: the linearized pick is the two shared {1,2,3} sets, covering 3 of 4.
    ones = [1, 1, 1, 1]
    best = max(combined_reward(inst, ones, a) for a in feasible(4, 2))
    assert combined_reward(inst, ones, [1, 1, 0, 0]) / best == pytest.approx(0.75)
    assert theta_linear(inst) == pytest.approx(0.75)
    assert theta_linear(inst) == pytest.approx(oracle_theta(inst, oracle_bonus(inst, "linear")))


@pytest.mark.parametrize("builder", [
    lambda: example1_instance("identity"),
    lambda: make_theta_instance(4, 2, 2, 3, rng=1, alpha=0.0),
    lambda: make_synthetic_instance("subset", 4, 2, 1.0, 3, alpha=0.0),
])
def test_identity_construction_realizes_theta(builder):
    inst = identity_transition_instance(builder())
    s = theta_argmin_state(inst)
    j = int(np.flatnonzero((enumerate_states(4) == s).all(axis=1))[0])
    lw = exact_policy_value(inst, make_policy("LinearWhittle").fit(inst))[j]
    opt = exact_policy_value(inst, make_policy("Optimal").fit(inst))[j]
    assert lw / opt == pytest.approx(theta_linear(inst), abs=1e-6)


def test_beta_at_least_one_over_k():
    for seed in range(40):
        kind = ["linear", "probability", "max", "subset"][seed % 4]
        n = 2 + seed % 4
        inst = make_synthetic_instance(kind, n, 1 + seed % n, 1.0, seed)
        assert beta_linear(inst) >= 1 / inst.budget - 1e-12


def test_undefined_bound():
    inst = make_instance(np.full((2, 2, 2, 2), 0.5), linear_reward([0.0, 0.0]), 1,
                         per_arm_reward=np.zeros((2, 2, 2)))
    with pytest.raises(UndefinedBoundError):
        beta_linear(inst)
    with pytest.raises(UndefinedBoundError):
        theta_linear(inst)
    assert np.isnan(all_bounds(inst)["beta_linear"])


def test_enumeration_guard():
    with pytest.raises(SizeGuardError):
        beta_linear(make_synthetic_instance("linear", 11, 2, 1.0, 0))
