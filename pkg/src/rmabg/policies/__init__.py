"""Decision policies and a name-based registry."""

from .base import BasePolicy
from .index import (GreedyPolicy, IndexPolicy, IterativeWhittlePolicy, RandomPolicy,
                    choose_by_index, choose_greedy, choose_iterative, choose_random)
from .mcts import (MctsNode, MctsWhittlePolicy, VanillaMctsPolicy, mcts_policy_search,
                   vanilla_mcts)
from .optimal import (GreedyOverQPolicy, JointValueFunction, OptimalPolicy, greedy_over_q,
                      solve_optimal)

POLICY_KINDS = ("Random", "VanillaWhittle", "Greedy", "VanillaMcts", "LinearWhittle",
                "ShapleyWhittle", "IterLinear", "IterShapley", "MctsLinear", "MctsShapley",
                "Optimal", "GreedyOverQ")


def make_policy(kind: str, **params) -> BasePolicy:
    """Build the policy registered under ``kind`` with keyword parameters."""
    builders = {
        "Random": lambda: RandomPolicy(**params),
        "VanillaWhittle": lambda: IndexPolicy(flavor="vanilla", **params),
        "Greedy": lambda: GreedyPolicy(**params),
        "VanillaMcts": lambda: VanillaMctsPolicy(**params),
        "LinearWhittle": lambda: IndexPolicy(flavor="linear", **params),
        "ShapleyWhittle": lambda: IndexPolicy(flavor="shapley", **params),
        "IterLinear": lambda: IterativeWhittlePolicy(flavor="linear", **params),
        "IterShapley": lambda: IterativeWhittlePolicy(flavor="shapley", **params),
        "MctsLinear": lambda: MctsWhittlePolicy(flavor="linear", **params),
        "MctsShapley": lambda: MctsWhittlePolicy(flavor="shapley", **params),
        "Optimal": lambda: OptimalPolicy(**params),
        "GreedyOverQ": lambda: GreedyOverQPolicy(**params),
    }
    if kind not in builders:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {', '.join(POLICY_KINDS)}")
    return builders[kind]()


__all__ = ["BasePolicy", "RandomPolicy", "GreedyPolicy", "IndexPolicy", "IterativeWhittlePolicy",
           "MctsWhittlePolicy", "VanillaMctsPolicy", "OptimalPolicy", "GreedyOverQPolicy",
           "JointValueFunction", "MctsNode", "choose_random", "choose_greedy", "choose_by_index",
           "choose_iterative", "mcts_policy_search", "vanilla_mcts", "solve_optimal",
           "greedy_over_q", "make_policy", "POLICY_KINDS"]
