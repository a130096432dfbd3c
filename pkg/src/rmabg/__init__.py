"""Restless multi-armed bandits with global rewards: index policies, tree search,
exact solvers, simulation and approximation bounds."""

from .core import (ArmModel, InstanceError, RmabgInstance, SizeGuardError, enumerate_feasible_actions,
                   joint_transition_prob, load_instance, sample_next_state, save_instance,
                   validate_instance)
from .reward import (GlobalRewardSpec, MarginalTable, global_reward, marginal_p, shapley_u,
                     shapley_u_exact, total_reward)
from .whittle import IndexTable, whittle_index

__all__ = [
    "ArmModel", "RmabgInstance", "InstanceError", "SizeGuardError", "validate_instance",
    "enumerate_feasible_actions", "sample_next_state", "joint_transition_prob", "load_instance",
    "save_instance", "GlobalRewardSpec", "MarginalTable", "global_reward", "total_reward",
    "marginal_p", "shapley_u", "shapley_u_exact", "IndexTable", "whittle_index",
]
__version__ = "0.1.0"
