"""Local-breakout routing: MDP solver and slot-level simulator."""

from .delay import DelayModel, PathReward, cn_delay_cdf, cn_delay_sample, p_bac, rewards
from .kernel import sample_epoch, transition_row
from .params import Action, InvalidAction, InvalidParams, SystemParams
from .policies import BoundPolicy, PolicyBindingError, PolicySpec, bind, decide
from .simulator import SimConfig, SimulationReport, run
from .solver import SolveResult, bellman_backup, extract_threshold, policy_gain, solve

__all__ = [
    "Action", "BoundPolicy", "DelayModel", "InvalidAction", "InvalidParams", "PathReward",
    "PolicyBindingError", "PolicySpec", "SimConfig", "SimulationReport", "SolveResult",
    "SystemParams", "bellman_backup", "bind", "cn_delay_cdf", "cn_delay_sample", "decide",
    "extract_threshold", "p_bac", "policy_gain", "rewards", "run", "sample_epoch", "solve",
    "transition_row",
]
