"""Tabular hierarchical option-critic: learning, environments, and oracles."""

from .core import (
    CriticSet,
    EventKind,
    HierarchyConfig,
    OptionStack,
    ParameterSet,
    TerminationEvent,
    TopPolicy,
    advantage,
    eval_q_omega,
    eval_u,
    policy_grad_step,
    softmax_policy,
    termination_grad_step,
    termination_partition,
    termination_prob,
)
from .envs import FourRooms, SampledModelEnv, StochasticDP, TabularModel
from .learn import EpisodeLog, Learner, StepRecord
from .rng import TraceRng

__all__ = [
    "CriticSet",
    "EpisodeLog",
    "EventKind",
    "FourRooms",
    "HierarchyConfig",
    "Learner",
    "OptionStack",
    "ParameterSet",
    "SampledModelEnv",
    "StepRecord",
    "StochasticDP",
    "TabularModel",
    "TerminationEvent",
    "TopPolicy",
    "TraceRng",
    "advantage",
    "eval_q_omega",
    "eval_u",
    "policy_grad_step",
    "softmax_policy",
    "termination_grad_step",
    "termination_partition",
    "termination_prob",
]

__version__ = "0.1.0"
