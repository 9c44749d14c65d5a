"""Distributed Douglas-Rachford seeking of variational generalized Nash equilibria."""

from .cournot import CournotInstance, constants, lemma4_bound, sample_instance
from .game import AugmentedState, GameSpec, PlayerSpec, kkt_residual
from .graph import Graph, build_graph, graph_algebra, random_experiment_graph
from .oracle import brute_force_vgne, centralized_vgne, verify_vi
from .splitting import DRConfig, Splitting, StepSizes, lemma1_step_sizes

__version__ = "0.1.0"

__all__ = [
    "AugmentedState",
    "CournotInstance",
    "DRConfig",
    "GameSpec",
    "Graph",
    "PlayerSpec",
    "Splitting",
    "StepSizes",
    "brute_force_vgne",
    "build_graph",
    "centralized_vgne",
    "constants",
    "graph_algebra",
    "kkt_residual",
    "lemma1_step_sizes",
    "lemma4_bound",
    "random_experiment_graph",
    "sample_instance",
    "verify_vi",
]
