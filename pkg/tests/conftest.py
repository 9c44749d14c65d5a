import numpy as np
import pytest

from gnedr.cournot import constants, sample_instance
from gnedr.game import AugmentedState
from gnedr.graph import random_experiment_graph
from gnedr.splitting import Splitting, lemma1_step_sizes

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_problem(seed, N, m, n_range=(1, 2), chords=None, rho_z=1.0, margin=0.05):
    inst = sample_instance(seed, N, m, n_range=n_range)
    graph = random_experiment_graph(seed, N, (N - 2) if chords is None else chords)
    game = inst.to_game()
    steps = lemma1_step_sizes(game, graph, constants(inst, graph).rho_mu_bound, rho_z, margin)
    return inst, graph, game, steps


def random_state(solver: Splitting, rng, scale=1.0) -> AugmentedState:
    return AugmentedState(*(scale * rng.normal(size=a.shape) for a in solver.zeros().parts()))


@pytest.fixture
def small_problem():
    return make_problem(1, 4, 3, n_range=(1, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
