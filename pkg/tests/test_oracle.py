import numpy as np
import pytest

from gnedr.cournot import CournotInstance, sample_instance
from gnedr.oracle import (
    GridTooCoarse,
    InfeasiblePoint,
    NoConvergence,
    VacuousCheck,
    brute_force_vgne,
    centralized_vgne,
    polytope_vertices,
    verify_vi,
)


def two_player(Q=(1.0, 1.0), q=(0.1, 0.1), upper=(2.0, 2.0), b=5.0, w=2.0, sigma=0.5):
    return CournotInstance(
        Q=tuple(np.array([v]) for v in Q), q=tuple(np.array([v]) for v in q),
        upper=tuple(np.array([v]) for v in upper), markets=(np.array([0]), np.array([0])),
        w=np.array([w]), sigma=np.array([sigma]), b=np.array([b]),
    ).to_game()


def test_unconstrained_solution_solves_linear_system():
    game = two_player()
    sol = centralized_vgne(game, tol=1e-12)
    M, c = game.affine.M, game.affine.c
    np.testing.assert_allclose(sol.x_star, np.linalg.solve(M, -c), atol=1e-8)
    assert np.all(sol.lambda_star == 0)
    assert sol.certificate.max() <= 1e-12


def test_symmetric_players_get_symmetric_solution():
    game = two_player()
    x = brute_force_vgne(game, h=0.02)
    assert x[0] == pytest.approx(x[1], abs=1e-9)


def test_binding_budget():
    # unconstrained solution has total 0.76 > b = 0.5
    game = two_player(b=0.5)
    sol = centralized_vgne(game, tol=1e-12)
    assert sol.lambda_star[0] > 0
    assert game.A @ sol.x_star == pytest.approx(game.b, abs=1e-9)
    xb = brute_force_vgne(game, h=0.005)
    assert np.max(np.abs(xb - sol.x_star)) <= max(1e-4, 2 * 0.005)


def test_starting_at_solution_does_not_move():
    game = sample_instance(3, 3, 2, n_range=(1, 2)).to_game()
    sol = centralized_vgne(game, tol=1e-10)
    again = centralized_vgne(game, tol=1e-10, x0=sol.x_star, lam0=sol.lambda_star)
    assert again.iterations == 0
    np.testing.assert_array_equal(again.x_star, sol.x_star)


def test_no_convergence_reports_residual():
    game = sample_instance(3, 3, 2, n_range=(1, 2)).to_game()
    with pytest.raises(NoConvergence, match="residual"):
        centralized_vgne(game, max_iters=3)


@pytest.mark.parametrize("seed", range(5))
def test_kkt_residual_decreases_late(seed):
    game = sample_instance(seed, 3, 2, n_range=(1, 2)).to_game()
    hist = np.array(centralized_vgne(game, tol=1e-10).history)
    tail = hist[len(hist) // 2 :]
    assert np.all(np.diff(tail) <= 1e-12)


def test_polytope_vertices_of_simplex_like_set():
    game = two_player(b=0.5, upper=(1.0, 1.0))
    V = polytope_vertices(game)
    expected = {(0.0, 0.0), (0.5, 0.0), (0.0, 0.5)}
    assert {tuple(np.round(v, 12)) for v in V} == expected


def test_brute_force_limits():
    game = sample_instance(0, 4, 2, n_range=(1, 1)).to_game()
    with pytest.raises(ValueError, match="n <= 3"):
        brute_force_vgne(game)
    with pytest.raises(GridTooCoarse, match="axis"):
        brute_force_vgne(two_player(), h=5.0)
    with pytest.raises(GridTooCoarse, match="feasible"):
        brute_force_vgne(two_player(b=0.01), h=0.5)


def test_verify_vi():
    game = sample_instance(2, 3, 2, n_range=(1, 1)).to_game()
    sol = centralized_vgne(game, tol=1e-12)
    assert verify_vi(game, sol.x_star, 2000) <= 1e-5
    # interior point with F != 0 is not a solution
    x = 0.5 * game.affine.upper * np.ones(game.n) * 0.1
    assert verify_vi(game, x, 2000) > 0
    with pytest.warns(VacuousCheck):
        assert verify_vi(game, x, 0) == 0.0
    with pytest.raises(InfeasiblePoint):
        verify_vi(game, -np.ones(game.n))
