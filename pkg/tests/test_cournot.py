import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnedr.cournot import (
    CournotInstance,
    InvalidInterval,
    NonDiagonalH,
    assemble_F,
    assumption_a_rho,
    constants,
    extended_matrix,
    extended_monotone,
    lemma4_bound,
    projected_gradient_box_qp,
    quadratic_box_argmin,
    sample_instance,
)
from gnedr.game import pseudogradient
from gnedr.graph import build_graph, graph_algebra, random_experiment_graph


def scalar_instance(Q=1.0, q=0.1, sigma=0.5, w=2.0, upper=10.0, b=5.0):
    return CournotInstance(
        Q=(np.array([Q]),), q=(np.array([q]),), upper=(np.array([upper]),),
        markets=(np.array([0]),), w=np.array([w]), sigma=np.array([sigma]), b=np.array([b]),
    )


def test_lemma4_bound_reference_constants():
    # constants and the resulting bound as reported for the reference instance
    assert lemma4_bound(2.6513, 10.6646, 4.7084, 0.4701) == pytest.approx(114.8432, abs=0.01)


def test_scalar_assembly_by_hand():
    # dJ/dx for x'Qx + qx - (w - s x) x is 2Qx + q - w + 2 s x
    M, c = assemble_F(scalar_instance())
    np.testing.assert_allclose(M, [[3.0]])
    np.testing.assert_allclose(c, [-1.9])


def test_scalar_constants_closed_form():
    # eta = theta1 = theta2 = 3, so the bound is (2/s)(36/12 + 3) = 12/s
    g = build_graph(2, [(1, 2)])
    c = constants(scalar_instance(), g)
    assert (c.eta, c.theta1, c.theta2) == pytest.approx((3.0, 3.0, 3.0))
    assert c.rho_mu_bound == pytest.approx(12.0 / graph_algebra(g).sigma1)


def test_sampler_is_deterministic_and_valid():
    a = sample_instance(5, 6, 4, n_range=(1, 3))
    b = sample_instance(5, 6, 4, n_range=(1, 3))
    assert a.to_dict() == b.to_dict()
    for i in range(a.N):
        Ai = a.A_block(i)
        assert np.all(Ai.sum(axis=0) == 1)  # one market per column
        assert np.linalg.matrix_rank(Ai) == Ai.shape[1]
        assert np.all(a.Q[i] >= 1) and np.all(a.Q[i] <= 1.5)
        assert np.all(a.upper[i] >= 0.2) and np.all(a.upper[i] <= 0.5)
    assert np.all((a.b >= 0.5) & (a.b <= 1)) and np.all((a.w >= 2) & (a.w <= 4))
    assert np.all((a.sigma >= 0.5) & (a.sigma <= 0.7))


def test_degenerate_scalar_sample():
    inst = sample_instance(0, 1, 1, n_range=(1, 1))
    assert inst.n == 1 and 1 <= inst.Q[0][0] <= 1.5
    np.testing.assert_array_equal(inst.A, [[1.0]])


def test_invalid_intervals():
    with pytest.raises(InvalidInterval):
        sample_instance(0, 2, 2, intervals={"b": (1.0, 0.5)})
    with pytest.raises(InvalidInterval):
        sample_instance(0, 2, 2, n_range=(2, 3))


def test_instance_dict_roundtrip():
    inst = sample_instance(2, 4, 3, n_range=(1, 3))
    back = CournotInstance.from_dict(inst.to_dict())
    assert back.to_dict() == inst.to_dict()


def test_disjoint_markets_give_block_diagonal_M():
    inst = CournotInstance(
        Q=(np.array([1.0]), np.array([1.2])), q=(np.array([0.1]), np.array([0.2])),
        upper=(np.array([0.3]), np.array([0.4])), markets=(np.array([0]), np.array([1])),
        w=np.array([2.0, 3.0]), sigma=np.array([0.5, 0.6]), b=np.array([1.0, 1.0]),
    )
    M, _ = assemble_F(inst)
    assert M[0, 1] == 0 and M[1, 0] == 0


def test_extended_matrix_matches_kron_selection():
    inst = sample_instance(3, 3, 3, n_range=(1, 2))
    M, _ = assemble_F(inst)
    n, N = inst.n, inst.N
    owner = np.repeat(np.arange(N), inst.sizes)
    R = np.zeros((n, N * n))
    R[np.arange(n), owner * n + np.arange(n)] = 1.0
    np.testing.assert_allclose(extended_matrix(M, owner, N), R @ np.kron(np.eye(N), M))


def test_constants_invariants_and_theta_relation():
    inst = sample_instance(7, 5, 4, n_range=(1, 3))
    g = random_experiment_graph(7, 5, 2)
    c = constants(inst, g)
    assert 0 < c.eta <= c.theta1
    assert c.theta2 > 0 and c.rho_mu_bound > 0
    assert c.theta1 <= np.sqrt(inst.N) * c.theta2 + 1e-12


@settings(max_examples=50, deadline=None)
@given(eta=st.floats(0.1, 5), t1=st.floats(0.1, 20), t2=st.floats(0.1, 20), s=st.floats(0.05, 4),
       f=st.floats(1.01, 3))
def test_bound_monotonicity(eta, t1, t2, s, f):
    base = lemma4_bound(eta, t1, t2, s)
    assert lemma4_bound(eta * f, t1, t2, s) <= base
    assert lemma4_bound(eta, t1, t2, s * f) <= base
    assert lemma4_bound(eta, t1 * f, t2, s) >= base
    assert lemma4_bound(eta, t1, t2 * f, s) >= base


def test_quadratic_box_argmin_examples():
    assert quadratic_box_argmin(np.array([2.0]), np.array([-2.0]), 0, 10)[0] == pytest.approx(1.0)
    assert quadratic_box_argmin(np.array([2.0]), np.array([2.0]), 0, 10)[0] == 0.0


def test_quadratic_box_argmin_vs_projected_gradient(rng):
    for _ in range(20):
        H = rng.uniform(0.5, 3, 5)
        g = rng.normal(size=5)
        lo, hi = np.zeros(5), rng.uniform(0.2, 1, 5)
        v = quadratic_box_argmin(H, g, lo, hi)
        np.testing.assert_allclose(v, projected_gradient_box_qp(np.diag(H), g, lo, hi), atol=1e-9)
        np.testing.assert_allclose(v, np.clip(v - (H * v + g), lo, hi), atol=1e-10)


def test_nondiagonal_H_warns_and_solves(rng):
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([-1.0, -1.0])
    with pytest.warns(NonDiagonalH):
        v = quadratic_box_argmin(H, g, np.zeros(2), np.ones(2))
    np.testing.assert_allclose(v, np.linalg.solve(H, -g), atol=1e-9)


@pytest.mark.parametrize("strong", [False, True])
def test_assumption_a_rho_certifies_and_is_minimal(strong):
    # strong price coupling with cheap production pushes rho above 2
    iv = {"sigma": (5.0, 7.0), "Q": (0.01, 0.02)} if strong else None
    for seed in range(4):
        inst = sample_instance(seed, 4, 3, n_range=(1, 2), intervals=iv)
        g = random_experiment_graph(seed, 4, 1)
        M, _ = assemble_F(inst)
        owner = np.repeat(np.arange(inst.N), inst.sizes)
        L = graph_algebra(g).laplacian
        rho = assumption_a_rho(inst, g)
        assert rho >= 2
        assert extended_monotone(M, owner, inst.N, L, rho)
        assert rho > 2 or not strong
        if rho > 2:
            assert not extended_monotone(M, owner, inst.N, L, rho - 1e-2)


def test_assumption_a_rho_two_scalar_players():
    inst = sample_instance(0, 2, 1, n_range=(1, 1))
    g = random_experiment_graph(0, 2, 0)
    assert np.isfinite(assumption_a_rho(inst, g))


def test_game_oracles_agree_with_assembled_F(rng):
    inst = sample_instance(9, 4, 4, n_range=(1, 4))
    game = inst.to_game()
    M, c = assemble_F(inst)
    for _ in range(100):
        x = rng.uniform(0, 0.5, inst.n)
        np.testing.assert_allclose(pseudogradient(game, x), M @ x + c, atol=1e-12)


def test_no_warning_on_diagonal_path():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        quadratic_box_argmin(np.diag([1.0, 2.0]), np.ones(2), np.zeros(2), np.ones(2))
