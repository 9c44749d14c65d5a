import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnedr.cournot import sample_instance
from gnedr.game import (
    AugmentedState,
    CustomSplitSumMismatch,
    embed_own,
    extended_pseudogradient,
    kkt_residual,
    pseudogradient,
    select_own,
    split_b,
)


@pytest.fixture
def game():
    return sample_instance(4, 3, 4, n_range=(1, 3)).to_game()


def test_block_bookkeeping(game):
    sizes = [p.n for p in game.players]
    assert list(np.diff(game.offsets)) == sizes
    assert game.A.shape == (game.m, game.n)
    assert game.own_mask.sum() == game.n
    v = np.arange(game.n, dtype=float)
    for i in range(game.N):
        np.testing.assert_array_equal(select_own(game, v, i), v[game.own_slice(i)])
        e = embed_own(game, select_own(game, v, i), i)
        assert e.sum() == v[game.own_slice(i)].sum()
        assert game.others(i, v).size == game.n - sizes[i]


def test_pseudogradient_matches_affine_form(game, rng):
    for _ in range(20):
        x = rng.uniform(0, 1, game.n)
        np.testing.assert_allclose(pseudogradient(game, x), game.affine.M @ x + game.affine.c, atol=1e-12)


def test_extended_pseudogradient_at_consensus_is_pseudogradient(game, rng):
    x = rng.uniform(0, 1, game.n)
    np.testing.assert_allclose(extended_pseudogradient(game, np.tile(x, (game.N, 1))), pseudogradient(game, x))


def test_pseudogradient_rejects_nonfinite(game):
    x = np.full(game.n, np.nan)
    with pytest.raises(ValueError):
        pseudogradient(game, x)


def test_own_subgradient_matches_finite_differences(game, rng):
    x = rng.uniform(0.1, 0.4, game.n)
    h = 1e-6
    for i, p in enumerate(game.players):
        sl = game.own_slice(i)
        rest = game.others(i, x)
        g = p.own_subgradient(x[sl], rest)
        for j in range(p.n):
            e = np.zeros(p.n)
            e[j] = h
            fd = (p.objective(x[sl] + e, rest) - p.objective(x[sl] - e, rest)) / (2 * h)
            assert g[j] == pytest.approx(fd, abs=1e-7)


def test_local_argmin_optimality(game, rng):
    for i, p in enumerate(game.players):
        rest = rng.uniform(0, 0.5, game.n - p.n)
        lin = rng.normal(size=p.n)
        center = rng.normal(size=p.n)
        v = p.local_argmin(rest, lin, center, 7.0)
        grad = p.own_subgradient(v, rest) + lin + 7.0 * (v - center)
        np.testing.assert_allclose(v, p.project_omega(v - 0.01 * grad), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=4), st.integers(1, 30))
def test_uniform_split_sums_exactly(b, N):
    out = split_b(np.array(b), N)
    assert np.array_equal(out.sum(axis=0), np.array(b))


def test_split_schemes():
    b = np.array([1.0, 2.0])
    np.testing.assert_array_equal(split_b(b, 3, "first-player"), [[1, 2], [0, 0], [0, 0]])
    np.testing.assert_array_equal(split_b(b, 2, [[0.25, 1.5], [0.75, 0.5]]), [[0.25, 1.5], [0.75, 0.5]])
    with pytest.raises(CustomSplitSumMismatch):
        split_b(b, 2, [[0.5, 1.0], [0.4, 1.0]])
    with pytest.raises(ValueError):
        split_b(b, 2, "nope")


def test_kkt_residual_components(game):
    x = np.zeros(game.n)
    lam = np.zeros(game.m)
    r = kkt_residual(game, x, lam)
    assert r.primal == 0 and r.dual == 0 and r.compl == 0
    assert r.stationarity > 0  # F(0) = c < 0 pushes production up
    r = kkt_residual(game, x, -np.ones(game.m))
    assert r.dual == pytest.approx(np.sqrt(game.m))
    assert r.max() == max(r)


def test_augmented_state_flat_roundtrip(rng):
    s = AugmentedState(*(rng.normal(size=sh) for sh in [(3, 4), (3, 2), (5, 4), (5, 2)]))
    back = AugmentedState.from_flat(s.flatten(), 3, 5, 4, 2)
    for a, b in zip(s.parts(), back.parts()):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        AugmentedState.from_flat(np.zeros(3), 3, 5, 4, 2)
    d = (2.0 * s - s) + s * 0.0
    np.testing.assert_array_equal(d.flatten(), s.flatten())
