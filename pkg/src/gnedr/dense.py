"""Dense matrices of the splitting, for verification on small problems.

Flat ordering is ``[y (N x n row-major); lam (N x m); mu (E x n); z (E x m)]``.
With ``P = blkdiag(rho_mu/2 L_n, rho_z/2 L_m, 0, 0)`` and the skew matrix
``D`` the two operators are

* ``A(w) = [R' F_ext(y) + N_Omega(y); b + N_+(lam); 0; 0] + (D + P) w``
* ``B(w) = (D + P) w``

and ``A + B`` is the full zero-finding operator.  Resolvents here are plain
linear solves (``B``) or block-wise affine variational inequalities (``A``,
affine games only), with no use of the sweep formulas.
"""

from __future__ import annotations

import numpy as np

from .cournot import extended_matrix
from .game import AugmentedState, GameSpec
from .graph import Graph, graph_algebra

__all__ = [
    "MAX_DENSE_DIM",
    "dense_dim",
    "selection_matrix",
    "lambda_r",
    "build_phi",
    "build_d",
    "build_p",
    "build_b",
    "solve_box_vi",
    "dense_resolvent_A",
    "dense_resolvent_B",
    "dense_dr_round",
    "dense_t_operator",
]

MAX_DENSE_DIM = 2000


def dense_dim(game: GameSpec, graph: Graph) -> int:
    return (game.N + graph.num_edges) * (game.n + game.m)


def _check_dim(game, graph):
    d = dense_dim(game, graph)
    if d > MAX_DENSE_DIM:
        raise ValueError(f"dense state dimension {d} exceeds {MAX_DENSE_DIM}")
    return d


def selection_matrix(game: GameSpec) -> np.ndarray:
    """``R``: picks each player's own block out of the stacked estimates."""
    n, N = game.n, game.N
    R = np.zeros((n, N * n))
    R[np.arange(n), game.owner * n + np.arange(n)] = 1.0
    return R


def lambda_r(game: GameSpec) -> np.ndarray:
    """``Lambda R``: block-diagonal ``A_i R_i``, shape ``(N m, N n)``."""
    N, n, m = game.N, game.n, game.m
    out = np.zeros((N * m, N * n))
    for i in range(N):
        sl = game.own_slice(i)
        out[i * m : (i + 1) * m, i * n + sl.start : i * n + sl.stop] = game.players[i].A
    return out


def _blocks(game, graph):
    N, E, n, m = game.N, graph.num_edges, game.n, game.m
    sizes = [N * n, N * m, E * n, E * m]
    idx = np.concatenate([[0], np.cumsum(sizes)])
    return [slice(idx[k], idx[k + 1]) for k in range(4)], idx[-1]


def build_phi(game: GameSpec, graph: Graph, steps) -> np.ndarray:
    _check_dim(game, graph)
    n, m = game.n, game.m
    alg = graph_algebra(graph)
    Bn, Bm = np.kron(alg.incidence, np.eye(n)), np.kron(alg.incidence, np.eye(m))
    Ln, Lm = np.kron(alg.laplacian, np.eye(n)), np.kron(alg.laplacian, np.eye(m))
    LR = lambda_r(game)
    (sy, sl, sm, sz), d = _blocks(game, graph)
    P = np.zeros((d, d))
    P[sy, sy] = np.diag(np.repeat(1 / steps.tau1, n)) - 0.5 * steps.rho_mu * Ln
    P[sl, sl] = np.diag(np.repeat(1 / steps.tau2, m)) - 0.5 * steps.rho_z * Lm
    P[sm, sm] = np.diag(np.repeat(1 / steps.tau3, n))
    P[sz, sz] = np.diag(np.repeat(1 / steps.tau4, m))
    P[sy, sl] = -0.5 * LR.T
    P[sy, sm] = -0.5 * Bn
    P[sl, sz] = -0.5 * Bm
    P[sl, sy] = P[sy, sl].T
    P[sm, sy] = P[sy, sm].T
    P[sz, sl] = P[sl, sz].T
    return P


def build_d(game: GameSpec, graph: Graph) -> np.ndarray:
    _check_dim(game, graph)
    n, m = game.n, game.m
    inc = graph_algebra(graph).incidence
    Bn, Bm = np.kron(inc, np.eye(n)), np.kron(inc, np.eye(m))
    LR = lambda_r(game)
    (sy, sl, sm, sz), d = _blocks(game, graph)
    D = np.zeros((d, d))
    D[sy, sl] = 0.5 * LR.T
    D[sy, sm] = 0.5 * Bn
    D[sl, sz] = 0.5 * Bm
    D[sl, sy] = -D[sy, sl].T
    D[sm, sy] = -D[sy, sm].T
    D[sz, sl] = -D[sl, sz].T
    return D


def build_p(game: GameSpec, graph: Graph, steps) -> np.ndarray:
    _check_dim(game, graph)
    alg = graph_algebra(graph)
    (sy, sl, _, _), d = _blocks(game, graph)
    P = np.zeros((d, d))
    P[sy, sy] = 0.5 * steps.rho_mu * np.kron(alg.laplacian, np.eye(game.n))
    P[sl, sl] = 0.5 * steps.rho_z * np.kron(alg.laplacian, np.eye(game.m))
    return P


def build_b(game: GameSpec, graph: Graph, steps) -> np.ndarray:
    """Matrix of the linear operator ``B = D + P``."""
    return build_d(game, graph) + build_p(game, graph, steps)


def solve_box_vi(G: np.ndarray, q: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                 tol: float = 1e-13, max_iters: int = 200_000) -> np.ndarray:
    """Solve ``x in [lower, upper]``, ``(x' - x)'(G x + q) >= 0`` for all ``x'``.

    ``G`` must have a positive definite symmetric part.  A projected fixed-point
    iteration locates the active set, then the free coordinates are solved
    exactly and the active set is corrected until it is consistent.
    """
    eta = np.linalg.eigvalsh(0.5 * (G + G.T))[0]
    if eta <= 0:
        raise ValueError("box VI matrix is not strongly monotone")
    alpha = eta / np.linalg.norm(G, 2) ** 2
    x = np.clip(np.zeros_like(q), lower, upper)
    for _ in range(max_iters):
        nxt = np.clip(x - alpha * (G @ x + q), lower, upper)
        done = np.max(np.abs(nxt - x)) <= 1e-9 * alpha * (1 + np.max(np.abs(x)))
        x = nxt
        if done:
            break
    for _ in range(50):
        at_lo = np.isclose(x, lower, rtol=0, atol=1e-12)
        at_hi = np.isclose(x, upper, rtol=0, atol=1e-12)
        fixed = at_lo | at_hi
        free = ~fixed
        y = x.copy()
        y[at_lo] = lower[at_lo]
        y[at_hi] = upper[at_hi]
        if free.any():
            rhs = -(q[free] + G[np.ix_(free, fixed)] @ y[fixed])
            y[free] = np.linalg.solve(G[np.ix_(free, free)], rhs)
        r = G @ y + q
        bad_free = free & ((y < lower - tol) | (y > upper + tol))
        bad_lo = at_lo & (r < -tol * (1 + np.abs(r).max()))
        bad_hi = at_hi & (r > tol * (1 + np.abs(r).max()))
        if not (bad_free.any() or bad_lo.any() or bad_hi.any()):
            return y
        # release bounds with the wrong multiplier sign, clamp violators
        y = np.clip(y, lower, upper)
        y[bad_lo] = np.minimum(lower[bad_lo] + 1e-6 * (1 + np.abs(lower[bad_lo])), upper[bad_lo])
        y[bad_hi] = np.maximum(upper[bad_hi] - 1e-6 * (1 + np.abs(upper[bad_hi])), lower[bad_hi])
        x = y
    raise RuntimeError("box VI active-set polish did not settle")


def _omega_bounds(game: GameSpec):
    aff = game.affine
    if aff is None:
        raise ValueError("dense resolvent of A needs an affine game")
    N, n = game.N, game.n
    lo = np.full((N, n), -np.inf)
    hi = np.full((N, n), np.inf)
    mask = game.own_mask
    lo[mask] = np.broadcast_to(aff.lower, (N, n))[mask]
    hi[mask] = np.broadcast_to(aff.upper, (N, n))[mask]
    return lo.ravel(), hi.ravel()


def _affine_parts(game: GameSpec, graph: Graph):
    """``J`` and ``k`` with ``A(w) = (J + D + P) w + k + normal cones``."""
    aff = game.affine
    (sy, sl, _, _), d = _blocks(game, graph)
    R = selection_matrix(game)
    J = np.zeros((d, d))
    J[sy, sy] = R.T @ extended_matrix(aff.M, game.owner, game.N)
    k = np.zeros(d)
    k[sy] = R.T @ aff.c
    k[sl] = game.b_split.ravel()
    return J, k


def dense_t_operator(game: GameSpec, graph: Graph, steps, w: AugmentedState) -> np.ndarray:
    """Single-valued part of ``A + B`` at ``w`` (normal cones dropped)."""
    J, k = _affine_parts(game, graph)
    Bm = build_b(game, graph, steps)
    v = w.flatten()
    return (J + 2 * Bm) @ v + k


def dense_resolvent_B(game: GameSpec, graph: Graph, steps, u: AugmentedState) -> AugmentedState:
    Phi = build_phi(game, graph, steps)
    v = np.linalg.solve(Phi + build_b(game, graph, steps), Phi @ u.flatten())
    return AugmentedState.from_flat(v, game.N, graph.num_edges, game.n, game.m)


def dense_resolvent_A(game: GameSpec, graph: Graph, steps, wt: AugmentedState) -> AugmentedState:
    """Solve ``0 in (Phi + J + D + P) w + k - Phi wt + N_C(w)`` block by block.

    The matrix is block lower-triangular, so the four blocks are solved in
    order, each as an affine box VI over its own constraint set.
    """
    Phi = build_phi(game, graph, steps)
    J, k = _affine_parts(game, graph)
    G = Phi + J + build_b(game, graph, steps)
    rhs = Phi @ wt.flatten() - k
    blocks, d = _blocks(game, graph)
    ylo, yhi = _omega_bounds(game)
    bounds = [
        (ylo, yhi),
        (np.zeros(blocks[1].stop - blocks[1].start), np.full(blocks[1].stop - blocks[1].start, np.inf)),
        (np.full(blocks[2].stop - blocks[2].start, -np.inf), np.full(blocks[2].stop - blocks[2].start, np.inf)),
        (np.full(blocks[3].stop - blocks[3].start, -np.inf), np.full(blocks[3].stop - blocks[3].start, np.inf)),
    ]
    w = np.zeros(d)
    for b, (lo, hi) in enumerate(bounds):
        s = blocks[b]
        q = G[s, : s.start] @ w[: s.start] - rhs[s]
        Gb = G[s, s]
        if np.count_nonzero(Gb - np.diag(np.diag(Gb))) == 0:
            w[s] = np.clip(-q / np.diag(Gb), lo, hi)
        else:
            w[s] = solve_box_vi(Gb, q, lo, hi)
    return AugmentedState.from_flat(w, game.N, graph.num_edges, game.n, game.m)


def dense_dr_round(game: GameSpec, graph: Graph, steps, wt: AugmentedState, gamma: float = 0.5):
    omega = dense_resolvent_A(game, graph, steps, wt)
    v = dense_resolvent_B(game, graph, steps, 2.0 * omega - wt)
    return omega, wt + (2.0 * gamma) * (v - omega)
