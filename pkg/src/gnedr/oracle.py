"""Reference v-GNE solvers independent of the distributed iteration.

``centralized_vgne`` is a projected primal-dual method on the full profile;
``brute_force_vgne`` minimizes the VI gap over a grid for tiny games;
``verify_vi`` probes the VI inequality at random feasible points.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .game import GameSpec, KKTResidual, kkt_residual, pseudogradient

log = logging.getLogger(__name__)

__all__ = [
    "NoConvergence",
    "GridTooCoarse",
    "InfeasiblePoint",
    "VacuousCheck",
    "OracleSolution",
    "default_oracle_step",
    "centralized_vgne",
    "brute_force_vgne",
    "vi_gap",
    "polytope_vertices",
    "verify_vi",
]


class NoConvergence(RuntimeError):
    pass


class GridTooCoarse(RuntimeError):
    pass


class InfeasiblePoint(ValueError):
    pass


class VacuousCheck(UserWarning):
    pass


@dataclass(frozen=True)
class OracleSolution:
    x_star: np.ndarray
    lambda_star: np.ndarray
    certificate: KKTResidual
    iterations: int
    history: tuple = ()  # max KKT residual every 16 iterations


def _F(game: GameSpec, x: np.ndarray) -> np.ndarray:
    if game.affine is not None:
        return game.affine.M @ x + game.affine.c
    return pseudogradient(game, x)


def _box(game: GameSpec):
    if game.affine is not None:
        lo = np.broadcast_to(game.affine.lower, (game.n,)).astype(float)
        hi = np.broadcast_to(game.affine.upper, (game.n,)).astype(float)
        return lo, hi
    # probe the projections for their bounds
    lo = game.project_omega(np.full(game.n, -1e300))
    hi = game.project_omega(np.full(game.n, 1e300))
    return lo, hi


def default_oracle_step(game: GameSpec) -> float:
    """``min(eta / theta1^2, 0.5 / ||A||)`` for affine games, 1e-2 otherwise."""
    normA = np.linalg.norm(game.A, 2)
    cap = 0.5 / normA if normA > 0 else np.inf
    if game.affine is None:
        return min(1e-2, cap)
    M = game.affine.M
    eta = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
    if eta <= 0:
        raise ValueError("pseudogradient is not strongly monotone")
    return float(min(eta / np.linalg.norm(M, 2) ** 2, cap))


def centralized_vgne(game: GameSpec, step: float | None = None, tol: float = 1e-8,
                     max_iters: int = 1_000_000, x0=None, lam0=None) -> OracleSolution:
    """Projected primal-dual iteration with an over-relaxed primal term.

    ``x+ = P_Omega(x - s (F(x) + A' lam))``,
    ``lam+ = max(0, lam + s (A (2 x+ - x) - b))``, stopped once every KKT
    residual component is at most ``tol``.
    """
    s = default_oracle_step(game) if step is None else float(step)
    if s <= 0:
        raise ValueError("step must be positive")
    A, b = game.A, game.b
    x = np.zeros(game.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    lam = np.zeros(game.m) if lam0 is None else np.asarray(lam0, dtype=float).copy()
    x = game.project_omega(x)
    res = kkt_residual(game, x, lam, F=_F(game, x))
    history = [res.max()]
    k = 0
    while res.max() > tol:
        if k >= max_iters:
            raise NoConvergence(f"centralized solver stopped after {k} iterations with KKT residual {res}")
        xn = game.project_omega(x - s * (_F(game, x) + A.T @ lam))
        lam = np.maximum(lam + s * (A @ (2.0 * xn - x) - b), 0.0)
        x = xn
        k += 1
        if k % 16 == 0 or k == max_iters:
            res = kkt_residual(game, x, lam, F=_F(game, x))
            history.append(res.max())
    res = kkt_residual(game, x, lam, F=_F(game, x))
    log.debug("centralized oracle converged in %d iterations", k)
    return OracleSolution(x, lam, res, k, tuple(history))


def _feasible_grid(game: GameSpec, h: float):
    lo, hi = _box(game)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("brute force needs bounded boxes")
    axes = [np.unique(np.append(np.arange(l, u, h), u)) for l, u in zip(lo, hi)]
    if min(a.size for a in axes) < 3:
        raise GridTooCoarse(f"h = {h} leaves fewer than 3 grid points along some box axis")
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    feas = np.all(pts @ game.A.T <= game.b + 1e-12, axis=1)
    return pts[feas], lo, hi


def polytope_vertices(game: GameSpec, tol: float = 1e-12) -> np.ndarray:
    """Vertices of ``{lo <= x <= hi, A x <= b}`` by enumerating active sets."""
    lo, hi = _box(game)
    n = game.n
    G = np.vstack([-np.eye(n), np.eye(n), game.A])
    h = np.concatenate([-lo, hi, game.b])
    out = []
    for rows in itertools.combinations(range(G.shape[0]), n):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, h[list(rows)])
        if np.all(G @ v <= h + tol * (1 + np.abs(h))):
            out.append(v)
    if not out:
        raise ValueError("feasible set is empty")
    return np.unique(np.round(np.array(out), 14), axis=0)


def vi_gap(F: np.ndarray, X: np.ndarray, Z: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """``max(0, max_z <F_k, x_k - z>)`` for every row ``k`` of ``X``."""
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        Fk = F[s : s + chunk]
        inner = np.einsum("ij,ij->i", Fk, X[s : s + chunk])
        out[s : s + chunk] = np.maximum(inner - (Fk @ Z.T).min(axis=1), 0.0)
    return out


def brute_force_vgne(game: GameSpec, h: float = 1e-3, max_points: int = 40_000,
                     refine_passes: int = 12) -> np.ndarray:
    """Grid point of the feasible set with the smallest VI gap, then refined.

    The gap of ``x`` is ``max_z <F(x), x - z>`` over the feasible set.  A
    linear function attains its minimum over the polytope at a vertex, so
    the inner maximum is taken over the grid together with all vertices,
    which makes it exact.  After the global grid search, ``refine_passes``
    local grids (21 points per coordinate, each pass 5x finer) are searched
    around the incumbent.  Raises ``GridTooCoarse`` when a box axis holds
    fewer than 3 grid points, fewer than ``n + 1`` grid points are feasible,
    or the grid minimum exceeds ``10 h (1 + ||F(x)||_1)``.
    """
    if game.n > 3:
        raise ValueError(f"brute force is limited to n <= 3, got n = {game.n}")
    Z, lo, hi = _feasible_grid(game, h)
    if Z.shape[0] < game.n + 1:
        raise GridTooCoarse(f"only {Z.shape[0]} feasible grid points; refine h")
    if Z.shape[0] > max_points:
        raise ValueError(f"{Z.shape[0]} grid points exceed max_points={max_points}; increase h")
    V = polytope_vertices(game)

    def F_rows(X):
        if game.affine is not None:
            return X @ game.affine.M.T + game.affine.c
        return np.array([_F(game, x) for x in X])

    gaps = vi_gap(F_rows(Z), Z, np.vstack([Z, V]))
    k = int(np.argmin(gaps))
    x, best = Z[k].copy(), gaps[k]
    if best > 10 * h * (1 + np.abs(_F(game, x)).sum()):
        raise GridTooCoarse(f"best grid gap {best:.3e} is large for h = {h}")
    step = h
    offsets = np.array(list(itertools.product(np.linspace(-1.0, 1.0, 21), repeat=game.n)))
    for _ in range(refine_passes):
        P = np.clip(x + 2 * step * offsets, lo, hi)
        P = P[np.all(P @ game.A.T <= game.b + 1e-12, axis=1)]
        g = vi_gap(F_rows(P), P, V)
        k = int(np.argmin(g))
        if g[k] < best:
            x, best = P[k].copy(), g[k]
        step /= 5.0
    return x


def verify_vi(game: GameSpec, x, num_probes: int = 1000, seed=0, feas_tol: float = 1e-7) -> float:
    """Largest ``<F(x), x - z>`` over random feasible probes ``z``.

    Probes are drawn uniformly in the box and kept when ``A z <= b``.
    """
    x = np.asarray(x, dtype=float)
    lo, hi = _box(game)
    if np.any(x < lo - feas_tol) or np.any(x > hi + feas_tol) or np.any(game.A @ x > game.b + feas_tol):
        raise InfeasiblePoint("point lies outside the feasible set")
    if num_probes <= 0:
        warnings.warn("no probes requested; violation is vacuously 0", VacuousCheck, stacklevel=2)
        return 0.0
    rng = np.random.default_rng(seed)
    F = _F(game, x)
    probes, draws = [], 0
    while len(probes) < num_probes:
        if draws >= 100_000:
            raise InfeasiblePoint(f"only {len(probes)} feasible probes in {draws} draws")
        batch = rng.uniform(lo, hi, size=(min(num_probes, 4096), game.n))
        draws += batch.shape[0]
        probes.extend(batch[np.all(batch @ game.A.T <= game.b, axis=1)])
    Z = np.asarray(probes[:num_probes])
    return float(np.max((x - Z) @ F))
