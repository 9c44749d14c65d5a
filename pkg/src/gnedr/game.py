"""Games with affine coupling constraints and their first-order objects.

Each player ``i`` controls ``x_i`` in a closed convex set ``Omega_i`` and
minimizes ``J_i(x_i; x_-i)`` subject to the shared budget ``A x <= b``.
Player oracles receive the other players' decisions as one concatenated
vector ``x_-i`` (blocks in player order).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple, Optional

import numpy as np

__all__ = [
    "PlayerSpec",
    "AffineForm",
    "GameSpec",
    "AugmentedState",
    "KKTResidual",
    "CustomSplitSumMismatch",
    "select_own",
    "embed_own",
    "pseudogradient",
    "extended_pseudogradient",
    "split_b",
    "kkt_residual",
    "box_projector",
]


class CustomSplitSumMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PlayerSpec:
    """Oracles describing one player.

    ``local_argmin(x_minus_i, linear, center, weight)`` must return the
    minimizer over ``Omega_i`` of
    ``J_i(v; x_minus_i) + linear @ v + weight/2 * ||v - center||^2``.
    """

    n: int
    A: np.ndarray
    project_omega: Callable[[np.ndarray], np.ndarray]
    objective: Callable[[np.ndarray, np.ndarray], float]
    own_subgradient: Callable[[np.ndarray, np.ndarray], np.ndarray]
    local_argmin: Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True, eq=False)
class AffineForm:
    """``F(x) = M x + c`` together with box bounds ``lower <= x <= upper``.

    Games that carry this structure (and whose own-variable Hessian blocks
    ``M[own_i, own_i]`` are diagonal) can use the compiled iteration kernels.
    """

    M: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True, eq=False)
class GameSpec:
    players: tuple[PlayerSpec, ...]
    b: np.ndarray
    b_split: np.ndarray
    affine: Optional[AffineForm] = None

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        split = np.asarray(self.b_split, dtype=float)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "b_split", split)
        if split.shape != (len(self.players), b.size):
            raise ValueError(f"b_split has shape {split.shape}, expected {(self.N, b.size)}")
        if not np.array_equal(split.sum(axis=0), b):
            raise CustomSplitSumMismatch("rows of b_split do not sum to b exactly")
        for k, p in enumerate(self.players):
            if p.A.shape != (b.size, p.n):
                raise ValueError(f"player {k}: A has shape {p.A.shape}, expected {(b.size, p.n)}")

    @property
    def N(self) -> int:
        return len(self.players)

    @property
    def m(self) -> int:
        return self.b.size

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([p.n for p in self.players])]).astype(np.int64)

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    def own_slice(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    @cached_property
    def A(self) -> np.ndarray:
        return np.hstack([p.A for p in self.players])

    @cached_property
    def owner(self) -> np.ndarray:
        """Player index owning each coordinate of the decision profile."""
        return np.repeat(np.arange(self.N), [p.n for p in self.players])

    @cached_property
    def own_mask(self) -> np.ndarray:
        """Boolean ``(N, n)`` mask, True on player ``i``'s own block of row ``i``."""
        return self.owner[None, :] == np.arange(self.N)[:, None]

    def others(self, i: int, v: np.ndarray) -> np.ndarray:
        sl = self.own_slice(i)
        return np.concatenate([v[: sl.start], v[sl.stop :]])

    def project_omega(self, x: np.ndarray) -> np.ndarray:
        if self.affine is not None:
            return np.clip(x, self.affine.lower, self.affine.upper)
        out = np.empty(self.n)
        for i, p in enumerate(self.players):
            sl = self.own_slice(i)
            out[sl] = p.project_omega(x[sl])
        return out


@dataclass
class AugmentedState:
    """Stacked iterate ``[y; lambda; mu; z]``.

    ``y[i]`` is player ``i``'s estimate of the whole profile, ``lam[i]`` its
    multiplier estimate; ``mu[e]`` and ``z[e]`` live on edge ``e``.
    """

    y: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    z: np.ndarray

    @classmethod
    def zeros(cls, N: int, E: int, n: int, m: int) -> "AugmentedState":
        return cls(np.zeros((N, n)), np.zeros((N, m)), np.zeros((E, n)), np.zeros((E, m)))

    @classmethod
    def zeros_like_game(cls, game: GameSpec, num_edges: int) -> "AugmentedState":
        return cls.zeros(game.N, num_edges, game.n, game.m)

    @property
    def shapes(self):
        return (self.y.shape, self.lam.shape, self.mu.shape, self.z.shape)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.y.ravel(), self.lam.ravel(), self.mu.ravel(), self.z.ravel()])

    @classmethod
    def from_flat(cls, vec, N: int, E: int, n: int, m: int) -> "AugmentedState":
        vec = np.asarray(vec, dtype=float)
        sizes = np.cumsum([N * n, N * m, E * n, E * m])
        if vec.size != sizes[-1]:
            raise ValueError(f"flat state has {vec.size} entries, expected {sizes[-1]}")
        y, lam, mu, z, _ = np.split(vec, sizes)
        return cls(y.reshape(N, n), lam.reshape(N, m), mu.reshape(E, n), z.reshape(E, m))

    def copy(self) -> "AugmentedState":
        return AugmentedState(self.y.copy(), self.lam.copy(), self.mu.copy(), self.z.copy())

    def parts(self):
        return (self.y, self.lam, self.mu, self.z)

    def __add__(self, other):
        return AugmentedState(*(a + b for a, b in zip(self.parts(), other.parts())))

    def __sub__(self, other):
        return AugmentedState(*(a - b for a, b in zip(self.parts(), other.parts())))

    def __mul__(self, s: float):
        return AugmentedState(*(s * a for a in self.parts()))

    __rmul__ = __mul__


class KKTResidual(NamedTuple):
    stationarity: float
    primal: float
    dual: float
    compl: float

    def max(self) -> float:
        return max(self)


def box_projector(lower, upper) -> Callable[[np.ndarray], np.ndarray]:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return lambda v: np.clip(v, lower, upper)


def select_own(game: GameSpec, y_i: np.ndarray, i: int) -> np.ndarray:
    """``R_i y_i``: player ``i``'s own block of a full-profile vector."""
    return np.asarray(y_i)[game.own_slice(i)]


def embed_own(game: GameSpec, g: np.ndarray, i: int) -> np.ndarray:
    """``R_i^T g``: place ``g`` in player ``i``'s block, zeros elsewhere."""
    out = np.zeros(game.n)
    out[game.own_slice(i)] = g
    return out


def pseudogradient(game: GameSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("pseudogradient evaluated at a non-finite point")
    return np.concatenate(
        [p.own_subgradient(x[game.own_slice(i)], game.others(i, x)) for i, p in enumerate(game.players)]
    )


def extended_pseudogradient(game: GameSpec, ystack: np.ndarray) -> np.ndarray:
    """Player ``i``'s own subgradient evaluated at its own estimate ``y_i``."""
    ystack = np.asarray(ystack, dtype=float)
    if not np.all(np.isfinite(ystack)):
        raise ValueError("extended pseudogradient evaluated at a non-finite stack")
    return np.concatenate(
        [
            p.own_subgradient(ystack[i, game.own_slice(i)], game.others(i, ystack[i]))
            for i, p in enumerate(game.players)
        ]
    )


def split_b(b, N: int, scheme="uniform") -> np.ndarray:
    """Split the budget into per-player shares ``b_i`` with ``sum_i b_i == b``.

    ``scheme`` is ``"uniform"``, ``"first-player"`` or an explicit list of
    shares.  The uniform split gives every player ``b / N`` and folds the
    floating-point remainder into the last share so the sum is exact.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if isinstance(scheme, str):
        out = np.zeros((N, b.size))
        if scheme == "uniform":
            out[:] = b / N
            out[-1] = b - out[:-1].sum(axis=0)
            # b - sum(rest) can still round; nudge until the column sums match
            for _ in range(8):
                err = b - out.sum(axis=0)
                if not np.any(err):
                    break
                out[-1] += err
        elif scheme == "first-player":
            out[0] = b
        else:
            raise ValueError(f"unknown split scheme {scheme!r}")
    else:
        out = np.asarray(scheme, dtype=float).reshape(N, b.size)
    if not np.array_equal(out.sum(axis=0), b):
        raise CustomSplitSumMismatch(
            f"shares sum to {out.sum(axis=0).tolist()}, budget is {b.tolist()}"
        )
    return out


def kkt_residual(game: GameSpec, x: np.ndarray, lam: np.ndarray, F: Optional[np.ndarray] = None) -> KKTResidual:
    """Scalar certificates for the v-GNE KKT system at ``(x, lam)``.

    ``F`` may be passed when the pseudogradient at ``x`` is already known.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if F is None:
        F = pseudogradient(game, x)
    A = game.A
    stat = np.linalg.norm(x - game.project_omega(x - (F + A.T @ lam)))
    slack = A @ x - game.b
    primal = np.linalg.norm(np.maximum(slack, 0.0))
    dual = np.linalg.norm(np.minimum(lam, 0.0))
    compl = abs(float(lam @ slack))
    return KKTResidual(float(stat), float(primal), float(dual), compl)
