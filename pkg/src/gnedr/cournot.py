"""Networked Nash-Cournot production games.

Firm ``i`` ships ``x_i`` (one entry per market it serves) and minimizes
``x_i' Q_i x_i + q_i' x_i - (w - Sigma A x)' A_i x_i`` over the box
``0 <= x_i <= upper_i`` subject to the market capacities ``A x <= b``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .game import AffineForm, GameSpec, PlayerSpec, box_projector, split_b
from .graph import Graph, graph_algebra

__all__ = [
    "InvalidInterval",
    "NonPositiveEta",
    "SearchCeilingExceeded",
    "NonDiagonalH",
    "DEFAULT_INTERVALS",
    "CournotInstance",
    "CournotConstants",
    "sample_instance",
    "assemble_F",
    "extended_matrix",
    "constants",
    "lemma4_bound",
    "quadratic_box_argmin",
    "projected_gradient_box_qp",
    "assumption_a_rho",
    "lemma4_constants",
    "extended_monotone",
]

DEFAULT_INTERVALS = {
    "b": (0.5, 1.0),
    "w": (2.0, 4.0),
    "sigma": (0.5, 0.7),
    "Q": (1.0, 1.5),
    "q": (0.1, 0.6),
    "upper": (0.2, 0.5),
}


class InvalidInterval(ValueError):
    pass


class NonPositiveEta(ValueError):
    pass


class SearchCeilingExceeded(RuntimeError):
    pass


class NonDiagonalH(UserWarning):
    """Emitted when the box QP solver falls back to the iterative path."""


@dataclass(frozen=True, eq=False)
class CournotInstance:
    Q: tuple[np.ndarray, ...]  # diagonals of Q_i
    q: tuple[np.ndarray, ...]
    upper: tuple[np.ndarray, ...]
    markets: tuple[np.ndarray, ...]  # market index served by each column of A_i
    w: np.ndarray
    sigma: np.ndarray  # diagonal of Sigma
    b: np.ndarray

    def __post_init__(self):
        m = self.w.size
        if self.sigma.size != m or self.b.size != m:
            raise ValueError("w, sigma and b must all have one entry per market")
        if not (np.all(self.w > 0) and np.all(self.sigma > 0) and np.all(self.b > 0)):
            raise ValueError("w, sigma and b must be entrywise positive")
        for i, (Qi, qi, ui, mk) in enumerate(zip(self.Q, self.q, self.upper, self.markets)):
            ni = Qi.size
            if not (qi.size == ui.size == mk.size == ni and ni > 0):
                raise ValueError(f"player {i}: inconsistent block sizes")
            if np.any(Qi <= 0) or np.any(ui <= 0):
                raise ValueError(f"player {i}: Q and box bounds must be positive")
            if len(set(mk.tolist())) != ni or mk.min() < 0 or mk.max() >= m:
                raise ValueError(f"player {i}: markets must be distinct indices in 0..{m - 1}")

    @property
    def N(self) -> int:
        return len(self.Q)

    @property
    def m(self) -> int:
        return self.w.size

    @property
    def sizes(self) -> list[int]:
        return [Qi.size for Qi in self.Q]

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def A_block(self, i: int) -> np.ndarray:
        Ai = np.zeros((self.m, self.Q[i].size))
        Ai[self.markets[i], np.arange(self.Q[i].size)] = 1.0
        return Ai

    @property
    def A(self) -> np.ndarray:
        return np.hstack([self.A_block(i) for i in range(self.N)])

    def to_dict(self) -> dict:
        tolist = lambda seq: [np.asarray(v).tolist() for v in seq]
        return {
            "Q": tolist(self.Q),
            "q": tolist(self.q),
            "upper": tolist(self.upper),
            "markets": tolist(self.markets),
            "w": self.w.tolist(),
            "sigma": self.sigma.tolist(),
            "b": self.b.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CournotInstance":
        arrs = lambda key, dt=float: tuple(np.asarray(v, dtype=dt) for v in d[key])
        return cls(
            Q=arrs("Q"),
            q=arrs("q"),
            upper=arrs("upper"),
            markets=arrs("markets", np.int64),
            w=np.asarray(d["w"], dtype=float),
            sigma=np.asarray(d["sigma"], dtype=float),
            b=np.asarray(d["b"], dtype=float),
        )

    def to_game(self, b_split="uniform") -> GameSpec:
        A = self.A
        offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        players = []
        for i in range(self.N):
            cols = np.arange(offsets[i], offsets[i + 1])
            rest = np.setdiff1d(np.arange(self.n), cols)
            players.append(_cournot_player(self, i, A[:, cols], A[:, rest]))
        M, c = assemble_F(self)
        lower = np.zeros(self.n)
        upper = np.concatenate(self.upper)
        return GameSpec(
            players=tuple(players),
            b=self.b,
            b_split=split_b(self.b, self.N, b_split),
            affine=AffineForm(M, c, lower, upper),
        )


def _cournot_player(inst: CournotInstance, i: int, Ai: np.ndarray, A_rest: np.ndarray) -> PlayerSpec:
    Qd, qi, ub = inst.Q[i], inst.q[i], inst.upper[i]
    w, sig = inst.w, inst.sigma
    own_curv = sig[inst.markets[i]]  # diagonal of A_i' Sigma A_i
    zero = np.zeros_like(ub)

    def objective(xi, x_rest):
        total = Ai @ xi + A_rest @ x_rest
        return float(xi @ (Qd * xi) + qi @ xi - (w - sig * total) @ (Ai @ xi))

    def own_subgradient(xi, x_rest):
        total = Ai @ xi + A_rest @ x_rest
        return 2.0 * Qd * xi + qi - Ai.T @ (w - sig * total) + own_curv * xi

    def local_argmin(x_rest, linear, center, weight):
        s = A_rest @ x_rest
        H = 2.0 * Qd + 2.0 * own_curv + weight
        g = qi - Ai.T @ w + Ai.T @ (sig * s) + linear - weight * center
        return quadratic_box_argmin(H, g, zero, ub)

    return PlayerSpec(
        n=Qd.size,
        A=Ai,
        project_omega=box_projector(zero, ub),
        objective=objective,
        own_subgradient=own_subgradient,
        local_argmin=local_argmin,
    )


def _check_interval(name, lo_hi):
    lo, hi = (float(v) for v in lo_hi)
    if lo > hi:
        raise InvalidInterval(f"interval {name!r} has lower {lo} > upper {hi}")
    return lo, hi


def sample_instance(seed, N: int, m: int, n_range=(2, 6), intervals=None) -> CournotInstance:
    """Draw a random Cournot instance.

    Draw order (fixed, so a seed pins the instance): ``b``, ``w``, ``sigma``,
    then per player ``n_i``, its markets, ``Q_i``, ``q_i``, box bounds.
    """
    iv = dict(DEFAULT_INTERVALS)
    iv.update(intervals or {})
    iv = {k: _check_interval(k, v) for k, v in iv.items()}
    n_lo, n_hi = (int(v) for v in n_range)
    if n_lo > n_hi or n_lo < 1:
        raise InvalidInterval(f"n_range {n_range} is empty or non-positive")
    if n_hi > m:
        raise InvalidInterval(f"players cannot serve {n_hi} distinct markets out of {m}")
    rng = np.random.default_rng(seed)
    b = rng.uniform(*iv["b"], size=m)
    w = rng.uniform(*iv["w"], size=m)
    sigma = rng.uniform(*iv["sigma"], size=m)
    Q, q, upper, markets = [], [], [], []
    for _ in range(N):
        ni = int(rng.integers(n_lo, n_hi + 1))
        markets.append(np.sort(rng.choice(m, size=ni, replace=False)).astype(np.int64))
        Q.append(rng.uniform(*iv["Q"], size=ni))
        q.append(rng.uniform(*iv["q"], size=ni))
        upper.append(rng.uniform(*iv["upper"], size=ni))
    return CournotInstance(tuple(Q), tuple(q), tuple(upper), tuple(markets), w, sigma, b)


def assemble_F(inst: CournotInstance) -> tuple[np.ndarray, np.ndarray]:
    """Pseudogradient as ``F(x) = M x + c``.

    ``M = blkdiag(2 Q_i + A_i' Sigma A_i) + A' Sigma A`` and ``c = q - A' w``.
    """
    A = inst.A
    S = np.diag(inst.sigma)
    blocks = [np.diag(2.0 * Qd) + inst.A_block(i).T @ S @ inst.A_block(i) for i, Qd in enumerate(inst.Q)]
    n = inst.n
    MF = np.zeros((n, n))
    k = 0
    for blk in blocks:
        d = blk.shape[0]
        MF[k : k + d, k : k + d] = blk
        k += d
    M = MF + A.T @ S @ A
    c = np.concatenate(inst.q) - A.T @ inst.w
    return M, c


def extended_matrix(M: np.ndarray, owner: np.ndarray, N: int) -> np.ndarray:
    """``R (I_N kron M)``: the ``n x nN`` matrix of the extended pseudogradient."""
    n = M.shape[0]
    out = np.zeros((n, N * n))
    for j in range(n):
        i = owner[j]
        out[j, i * n : (i + 1) * n] = M[j]
    return out


@dataclass(frozen=True)
class CournotConstants:
    eta: float
    theta1: float
    theta2: float
    sigma1: float
    rho_mu_bound: float


def lemma4_bound(eta: float, theta1: float, theta2: float, sigma1: float) -> float:
    """Penalty threshold ``(2/sigma1) ((theta1+theta2)^2 / (4 eta) + theta2)``."""
    return 2.0 / sigma1 * ((theta1 + theta2) ** 2 / (4.0 * eta) + theta2)


def lemma4_constants(M: np.ndarray, owner: np.ndarray, N: int, sigma1: float) -> dict:
    """``eta``, ``theta1``, ``theta2`` and the penalty bound for ``F(x) = Mx + c``."""
    eta = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    if eta <= 0:
        raise NonPositiveEta(f"symmetric part of M has min eigenvalue {eta:.3e}")
    theta1 = float(np.linalg.norm(M, 2))
    theta2 = float(np.linalg.norm(extended_matrix(M, owner, N), 2))
    return {"eta": eta, "theta1": theta1, "theta2": theta2, "sigma1": float(sigma1),
            "rho_mu_bound": lemma4_bound(eta, theta1, theta2, sigma1)}


def constants(inst: CournotInstance, graph: Graph) -> CournotConstants:
    M, _ = assemble_F(inst)
    owner = np.repeat(np.arange(inst.N), inst.sizes)
    return CournotConstants(**lemma4_constants(M, owner, inst.N, graph_algebra(graph).sigma1))


def projected_gradient_box_qp(H, g, lower, upper, tol=1e-10, max_iters=100_000) -> np.ndarray:
    """Minimize ``0.5 v'Hv + g'v`` over a box by projected gradient steps."""
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    step = 1.0 / np.linalg.eigvalsh(0.5 * (H + H.T))[-1]
    v = np.clip(np.zeros_like(g), lower, upper)
    for _ in range(max_iters):
        nxt = np.clip(v - step * (H @ v + g), lower, upper)
        if np.linalg.norm(nxt - v) <= tol * step:
            return nxt
        v = nxt
    raise RuntimeError("projected-gradient box QP did not reach tolerance")


def quadratic_box_argmin(H, g, lower, upper) -> np.ndarray:
    """Exact minimizer of ``0.5 v'Hv + g'v`` over ``[lower, upper]``.

    ``H`` is a vector (the diagonal) or a square matrix.  A non-diagonal matrix
    triggers a ``NonDiagonalH`` warning and the iterative solver.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    if H.ndim == 2:
        if np.count_nonzero(H - np.diag(np.diag(H))):
            warnings.warn("H is not diagonal; using projected gradient", NonDiagonalH, stacklevel=2)
            return projected_gradient_box_qp(H, g, lower, upper)
        H = np.diag(H)
    if np.any(H <= 0):
        raise ValueError("diagonal of H must be positive")
    return np.clip(-g / H, lower, upper)


def _psd_within(S: np.ndarray, tol: float) -> bool:
    try:
        np.linalg.cholesky(S + tol * np.eye(S.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True


def _extended_sym(M: np.ndarray, owner: np.ndarray, N: int) -> np.ndarray:
    n = M.shape[0]
    R = np.zeros((n, N * n))
    R[np.arange(n), owner * n + np.arange(n)] = 1.0
    MFcal = R.T @ extended_matrix(M, owner, N)
    return 0.5 * (MFcal + MFcal.T)


def extended_monotone(M: np.ndarray, owner: np.ndarray, N: int, laplacian: np.ndarray,
                      rho: float, tol: float = 1e-8) -> bool:
    """Whether ``sym(R' R (I kron M)) + rho/2 (L kron I_n)`` is PSD up to ``tol``."""
    Ln = np.kron(laplacian, np.eye(M.shape[0]))
    return _psd_within(_extended_sym(M, owner, N) + 0.5 * rho * Ln, tol)


def assumption_a_rho(inst: CournotInstance, graph: Graph, ceiling=1e4, resolution=1e-3, tol=1e-8) -> float:
    """Smallest ``rho >= 2`` (to ``resolution``) making the penalized extended
    pseudogradient monotone, i.e. ``sym(R' R (I kron M)) + rho/2 (L kron I_n)``
    has no eigenvalue below ``-tol``.
    """
    M, _ = assemble_F(inst)
    owner = np.repeat(np.arange(inst.N), inst.sizes)
    S0 = _extended_sym(M, owner, inst.N)
    Ln = np.kron(graph_algebra(graph).laplacian, np.eye(inst.n))
    ok = lambda rho: _psd_within(S0 + 0.5 * rho * Ln, tol)
    lo = 2.0
    if ok(lo):
        return lo
    if not ok(ceiling):
        raise SearchCeilingExceeded(f"no rho <= {ceiling} certifies monotonicity")
    hi = float(ceiling)
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
