"""Distributed Douglas-Rachford iteration for variational GNE seeking.

The zero-finding operator on ``omega = [y; lam; mu; z]`` is split as
``T = A + B`` and both resolvents are taken in the metric of the design
matrix ``Phi``.  Because ``Phi + D`` is block lower-triangular, each resolvent
is one sweep of local player/edge updates; this module implements those
sweeps matrix-free.  The dense matrices live in :mod:`gnedr.dense`.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .game import AugmentedState, GameSpec, KKTResidual, extended_pseudogradient, kkt_residual, pseudogradient
from .graph import Graph, graph_algebra, incidence_matvec, incidence_rmatvec, laplacian_matvec
from .metrics import MetricsRecord, avg_norm_dist, consensus_spread, relative_step

log = logging.getLogger(__name__)

__all__ = [
    "NonpositiveMargin",
    "NegativeQuadraticForm",
    "LocalArgminFailure",
    "MaxItersExceeded",
    "StepSizes",
    "DRConfig",
    "RunResult",
    "Splitting",
    "lemma1_bounds",
    "lemma1_step_sizes",
    "resolvent_A",
    "resolvent_B",
    "dr_round",
    "phi_norm",
    "t_residual",
    "run",
]


class NonpositiveMargin(ValueError):
    pass


class NegativeQuadraticForm(ValueError):
    """``omega' Phi omega < 0``: the step sizes violate the Lemma-1 bounds."""


class LocalArgminFailure(RuntimeError):
    pass


class MaxItersExceeded(RuntimeError):
    def __init__(self, result: "RunResult"):
        super().__init__(f"no convergence after {result.iterations} iterations")
        self.result = result


@dataclass(frozen=True, eq=False)
class StepSizes:
    tau1: np.ndarray  # per player
    tau2: np.ndarray  # per player
    tau3: np.ndarray  # per edge
    tau4: np.ndarray  # per edge
    rho_mu: float
    rho_z: float

    def __post_init__(self):
        for name in ("tau1", "tau2", "tau3", "tau4"):
            arr = np.ascontiguousarray(np.atleast_1d(getattr(self, name)), dtype=float)
            if np.any(arr <= 0):
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, arr)
        if self.rho_mu <= 0 or self.rho_z <= 0:
            raise ValueError("penalties rho_mu and rho_z must be positive")

    @classmethod
    def uniform(cls, N, E, tau1, tau2, tau3, tau4, rho_mu, rho_z) -> "StepSizes":
        return cls(np.full(N, tau1), np.full(N, tau2), np.full(E, tau3), np.full(E, tau4),
                   float(rho_mu), float(rho_z))

    def satisfies_lemma1(self, game: GameSpec, graph: Graph) -> bool:
        bounds = lemma1_bounds(game, graph, self.rho_mu, self.rho_z)
        taus = (self.tau1, self.tau2, self.tau3, self.tau4)
        return all(np.all(1.0 / t > b) for t, b in zip(taus, bounds))


def lemma1_bounds(game: GameSpec, graph: Graph, rho_mu: float, rho_z: float):
    """Right-hand sides of the four Gershgorin inequalities on ``1/tau``."""
    d = graph_algebra(graph).degrees
    col = np.array([np.abs(p.A).sum(axis=0).max() for p in game.players])
    row = np.array([np.abs(p.A).sum(axis=1).max() for p in game.players])
    E = graph.num_edges
    return (0.5 * col + (0.5 + rho_mu) * d, 0.5 * row + (0.5 + rho_z) * d, np.ones(E), np.ones(E))


def lemma1_step_sizes(game: GameSpec, graph: Graph, rho_mu: float, rho_z: float, margin: float = 0.05) -> StepSizes:
    """Step sizes ``tau = 1 / (bound * (1 + margin))`` for every inequality."""
    if not margin > 0:
        raise NonpositiveMargin(f"margin must be positive, got {margin}")
    if rho_mu <= 0 or rho_z <= 0:
        raise ValueError("penalties must be positive")
    b1, b2, b3, b4 = lemma1_bounds(game, graph, rho_mu, rho_z)
    f = 1.0 + margin
    return StepSizes(1 / (b1 * f), 1 / (b2 * f), 1 / (b3 * f), 1 / (b4 * f), float(rho_mu), float(rho_z))


@dataclass
class DRConfig:
    gamma: float = 0.5
    max_iters: int = 50_000
    stop_tol: float = 1e-9
    cert_tol: float = 1e-6
    mode: str = "B"

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"relaxation gamma must lie in (0, 1), got {self.gamma}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.mode not in ("A", "B"):
            raise ValueError(f"mode must be 'A' or 'B', got {self.mode!r}")


@dataclass
class RunResult:
    trajectory: list[MetricsRecord]
    omega: AugmentedState
    omega_tilde: AugmentedState
    iterations: int
    status: str  # "certified", "step_tol" or "max_iters_exceeded"
    certified: bool
    certificate: dict
    fejer: Optional[np.ndarray] = None
    wall_time: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status != "max_iters_exceeded"

    @property
    def x(self) -> np.ndarray:
        return self.omega.y.mean(axis=0)

    @property
    def lam(self) -> np.ndarray:
        return self.omega.lam.mean(axis=0)


def _diag_own_blocks(game: GameSpec) -> bool:
    M = game.affine.M
    for i in range(game.N):
        blk = M[game.own_slice(i), game.own_slice(i)]
        if np.count_nonzero(blk - np.diag(np.diag(blk))):
            return False
    return bool(np.all(np.diag(M) > -np.inf))


class Splitting:
    """Resolvents, metric and iteration for one (game, graph, steps) triple.

    ``backend`` is ``"auto"`` (compiled kernel whenever the game is affine with
    diagonal own blocks), ``"kernel"`` or ``"oracle"`` (per-player oracles).
    ``workers > 0`` evaluates the per-player subproblems of the oracle path on
    a thread pool; ``certify`` checks every subproblem's optimality residual.
    """

    def __init__(self, game: GameSpec, graph: Graph, steps: StepSizes, gamma: float = 0.5,
                 backend: str = "auto", workers: int = 0, certify: bool = False):
        if graph.num_nodes != game.N:
            raise ValueError(f"graph has {graph.num_nodes} nodes but the game has {game.N} players")
        if steps.tau1.size != game.N or steps.tau3.size != graph.num_edges:
            raise ValueError("step-size vectors do not match the game/graph sizes")
        self.game, self.graph, self.steps = game, graph, steps
        self.gamma = float(gamma)
        self.workers = int(workers)
        self.certify = certify
        eligible = game.affine is not None and _diag_own_blocks(game)
        if backend == "auto":
            backend = "kernel" if eligible else "oracle"
        if backend == "kernel" and not eligible:
            raise ValueError("kernel backend needs an affine game with diagonal own blocks")
        if backend not in ("kernel", "oracle"):
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        self.heads = np.ascontiguousarray(graph.heads)
        self.tails = np.ascontiguousarray(graph.tails)
        self.offsets = np.ascontiguousarray(game.offsets)
        self.A = np.ascontiguousarray(game.A)
        self.mask = game.own_mask
        self._shape = (game.N, graph.num_edges, game.n, game.m)

    # ------------------------------------------------------------------ helpers

    def _kernel_args(self):
        s, aff = self.steps, self.game.affine
        return (self.heads, self.tails, self.offsets, self.A,
                np.ascontiguousarray(aff.M), np.ascontiguousarray(aff.c),
                np.ascontiguousarray(aff.lower), np.ascontiguousarray(aff.upper),
                np.ascontiguousarray(self.game.b_split),
                s.tau1, s.tau2, s.tau3, s.tau4, float(s.rho_mu), float(s.rho_z))

    def _b_args(self):
        s = self.steps
        return (self.heads, self.tails, self.offsets, self.A,
                s.tau1, s.tau2, s.tau3, s.tau4, float(s.rho_mu), float(s.rho_z))

    def zeros(self) -> AugmentedState:
        return AugmentedState.zeros(*self._shape)

    def F(self, x: np.ndarray) -> np.ndarray:
        aff = self.game.affine
        if aff is not None:
            return aff.M @ x + aff.c
        return pseudogradient(self.game, x)

    def F_ext(self, ystack: np.ndarray) -> np.ndarray:
        aff = self.game.affine
        if aff is not None:
            return (ystack @ aff.M.T + aff.c)[self.mask]
        return extended_pseudogradient(self.game, ystack)

    def _own_solve(self, i, Y, s: AugmentedState, corr):
        game, p = self.game, self.game.players[i]
        sl = game.own_slice(i)
        lin = 0.5 * p.A.T @ s.lam[i] + corr[i, sl]
        weight = 1.0 / self.steps.tau1[i]
        others = game.others(i, Y[i])
        try:
            v = np.asarray(p.local_argmin(others, lin, s.y[i, sl], weight), dtype=float)
        except Exception as exc:
            raise LocalArgminFailure(f"player {i}: local solver raised {exc!r}") from exc
        if v.shape != (p.n,) or not np.all(np.isfinite(v)):
            raise LocalArgminFailure(f"player {i}: local solver returned {v!r}")
        if self.certify:
            grad = p.own_subgradient(v, others) + lin + weight * (v - s.y[i, sl])
            res = np.linalg.norm(v - p.project_omega(v - grad / weight))
            if res > 1e-8 * max(1.0, np.linalg.norm(v)):
                raise LocalArgminFailure(f"player {i}: subproblem residual {res:.2e}")
        return v

    # --------------------------------------------------------------- resolvents

    def resolvent_A(self, s: AugmentedState) -> AugmentedState:
        if self.backend == "kernel":
            return AugmentedState(*_kernels.resolvent_a_affine(*_contig(s), *self._kernel_args()))
        g, st = self.graph, self.steps
        corr = 0.5 * st.rho_mu * laplacian_matvec(g, s.y) + 0.5 * incidence_matvec(g, s.mu)
        Y = s.y - st.tau1[:, None] * corr
        idx = range(self.game.N)
        if self.workers > 0:
            with ThreadPoolExecutor(self.workers) as pool:
                own = list(pool.map(lambda i: self._own_solve(i, Y, s, corr), idx))
        else:
            own = [self._own_solve(i, Y, s, corr) for i in idx]
        for i, v in enumerate(own):
            Y[i, self.game.own_slice(i)] = v
        ay_new = np.where(self.mask, Y, 0.0) @ self.A.T
        ay_old = np.where(self.mask, s.y, 0.0) @ self.A.T
        lcorr = 0.5 * st.rho_z * laplacian_matvec(g, s.lam) + 0.5 * incidence_matvec(g, s.z)
        lam = np.maximum(
            s.lam + st.tau2[:, None] * (ay_new - 0.5 * ay_old - lcorr - self.game.b_split), 0.0
        )
        mu = s.mu + st.tau3[:, None] * (incidence_rmatvec(g, Y) - 0.5 * incidence_rmatvec(g, s.y))
        z = s.z + st.tau4[:, None] * (incidence_rmatvec(g, lam) - 0.5 * incidence_rmatvec(g, s.lam))
        return AugmentedState(Y, lam, mu, z)

    def resolvent_B(self, u: AugmentedState) -> AugmentedState:
        fn = _kernels.resolvent_b if self.backend == "kernel" else _kernels.resolvent_b_np
        return AugmentedState(*fn(*_contig(u), *self._b_args()))

    def dr_round(self, wt: AugmentedState) -> tuple[AugmentedState, AugmentedState]:
        """One relaxed DR step: returns ``(omega, omega_tilde_next)``."""
        if self.backend == "kernel":
            out = _kernels.dr_round_affine(*_contig(wt), *self._kernel_args(), self.gamma)
            return AugmentedState(*out[:4]), AugmentedState(*out[4:])
        omega = self.resolvent_A(wt)
        v = self.resolvent_B(2.0 * omega - wt)
        return omega, wt + (2.0 * self.gamma) * (v - omega)

    # -------------------------------------------------------------- diagnostics

    def phi_quadratic(self, w: AugmentedState) -> float:
        st, g = self.steps, self.graph
        dy = incidence_rmatvec(g, w.y)
        dl = incidence_rmatvec(g, w.lam)
        ay = np.where(self.mask, w.y, 0.0) @ self.A.T
        return float(
            np.sum(w.y**2 / st.tau1[:, None])
            - 0.5 * st.rho_mu * np.sum(dy**2)
            - np.sum(w.lam * ay)
            - np.sum(w.mu * dy)
            + np.sum(w.lam**2 / st.tau2[:, None])
            - 0.5 * st.rho_z * np.sum(dl**2)
            - np.sum(w.z * dl)
            + np.sum(w.mu**2 / st.tau3[:, None])
            + np.sum(w.z**2 / st.tau4[:, None])
        )

    def phi_norm(self, w: AugmentedState) -> float:
        q = self.phi_quadratic(w)
        if q < 0:
            scale = sum(float(np.sum(a**2)) for a in w.parts())
            if q < -1e-12 * max(scale, 1e-300) * max(1.0, 1.0 / self.steps.tau1.min()):
                raise NegativeQuadraticForm(f"omega' Phi omega = {q:.3e} < 0")
            q = 0.0
        return math.sqrt(q)

    def t_residual_parts(self, w: AugmentedState) -> tuple[float, float, float, float]:
        """Norms of the natural-map residuals of the y and lambda rows and of
        the two consensus rows of the zero-finding operator."""
        g, st, game = self.graph, self.steps, self.game
        Gy = incidence_matvec(g, w.mu) + st.rho_mu * laplacian_matvec(g, w.y)
        Gy[self.mask] += self.F_ext(w.y) + (w.lam @ self.A)[self.mask]
        trial = w.y - Gy
        proj = trial.copy()
        if game.affine is not None:
            lo = np.broadcast_to(game.affine.lower, trial.shape)
            hi = np.broadcast_to(game.affine.upper, trial.shape)
            proj[self.mask] = np.clip(trial[self.mask], lo[self.mask], hi[self.mask])
        else:
            for i, p in enumerate(game.players):
                sl = game.own_slice(i)
                proj[i, sl] = p.project_omega(trial[i, sl])
        r_y = np.linalg.norm(w.y - proj)
        ay = np.where(self.mask, w.y, 0.0) @ self.A.T
        Gl = -ay + game.b_split + incidence_matvec(g, w.z) + st.rho_z * laplacian_matvec(g, w.lam)
        r_l = np.linalg.norm(w.lam - np.maximum(w.lam - Gl, 0.0))
        return (float(r_y), float(r_l),
                float(np.linalg.norm(incidence_rmatvec(g, w.y))),
                float(np.linalg.norm(incidence_rmatvec(g, w.lam))))

    def t_residual(self, w: AugmentedState) -> float:
        return float(np.linalg.norm(self.t_residual_parts(w)))

    def certificate(self, omega: AugmentedState) -> dict:
        x, lam = omega.y.mean(axis=0), omega.lam.mean(axis=0)
        kkt = kkt_residual(self.game, x, lam, F=self.F(x))
        return {
            "kkt": kkt._asdict(),
            "y_consensus": consensus_spread(omega.y),
            "lambda_consensus": consensus_spread(omega.lam),
            "t_residual": self.t_residual(omega),
        }

    def lift_solution(self, x, lam) -> AugmentedState:
        """Consensus state built from a centralized solution ``(x, lam)``.

        ``y`` and ``lam`` are replicated across agents.  The edge variables
        solve, in the least-squares sense, ``B_n mu = -(g + nu)`` with ``g``
        the stacked ``R'(F + A' lam)`` and ``nu`` its normal-cone part, and
        ``B_m z = [A_i x_i - b_i + (b - A x) / N]_i``.  At an exact v-GNE both
        systems are consistent and the result is a zero of the operator.
        """
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        game, N = self.game, self.game.N
        y = np.tile(x, (N, 1))
        lstack = np.tile(lam, (N, 1))
        inc = graph_algebra(self.graph).incidence
        g = np.zeros_like(y)
        g[self.mask] = np.broadcast_to(self.F(x) + self.A.T @ lam, y.shape)[self.mask]
        trial = y - g
        proj = trial.copy()
        for i, p in enumerate(game.players):
            sl = game.own_slice(i)
            proj[i, sl] = p.project_omega(trial[i, sl])
        nu = trial - proj
        mu = np.linalg.lstsq(inc, -(g + nu), rcond=None)[0]
        slack = game.b - self.A @ x
        ax = np.where(self.mask, y, 0.0) @ self.A.T
        z = np.linalg.lstsq(inc, ax - game.b_split + slack / N, rcond=None)[0]
        return AugmentedState(y, lstack, mu, z)

    def check_mode(self, mode: str) -> Optional[str]:
        """Warn when the penalty ``rho_mu`` is not certified for ``mode``.

        Returns the warning text (or None).  Both conditions are sufficient,
        not necessary, so the run proceeds either way.
        """
        from .cournot import extended_monotone, lemma4_constants

        msg = None
        aff = self.game.affine
        if aff is None:
            msg = (f"mode {mode}: game is not affine; convergence condition accepted on "
                   "user assertion")
        elif mode == "B":
            consts = lemma4_constants(aff.M, self.game.owner, self.game.N, graph_algebra(self.graph).sigma1)
            if self.steps.rho_mu < consts["rho_mu_bound"]:
                msg = (f"mode B: rho_mu={self.steps.rho_mu:.6g} is below the restricted-"
                       f"monotonicity bound {consts['rho_mu_bound']:.6g}")
        else:
            L = graph_algebra(self.graph).laplacian
            if not extended_monotone(aff.M, self.game.owner, self.game.N, L, self.steps.rho_mu):
                msg = f"mode A: rho_mu={self.steps.rho_mu:.6g} does not certify monotonicity"
        if msg:
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return msg

    # ---------------------------------------------------------------- iteration

    def record(self, k: int, omega: AugmentedState, rel_step: float, x_star=None) -> MetricsRecord:
        x, lam = omega.y.mean(axis=0), omega.lam.mean(axis=0)
        kkt = kkt_residual(self.game, x, lam, F=self.F(x))
        return MetricsRecord(
            k,
            avg_norm_dist(omega.y, x_star),
            rel_step,
            consensus_spread(omega.y),
            consensus_spread(omega.lam),
            *kkt,
        )

    def run(self, cfg: DRConfig, init: Optional[AugmentedState] = None, x_star=None,
            reference: Optional[AugmentedState] = None,
            callback: Optional[Callable[[int, AugmentedState, AugmentedState], None]] = None,
            strict: bool = False, check_mode: bool = True) -> RunResult:
        """Iterate DR rounds until certified, stalled or out of iterations.

        Stops when the relative step of ``omega_tilde`` drops to ``stop_tol``
        or when the KKT residuals, both consensus spreads and the operator
        residual of ``omega`` are all within ``cert_tol``.  ``x_star`` (a
        reference solution) fills ``avg_norm_dist``; ``reference`` (a fixed
        point) records the Phi-distance of every ``omega_tilde`` in ``fejer``.
        Record 0 describes the initial point with ``rel_step = 0``.
        """
        self.gamma = cfg.gamma
        if check_mode:
            self.check_mode(cfg.mode)
        t0 = time.perf_counter()
        wt = (init or self.zeros()).copy()
        x_star = None if x_star is None else np.asarray(x_star, dtype=float)
        traj = [self.record(0, wt, 0.0, x_star)]
        fejer = [self.phi_norm(wt - reference)] if reference is not None else None
        omega = None
        status = "max_iters_exceeded"
        k = 0
        for k in range(1, cfg.max_iters + 1):
            omega, nxt = self.dr_round(wt)
            rel = relative_step(nxt.flatten(), wt.flatten())
            rec = self.record(k, omega, rel, x_star)
            traj.append(rec)
            if fejer is not None:
                fejer.append(self.phi_norm(nxt - reference))
            if callback is not None:
                callback(k, omega, nxt)
            wt = nxt
            cheap = max(rec.kkt_stationarity, rec.kkt_primal, rec.kkt_dual, rec.kkt_compl,
                        rec.y_consensus, rec.lambda_consensus)
            if cheap <= cfg.cert_tol and self.t_residual(omega) <= cfg.cert_tol:
                status = "certified"
                break
            if rel <= cfg.stop_tol:
                status = "step_tol"
                break
        else:
            k = cfg.max_iters
        if omega is None:
            omega = self.resolvent_A(wt)
        cert = self.certificate(omega)
        worst = max(max(cert["kkt"].values()), cert["y_consensus"], cert["lambda_consensus"], cert["t_residual"])
        result = RunResult(
            trajectory=traj,
            omega=omega,
            omega_tilde=wt,
            iterations=k,
            status=status,
            certified=bool(worst <= cfg.cert_tol),
            certificate=cert,
            fejer=None if fejer is None else np.asarray(fejer),
            wall_time=time.perf_counter() - t0,
        )
        log.info("DR run: %s after %d iterations (%.2fs)", status, k, result.wall_time)
        if strict and not result.converged:
            raise MaxItersExceeded(result)
        return result


def _contig(s: AugmentedState):
    return tuple(np.ascontiguousarray(a, dtype=float) for a in s.parts())


# thin functional wrappers mirroring the operator names


def resolvent_A(game, graph, steps, state, **kw) -> AugmentedState:
    return Splitting(game, graph, steps, **kw).resolvent_A(state)


def resolvent_B(graph, game, steps, state, **kw) -> AugmentedState:
    return Splitting(game, graph, steps, **kw).resolvent_B(state)


def dr_round(game, graph, steps, state, gamma=0.5, **kw):
    return Splitting(game, graph, steps, gamma=gamma, **kw).dr_round(state)


def phi_norm(steps, game, graph, state) -> float:
    return Splitting(game, graph, steps).phi_norm(state)


def t_residual(game, graph, steps, state) -> float:
    return Splitting(game, graph, steps).t_residual(state)


def run(game, graph, steps, cfg: DRConfig, init=None, **kw) -> RunResult:
    backend = kw.pop("backend", "auto")
    workers = kw.pop("workers", 0)
    return Splitting(game, graph, steps, gamma=cfg.gamma, backend=backend, workers=workers).run(cfg, init, **kw)
