"""Hot loops of the Douglas-Rachford round for affine box games.

Two interchangeable backends: compiled ``numba`` kernels and a vectorized
numpy path.  Set ``GNEDR_DISABLE_JIT=1`` to force the numpy path (it is also
used when numba is not importable).  Both take the same arguments; ``offsets``
are the player block boundaries, ``heads``/``tails`` the 0-based edge ends.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

JIT_DISABLED = os.environ.get("GNEDR_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}
HAVE_NUMBA = numba is not None
USE_JIT = HAVE_NUMBA and not JIT_DISABLED

__all__ = [
    "USE_JIT",
    "HAVE_NUMBA",
    "resolvent_a_affine",
    "resolvent_b",
    "dr_round_affine",
    "resolvent_a_affine_np",
    "resolvent_b_np",
    "dr_round_affine_np",
]


# ---------------------------------------------------------------- numpy path


def _edge_diff(x, heads, tails):
    return x[heads] - x[tails]


def _scatter(v, heads, tails, num_nodes):
    out = np.zeros((num_nodes, v.shape[1]))
    np.add.at(out, heads, v)
    np.subtract.at(out, tails, v)
    return out


def _own_mask(offsets, n):
    owner = np.repeat(np.arange(offsets.size - 1), np.diff(offsets))
    return owner[None, :] == np.arange(offsets.size - 1)[:, None]


def resolvent_a_affine_np(y, lam, mu, z, heads, tails, offsets, A, M, c, lower, upper,
                          bsplit, tau1, tau2, tau3, tau4, rho_mu, rho_z):
    N, n = y.shape
    mask = _own_mask(offsets, n)
    t1 = tau1[:, None]
    corr = _scatter(0.5 * rho_mu * _edge_diff(y, heads, tails) + 0.5 * mu, heads, tails, N)
    Y = y - t1 * corr
    # own blocks: diagonal quadratic subproblem with the others frozen at Y
    G = np.where(mask, 0.0, Y) @ M.T
    lin = G + c + corr + 0.5 * (lam @ A) - y / t1
    v = np.clip(-lin / (np.diag(M)[None, :] + 1.0 / t1), lower, upper)
    Y = np.where(mask, v, Y)

    ay_new = np.where(mask, Y, 0.0) @ A.T
    ay_old = np.where(mask, y, 0.0) @ A.T
    lcorr = _scatter(0.5 * rho_z * _edge_diff(lam, heads, tails) + 0.5 * z, heads, tails, N)
    L1 = np.maximum(lam + tau2[:, None] * (ay_new - 0.5 * ay_old - lcorr - bsplit), 0.0)

    mu1 = mu + tau3[:, None] * (_edge_diff(Y, heads, tails) - 0.5 * _edge_diff(y, heads, tails))
    z1 = z + tau4[:, None] * (_edge_diff(L1, heads, tails) - 0.5 * _edge_diff(lam, heads, tails))
    return Y, L1, mu1, z1


def resolvent_b_np(uy, ulam, umu, uz, heads, tails, offsets, A,
                   tau1, tau2, tau3, tau4, rho_mu, rho_z):
    N, n = uy.shape
    mask = _own_mask(offsets, n)
    corr = _scatter(0.5 * rho_mu * _edge_diff(uy, heads, tails) + 0.5 * umu, heads, tails, N)
    vy = uy - tau1[:, None] * (corr + 0.5 * np.where(mask, ulam @ A, 0.0))
    ay_v = np.where(mask, vy, 0.0) @ A.T
    ay_u = np.where(mask, uy, 0.0) @ A.T
    lcorr = _scatter(0.5 * rho_z * _edge_diff(ulam, heads, tails) + 0.5 * uz, heads, tails, N)
    vlam = ulam + tau2[:, None] * (ay_v - 0.5 * ay_u - lcorr)
    vmu = umu + tau3[:, None] * (_edge_diff(vy, heads, tails) - 0.5 * _edge_diff(uy, heads, tails))
    vz = uz + tau4[:, None] * (_edge_diff(vlam, heads, tails) - 0.5 * _edge_diff(ulam, heads, tails))
    return vy, vlam, vmu, vz


def dr_round_affine_np(y, lam, mu, z, heads, tails, offsets, A, M, c, lower, upper,
                       bsplit, tau1, tau2, tau3, tau4, rho_mu, rho_z, gamma):
    w = resolvent_a_affine_np(y, lam, mu, z, heads, tails, offsets, A, M, c, lower, upper,
                              bsplit, tau1, tau2, tau3, tau4, rho_mu, rho_z)
    u = [2.0 * a - b for a, b in zip(w, (y, lam, mu, z))]
    v = resolvent_b_np(*u, heads, tails, offsets, A, tau1, tau2, tau3, tau4, rho_mu, rho_z)
    new = tuple(b + 2.0 * gamma * (vb - a) for a, b, vb in zip(w, (y, lam, mu, z), v))
    return w + new


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _graph_corr(x, e_val, heads, tails, rho):
        # rho/2 * L x + 1/2 * B e_val
        N, k = x.shape
        out = np.zeros((N, k))
        for e in range(heads.size):
            h = heads[e]
            t = tails[e]
            for r in range(k):
                val = 0.5 * rho * (x[h, r] - x[t, r]) + 0.5 * e_val[e, r]
                out[h, r] += val
                out[t, r] -= val
        return out

    @numba.njit(cache=True)
    def _own_times_A(Y, offsets, A, i):
        m = A.shape[0]
        out = np.zeros(m)
        for j in range(offsets[i], offsets[i + 1]):
            yij = Y[i, j]
            for r in range(m):
                out[r] += A[r, j] * yij
        return out

    @numba.njit(cache=True)
    def _edge_update(base, new, old, heads, tails, tau):
        E, k = base.shape
        out = np.empty((E, k))
        for e in range(E):
            h = heads[e]
            t = tails[e]
            for r in range(k):
                out[e, r] = base[e, r] + tau[e] * ((new[h, r] - new[t, r]) - 0.5 * (old[h, r] - old[t, r]))
        return out

    @numba.njit(cache=True)
    def _resolvent_a_affine_jit(y, lam, mu, z, heads, tails, offsets, A, M, c, lower, upper,
                                bsplit, tau1, tau2, tau3, tau4, rho_mu, rho_z):
        N, n = y.shape
        m = lam.shape[1]
        corr = _graph_corr(y, mu, heads, tails, rho_mu)
        Y = np.empty((N, n))
        for i in range(N):
            for k in range(n):
                Y[i, k] = y[i, k] - tau1[i] * corr[i, k]
        for i in range(N):
            inv = 1.0 / tau1[i]
            lo = offsets[i]
            hi = offsets[i + 1]
            for j in range(lo, hi):
                s = c[j] + corr[i, j] - inv * y[i, j]
                for k in range(lo):
                    s += M[j, k] * Y[i, k]
                for k in range(hi, n):
                    s += M[j, k] * Y[i, k]
                for r in range(m):
                    s += 0.5 * A[r, j] * lam[i, r]
                v = -s / (M[j, j] + inv)
                if v < lower[j]:
                    v = lower[j]
                elif v > upper[j]:
                    v = upper[j]
                Y[i, j] = v
        lcorr = _graph_corr(lam, z, heads, tails, rho_z)
        L1 = np.empty((N, m))
        for i in range(N):
            a_new = _own_times_A(Y, offsets, A, i)
            a_old = _own_times_A(y, offsets, A, i)
            for r in range(m):
                val = lam[i, r] + tau2[i] * (a_new[r] - 0.5 * a_old[r] - lcorr[i, r] - bsplit[i, r])
                L1[i, r] = val if val > 0.0 else 0.0
        mu1 = _edge_update(mu, Y, y, heads, tails, tau3)
        z1 = _edge_update(z, L1, lam, heads, tails, tau4)
        return Y, L1, mu1, z1

    @numba.njit(cache=True)
    def _resolvent_b_jit(uy, ulam, umu, uz, heads, tails, offsets, A,
                         tau1, tau2, tau3, tau4, rho_mu, rho_z):
        N, n = uy.shape
        m = ulam.shape[1]
        corr = _graph_corr(uy, umu, heads, tails, rho_mu)
        vy = np.empty((N, n))
        for i in range(N):
            for k in range(n):
                vy[i, k] = uy[i, k] - tau1[i] * corr[i, k]
            for j in range(offsets[i], offsets[i + 1]):
                s = 0.0
                for r in range(m):
                    s += A[r, j] * ulam[i, r]
                vy[i, j] -= tau1[i] * 0.5 * s
        lcorr = _graph_corr(ulam, uz, heads, tails, rho_z)
        vlam = np.empty((N, m))
        for i in range(N):
            a_v = _own_times_A(vy, offsets, A, i)
            a_u = _own_times_A(uy, offsets, A, i)
            for r in range(m):
                vlam[i, r] = ulam[i, r] + tau2[i] * (a_v[r] - 0.5 * a_u[r] - lcorr[i, r])
        vmu = _edge_update(umu, vy, uy, heads, tails, tau3)
        vz = _edge_update(uz, vlam, ulam, heads, tails, tau4)
        return vy, vlam, vmu, vz

    @numba.njit(cache=True)
    def _dr_round_affine_jit(y, lam, mu, z, heads, tails, offsets, A, M, c, lower, upper,
                             bsplit, tau1, tau2, tau3, tau4, rho_mu, rho_z, gamma):
        Y, L1, mu1, z1 = _resolvent_a_affine_jit(y, lam, mu, z, heads, tails, offsets, A, M, c,
                                                 lower, upper, bsplit, tau1, tau2, tau3, tau4,
                                                 rho_mu, rho_z)
        vy, vlam, vmu, vz = _resolvent_b_jit(2.0 * Y - y, 2.0 * L1 - lam, 2.0 * mu1 - mu,
                                             2.0 * z1 - z, heads, tails, offsets, A,
                                             tau1, tau2, tau3, tau4, rho_mu, rho_z)
        g2 = 2.0 * gamma
        return (Y, L1, mu1, z1,
                y + g2 * (vy - Y), lam + g2 * (vlam - L1),
                mu + g2 * (vmu - mu1), z + g2 * (vz - z1))

    resolvent_a_affine_jit = _resolvent_a_affine_jit
    resolvent_b_jit = _resolvent_b_jit
    dr_round_affine_jit = _dr_round_affine_jit
else:  # pragma: no cover
    resolvent_a_affine_jit = resolvent_b_jit = dr_round_affine_jit = None


if USE_JIT:
    resolvent_a_affine = resolvent_a_affine_jit
    resolvent_b = resolvent_b_jit
    dr_round_affine = dr_round_affine_jit
else:
    resolvent_a_affine = resolvent_a_affine_np
    resolvent_b = resolvent_b_np
    dr_round_affine = dr_round_affine_np
