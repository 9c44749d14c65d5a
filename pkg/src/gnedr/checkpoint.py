"""Binary dumps of the DR state ``omega_tilde`` for resumable runs.

Layout (little-endian): 8-byte magic ``GNEDRCK1``; int64 ``N``, ``E``, ``m``;
``N`` int64 block sizes ``n_i``; then the flat float64 state in the order
``y, lam, mu, z`` (each row-major).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .game import AugmentedState

__all__ = ["MAGIC", "CheckpointError", "write_checkpoint", "read_checkpoint"]

MAGIC = b"GNEDRCK1"


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, state: AugmentedState, sizes) -> None:
    sizes = [int(s) for s in sizes]
    N, n = state.y.shape
    E, m = state.z.shape
    if len(sizes) != N or sum(sizes) != n:
        raise CheckpointError(f"block sizes {sizes} do not match a state with N={N}, n={n}")
    header = MAGIC + struct.pack(f"<3q{N}q", N, E, m, *sizes)
    with open(Path(path), "wb") as fh:
        fh.write(header)
        fh.write(state.flatten().astype("<f8").tobytes())


def read_checkpoint(path) -> tuple[AugmentedState, list[int]]:
    """Return the stored state and the per-player block sizes."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    try:
        N, E, m = struct.unpack_from("<3q", data, 8)
        sizes = list(struct.unpack_from(f"<{N}q", data, 32))
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    n = sum(sizes)
    start = 32 + 8 * N
    expected = (N + E) * (n + m)
    flat = np.frombuffer(data, dtype="<f8", offset=start)
    if flat.size != expected:
        raise CheckpointError(f"{path}: {flat.size} values stored, expected {expected}")
    return AugmentedState.from_flat(flat.astype(float), N, E, n, m), sizes
