import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import make_problem, random_state
from gnedr import _kernels
from gnedr.splitting import Splitting

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_jit_and_numpy_kernels_agree(seed, rng):
    _, graph, game, steps = make_problem(seed, 3 + seed, 3, n_range=(1, 3))
    S = Splitting(game, graph, steps, backend="kernel")
    s = random_state(S, rng)
    args = tuple(np.ascontiguousarray(a) for a in s.parts()) + S._kernel_args()
    for a, b in zip(_kernels.resolvent_a_affine_np(*args), _kernels.resolvent_a_affine_jit(*args)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)
    bargs = tuple(np.ascontiguousarray(a) for a in s.parts()) + S._b_args()
    for a, b in zip(_kernels.resolvent_b_np(*bargs), _kernels.resolvent_b_jit(*bargs)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)
    for a, b in zip(_kernels.dr_round_affine_np(*args, 0.5), _kernels.dr_round_affine_jit(*args, 0.5)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_kernel_matches_oracle_path(seed, rng):
    _, graph, game, steps = make_problem(seed, 3 + seed, 3, n_range=(1, 3))
    K = Splitting(game, graph, steps, backend="kernel")
    O = Splitting(game, graph, steps, backend="oracle")
    s = random_state(K, rng)
    for a, b in zip(K.dr_round(s), O.dr_round(s)):
        np.testing.assert_allclose(a.flatten(), b.flatten(), rtol=0, atol=1e-12)


def test_env_flag_selects_numpy_backend():
    code = "from gnedr import _kernels as k; print(k.USE_JIT, k.dr_round_affine is k.dr_round_affine_np)"
    env = dict(os.environ, GNEDR_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]


@needs_numba
def test_default_backend_is_compiled():
    code = "from gnedr import _kernels as k; print(k.USE_JIT)"
    env = {k: v for k, v in os.environ.items() if k != "GNEDR_DISABLE_JIT"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "True"
