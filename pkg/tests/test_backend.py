import os
import subprocess
import sys

import numpy as np
import pytest

from hsliouville import _pykernels
from hsliouville.verify import random_states

ck = pytest.importorskip("hsliouville._ckernels")


@pytest.fixture(scope="module")
def batch():
    rng = np.random.default_rng(7)
    X, V = random_states(rng, 5000, 1.0, "any")
    # boundary states and overlapping centres exercise the special branches
    Xb = X[:200].copy()
    y = Xb[:, 3:] - Xb[:, :3]
    Xb[:, 3:] = Xb[:, :3] + y / np.linalg.norm(y, axis=1, keepdims=True)
    Xo = X[:50].copy()
    Xo[:, 3:] = Xo[:, :3] + 0.3 * (Xo[:, 3:] - Xo[:, :3]) / np.linalg.norm(Xo[:, 3:] - Xo[:, :3], axis=1, keepdims=True)
    X = np.ascontiguousarray(np.concatenate([X, Xb, Xo]))
    V = np.ascontiguousarray(np.concatenate([V, V[:200], V[:50]]))
    t = np.ascontiguousarray(rng.uniform(-3, 3, len(X)))
    t[:100] = 0.0
    sheet = np.ascontiguousarray(rng.integers(1, 3, len(X)).astype(np.int8))
    return X, V, t, sheet


def _same(a, b, tol=1e-12):
    for x, y in zip(a, b):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        np.testing.assert_array_equal(np.isnan(x), np.isnan(y))
        np.testing.assert_allclose(np.nan_to_num(x), np.nan_to_num(y), atol=tol, rtol=tol)


@pytest.mark.parametrize("name", ["classify", "collision", "extended", "sigma_star"])
def test_geometry_kernels_agree(batch, name):
    X, V, _, _ = batch
    _same(getattr(ck, name)(X, V, 1.0, 1e-9), getattr(_pykernels, name)(X, V, 1.0, 1e-9))


def test_flow_kernels_agree(batch):
    X, V, t, sheet = batch
    _same(ck.flow(X, V, t, 1.0, 1e-9), _pykernels.flow(X, V, t, 1.0, 1e-9))
    _same(ck.doubled_flow(X, V, sheet, t, 1.0, 1e-9), _pykernels.doubled_flow(X, V, sheet, t, 1.0, 1e-9))


def test_reflect_agrees(batch):
    X, V, _, _ = batch
    m = np.ascontiguousarray(np.tile([0.0, 0.6, 0.8], (len(V), 1)))
    _same([ck.reflect(V, m)], [_pykernels.reflect(V, m)])


def test_environment_forces_numpy_fallback():
    env = dict(os.environ, HSLIOUVILLE_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", "import hsliouville; print(hsliouville.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
