import os
import subprocess
import sys

import numpy as np
import pytest

from lwvlasov import _accel
from lwvlasov._hot import characteristics, retarded
from lwvlasov.quadrature import SphereRule

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def _field_history(rng, ns=3, n=9):
    return np.ascontiguousarray(rng.normal(size=(ns, n, n, n, 6)) * 0.3)


def test_trace_backends_agree():
    rng = np.random.default_rng(0)
    F = _field_history(rng)
    origin = np.array([-1.0, -1.0, -1.0])
    x = rng.uniform(-0.5, 0.5, size=(40, 3))
    xi = rng.uniform(-1.0, 1.0, size=(40, 3))
    a = characteristics.trace_numba(x, xi, 0.2, 0.0, 8, F, origin, 0.25, 0.1)
    b = characteristics.trace_numpy(x, xi, 0.2, 0.0, 8, F, origin, 0.25, 0.1)
    np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-14)
    np.testing.assert_allclose(a[1], b[1], rtol=0, atol=1e-14)
    np.testing.assert_array_equal(a[2], b[2])


def test_trace_flags_agree_outside_grid():
    rng = np.random.default_rng(1)
    F = _field_history(rng)
    origin = np.zeros(3)
    x = np.array([[0.05, 1.0, 1.0], [1.0, 1.0, 1.0]])
    xi = np.array([[-3.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    a = characteristics.trace_numba(x, xi, 0.0, 0.5, 10, F, origin, 0.25, 0.1)
    b = characteristics.trace_numpy(x, xi, 0.0, 0.5, 10, F, origin, 0.25, 0.1)
    assert list(a[2]) == [1, 0]
    np.testing.assert_array_equal(a[2], b[2])


def test_sampling_is_trilinear():
    # linear fields are reproduced exactly by trilinear interpolation
    n = 6
    g = np.arange(n) * 0.2
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1)
    F = np.zeros((2, n, n, n, 6))
    F[0, ..., 0] = 1.0 + X[..., 0] - 2.0 * X[..., 2]
    F[1, ..., 0] = 3.0 + X[..., 0] - 2.0 * X[..., 2]
    P = np.array([[0.13, 0.55, 0.31], [0.9, 0.2, 0.77]])
    eb, outside = characteristics.sample_numpy(F, np.zeros(3), 0.2, 1.0, 0.25, P)
    assert not np.any(outside)
    np.testing.assert_allclose(eb[:, 0], 1.5 + P[:, 0] - 2.0 * P[:, 2], atol=1e-14)


def test_retarded_sum_backends_agree():
    rng = np.random.default_rng(2)
    coeffs = np.ascontiguousarray(rng.normal(size=(4, 10, 10, 10, 2)))
    rule = SphereRule(6, 12)
    pts = rng.uniform(0.5, 1.5, size=(7, 3))
    idx = np.array([3, 2, 1], dtype=np.int64)
    lags = np.array([0.1, 0.2, 0.3])
    lw = np.array([0.5, 0.25, 0.125])
    args = (pts, coeffs, np.zeros(3), 0.2, idx, lags, lw, rule.points, rule.weights)
    np.testing.assert_allclose(retarded.retarded_sum_numba(*args), retarded.retarded_sum_numpy(*args),
                               rtol=1e-12, atol=1e-13)


def test_spline_coefficients_interpolate_nodes():
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(8, 9, 7, 2))
    c = retarded.spline_coefficients(vals)
    n = np.array(vals.shape[:3])
    idx = np.stack(np.meshgrid(*[np.arange(k) for k in n], indexing="ij"), axis=-1).reshape(-1, 3)
    # a retarded sum with one lag of zero and a single unit direction samples the nodes
    out = retarded.retarded_sum_numpy(idx.astype(float), c[None], np.zeros(3), 1.0, np.array([0]),
                                      np.array([0.0]), np.array([1.0]), np.array([[1.0, 0.0, 0.0]]),
                                      np.array([1.0]))
    np.testing.assert_allclose(out, vals.reshape(-1, 2), atol=1e-13)


def test_spline_error_drops_sixth_order():
    rng = np.random.default_rng(4)
    P = rng.uniform(0.6, 0.9, size=(20, 3))

    def f(X):
        return np.exp(-np.sum((X - 0.75) ** 2, axis=-1) / 0.04) * np.cos(3 * X[..., 0])

    errs = []
    for n, h in ((16, 0.1), (31, 0.05)):
        g = np.arange(n) * h
        X = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1)
        c = retarded.spline_coefficients(f(X)[..., None])
        out = retarded.retarded_sum_numpy(P, c[None], np.zeros(3), h, np.array([0]), np.array([0.0]),
                                          np.array([1.0]), np.array([[1.0, 0.0, 0.0]]), np.array([1.0]))
        errs.append(np.max(np.abs(out[:, 0] - f(P))))
    # quintic splines: O(h^6)
    assert errs[0] / errs[1] > 40
    assert errs[1] < 1e-5


def test_disable_flag_selects_numpy():
    env = dict(os.environ, LWVLASOV_DISABLE_NUMBA="1")
    code = "import lwvlasov._accel as a, lwvlasov._hot as h; print(a.backend(), h.trace.__name__)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "trace_numpy"]
