import numpy as np
import pytest

from delaydtp import _backend
from delaydtp.analysis import history_windows
from delaydtp.path import Path, make_path

from conftest import needs_ext, random_path

pytestmark = needs_ext


def _both():
    return _backend.get("python"), _backend.get("cython")


def test_backend_env_selection():
    assert _backend.NAME in ("python", "cython")
    with pytest.raises(ValueError):
        _backend.get("fortran")


@pytest.mark.parametrize("m", [0, 3, 17])
def test_action_grad_agree(m):
    py, cy = _both()
    x = random_path(np.random.default_rng(m), 90)
    out = []
    for k in (py, cy):
        r, g = np.empty((90, 2)), np.empty((91, 2))
        s = k.action_grad(x, m, 0.05, 1.4, r, g)
        out.append((s, r, g))
    assert out[0][0] == pytest.approx(out[1][0], rel=1e-13)
    np.testing.assert_allclose(out[0][1], out[1][1], rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(out[0][2], out[1][2], rtol=1e-12, atol=1e-13)


def test_tridiag_agree():
    py, cy = _both()
    g = np.random.default_rng(0).standard_normal((50, 2))
    a, b = np.zeros_like(g), np.zeros_like(g)
    py.tridiag_solve(g, 2.5, -1.0, a)
    cy.tridiag_solve(g, 2.5, -1.0, b)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)
    # the solve inverts tridiag(off, diag, off) on the interior rows
    inner = a[1:-1]
    lhs = 2.5 * inner
    lhs[1:] += -1.0 * inner[:-1]
    lhs[:-1] += -1.0 * inner[1:]
    np.testing.assert_allclose(lhs, g[1:-1], atol=1e-12)


@pytest.mark.parametrize("pre", [0, 1])
def test_relax_loop_agree(pre):
    py, cy = _both()
    p = make_path(12.0, 120, "bump", 0.2)
    res = []
    for k in (py, cy):
        x = p.nodes.copy()
        tr = np.empty(200)
        out = k.relax_loop(x, 5, p.dt, 1.0, 1e-9, 200, 1.0 if pre else 1e-2, 1.0 if pre else 1e-2,
                           0.5, 1e-4, pre, 1.0, 0, 1e-7, 1e-6, tr)
        res.append((out, x, tr))
    (s0, k0, g0, c0), x0, t0 = res[0]
    (s1, k1, g1, c1), x1, t1 = res[1]
    assert (k0, c0) == (k1, c1)
    assert s0 == pytest.approx(s1, rel=1e-10)
    np.testing.assert_allclose(x0, x1, atol=1e-9)


@pytest.mark.parametrize("system", [0, 1])
def test_advance_bit_identical(system):
    py, cy = _both()
    noise = np.random.default_rng(1).standard_normal((3000, 2))
    out = []
    for k in (py, cy):
        ring = np.tile([-1.0, 0.0], (8, 1))
        res = k.advance(system, ring, 7, noise, 0, 3000, 1e-2, 1.0, 0.05, -np.inf, np.inf)
        out.append((res, ring))
    assert out[0][0] == out[1][0]
    np.testing.assert_array_equal(out[0][1], out[1][1])


def test_advance_moments_agree():
    py, cy = _both()
    noise = np.random.default_rng(2).standard_normal((2000, 2))
    res = []
    for k in (py, cy):
        ring = np.zeros((5, 2))
        acc = np.zeros(4)
        head = k.advance_moments(1, ring, 4, noise, 0, 2000, 1e-2, 1.0, 0.02, acc)
        res.append((head, acc, ring))
    assert res[0][0] == res[1][0]
    np.testing.assert_allclose(res[0][1], res[1][1], rtol=1e-13)


def test_relax_times_agree():
    py, cy = _both()
    p = Path(random_path(np.random.default_rng(3), 30, 0.2), 0.05)
    hist = history_windows(p, 4)
    out = []
    for k in (py, cy):
        t, lab = np.empty(31), np.empty(31, dtype=np.int_)
        k.relax_times(hist, 4, 0.05, 1.0, 1e-5, 40.0, t, lab)
        out.append((t, lab))
    np.testing.assert_array_equal(out[0][1], out[1][1])
    np.testing.assert_allclose(out[0][0], out[1][0], rtol=1e-12)


def test_pure_env_forces_fallback():
    import os
    import subprocess
    import sys
    env = dict(os.environ, DELAYDTP_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import delaydtp; print(delaydtp.BACKEND)"],
                         capture_output=True, text=True, env=env)
    assert out.stdout.strip() == "python"
