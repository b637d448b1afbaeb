"""Pure-Python/numpy implementations of the compiled kernels.

Signatures and arithmetic order mirror ``_kernels.pyx``. The path kernels are
vectorised with numpy; the stochastic steppers are plain loops (slow, but
bit-identical to the compiled versions for the same noise).
"""
import numpy as np


def _drift(system, beta, u, v, ud, vd):
    if system == 0:
        return ud - u * u * u - beta * u * v * v, -vd - u * u * v
    return -ud, -vd


def _delayed(x, m):
    n = x.shape[0] - 1
    if m == 0:
        return x[:-1, 0], x[:-1, 1]
    k = min(m, n)
    ud = np.concatenate([np.full(k, -1.0), x[: n - k, 0]])
    vd = np.concatenate([np.zeros(k), x[: n - k, 1]])
    return ud, vd


def residuals(x, m, dt, beta, r):
    u = x[:-1, 0]
    v = x[:-1, 1]
    ud, vd = _delayed(x, m)
    fu, fv = _drift(0, beta, u, v, ud, vd)
    r[:, 0] = (x[1:, 0] - u) / dt - fu
    r[:, 1] = (x[1:, 1] - v) / dt - fv


def action_grad(x, m, dt, beta, r, g):
    residuals(x, m, dt, beta, r)
    n = x.shape[0] - 1
    u = x[:-1, 0]
    v = x[:-1, 1]
    ru = r[:, 0]
    rv = r[:, 1]
    g[:] = 0.0
    g[1:, 0] += ru
    g[1:, 1] += rv
    g[:-1, 0] -= ru + dt * ((-3.0 * u * u - beta * v * v) * ru + (-2.0 * u * v) * rv)
    g[:-1, 1] -= rv + dt * ((-2.0 * beta * u * v) * ru + (-u * u) * rv)
    if m < n:
        g[: n - m, 0] -= dt * ru[m:]
        g[: n - m, 1] += dt * rv[m:]
    g[0] = 0.0
    g[n] = 0.0
    return 0.5 * dt * float(np.sum(ru * ru + rv * rv))


def tridiag_solve(g, diag, off, out):
    from scipy.linalg import solve_banded

    n = g.shape[0] - 2
    out[0] = 0.0
    out[-1] = 0.0
    if n < 1:
        return
    ab = np.empty((3, n))
    ab[0] = off
    ab[1] = diag
    ab[2] = off
    out[1:-1] = solve_banded((1, 1), ab, g[1:-1])


def relax_loop(x, m, dt, beta, grad_tol, max_iters, step_init, step_max, backtrack,
               armijo_c, precondition, alpha, window, plateau_rtol, plateau_gtol, trace):
    from scipy.linalg import solveh_banded

    n = x.shape[0] - 1
    r = np.empty((n, 2))
    rn = np.empty((n, 2))
    g = np.empty((n + 1, 2))
    gn = np.empty((n + 1, 2))
    ab = np.empty((2, n - 1))
    ab[0] = -1.0 / dt
    ab[1] = 2.0 / dt + alpha * dt
    ring = np.empty(window + 1 if window > 0 else 1)
    s = step_init / 2.0
    S = action_grad(x, m, dt, beta, r, g)
    gi = float(np.abs(g).max())
    status = 2
    k = 0
    if not (np.isfinite(S) and np.isfinite(gi)):
        return S, k, gi, 4
    while True:
        if gi < grad_tol:
            status = 0
            break
        if k >= max_iters:
            break
        if window > 0:
            slot = k % (window + 1)
            if k > window and ring[slot] - S < plateau_rtol * S and gi < plateau_gtol:
                status = 1
                break
            ring[slot] = S
        if k < trace.shape[0]:
            trace[k] = S
        if precondition:
            d = np.zeros_like(g)
            if n > 1:
                d[1:-1] = solveh_banded(ab, g[1:-1])
        else:
            d = g.copy()
        gd = float(np.vdot(g, d))
        s = min(2.0 * s, step_max)
        ok = False
        while s > 1e-14 * step_max:
            xn = x - s * d
            Sn = action_grad(xn, m, dt, beta, rn, gn)
            dS = 0.5 * dt * float(np.vdot(rn - r, rn + r))
            if dS <= -armijo_c * s * gd:
                ok = True
                break
            s *= backtrack
        if not ok:
            status = 3
            break
        x[1:-1] = xn[1:-1]
        r, rn = rn, r
        g, gn = gn, g
        S = Sn
        k += 1
        gi = float(np.abs(g).max())
        if not (np.isfinite(S) and np.isfinite(gi)):
            status = 4
            break
    return S, k, gi, status


def advance(system, ring, head, noise, start, stop, dt, beta, sig, lo, hi):
    size = ring.shape[0]
    u = float(ring[head, 0])
    v = float(ring[head, 1])
    for k in range(start, stop):
        old = head + 1
        if old == size:
            old = 0
        fu, fv = _drift(system, beta, u, v, float(ring[old, 0]), float(ring[old, 1]))
        u = u + dt * fu + sig * float(noise[k, 0])
        v = v + dt * fv + sig * float(noise[k, 1])
        head = old
        ring[head, 0] = u
        ring[head, 1] = v
        if u <= lo:
            return k - start + 1, -1, head
        if u >= hi:
            return k - start + 1, 1, head
    return stop - start, 0, head


def advance_moments(system, ring, head, noise, start, stop, dt, beta, sig, acc):
    size = ring.shape[0]
    s0, s1, s2, s3 = (float(a) for a in acc)
    u = float(ring[head, 0])
    v = float(ring[head, 1])
    for k in range(start, stop):
        old = head + 1
        if old == size:
            old = 0
        fu, fv = _drift(system, beta, u, v, float(ring[old, 0]), float(ring[old, 1]))
        u = u + dt * fu + sig * float(noise[k, 0])
        v = v + dt * fv + sig * float(noise[k, 1])
        head = old
        ring[head, 0] = u
        ring[head, 1] = v
        s0 += u
        s1 += v
        s2 += u * u
        s3 += v * v
    acc[:] = (s0, s1, s2, s3)
    return head


def relax_times(hist, m, dt, beta, kappa, t_max, t_out, basin_out):
    """Vectorised over the batch; same RK4 scheme as the compiled kernel."""
    nb = hist.shape[0]
    size = m + 1
    steps = int(t_max / dt + 0.5)
    ring = np.array(hist, dtype=float)
    h = m
    u = ring[:, h, 0].copy()
    v = ring[:, h, 1].copy()
    label = np.zeros(nb, dtype=np.int64)
    t = np.zeros(nb)
    active = np.ones(nb, dtype=bool)
    for n in range(steps + 1):
        near_a = active & (np.sqrt((u + 1.0) * (u + 1.0) + v * v) < kappa)
        label[near_a] = -1
        active &= ~near_a
        near_b = active & (np.sqrt((u - 1.0) * (u - 1.0) + v * v) < kappa)
        label[near_b] = 1
        active &= ~near_b
        if n == steps or not active.any():
            break
        if m == 0:
            k1u, k1v = _drift(0, beta, u, v, u, v)
            hu = u + 0.5 * dt * k1u
            hv = v + 0.5 * dt * k1v
            k2u, k2v = _drift(0, beta, hu, hv, hu, hv)
            hu = u + 0.5 * dt * k2u
            hv = v + 0.5 * dt * k2v
            k3u, k3v = _drift(0, beta, hu, hv, hu, hv)
            hu = u + dt * k3u
            hv = v + dt * k3v
            k4u, k4v = _drift(0, beta, hu, hv, hu, hv)
        else:
            d0 = (h + 1) % size
            d1 = (d0 + 1) % size
            du = 0.5 * (ring[:, d0, 0] + ring[:, d1, 0])
            dv = 0.5 * (ring[:, d0, 1] + ring[:, d1, 1])
            k1u, k1v = _drift(0, beta, u, v, ring[:, d0, 0], ring[:, d0, 1])
            hu = u + 0.5 * dt * k1u
            hv = v + 0.5 * dt * k1v
            k2u, k2v = _drift(0, beta, hu, hv, du, dv)
            hu = u + 0.5 * dt * k2u
            hv = v + 0.5 * dt * k2v
            k3u, k3v = _drift(0, beta, hu, hv, du, dv)
            hu = u + dt * k3u
            hv = v + dt * k3v
            k4u, k4v = _drift(0, beta, hu, hv, ring[:, d1, 0], ring[:, d1, 1])
        nu = u + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        nv = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        # finished members keep their state frozen
        u = np.where(active, nu, u)
        v = np.where(active, nv, v)
        h = (h + 1) % size
        ring[:, h, 0] = u
        ring[:, h, 1] = v
        t = np.where(active, (n + 1) * dt, t)
    undecided = label == 0
    label[undecided] = np.where(u[undecided] >= 0.0, 1, -1)
    t_out[:] = label * t
    basin_out[:] = label

