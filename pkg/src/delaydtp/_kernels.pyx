# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a pure-Python twin in :mod:`delaydtp._fallback` with
the same signature and the same floating-point operation order, so the two
backends agree to the last bit on the stochastic kernels.
"""
import numpy as np

from libc.math cimport fabs, sqrt


cdef inline void _drift(int system, double beta, double u, double v,
                        double ud, double vd, double* fu, double* fv) noexcept nogil:
    if system == 0:
        fu[0] = ud - u * u * u - beta * u * v * v
        fv[0] = -vd - u * u * v
    else:
        fu[0] = -ud
        fv[0] = -vd


cdef void _residuals(const double[:, ::1] x, Py_ssize_t m, double dt, double beta,
                     double[:, ::1] r) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0] - 1
    cdef Py_ssize_t i
    cdef double u, v, ud, vd, fu, fv
    for i in range(n):
        u = x[i, 0]
        v = x[i, 1]
        if i >= m:
            ud = x[i - m, 0]
            vd = x[i - m, 1]
        else:
            ud = -1.0
            vd = 0.0
        _drift(0, beta, u, v, ud, vd, &fu, &fv)
        r[i, 0] = (x[i + 1, 0] - u) / dt - fu
        r[i, 1] = (x[i + 1, 1] - v) / dt - fv


cdef double _action_grad(const double[:, ::1] x, Py_ssize_t m, double dt, double beta,
                         double[:, ::1] r, double[:, ::1] g) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0] - 1
    cdef Py_ssize_t i
    cdef double u, v, ru, rv, s = 0.0
    _residuals(x, m, dt, beta, r)
    for i in range(n + 1):
        g[i, 0] = 0.0
        g[i, 1] = 0.0
    for i in range(n):
        u = x[i, 0]
        v = x[i, 1]
        ru = r[i, 0]
        rv = r[i, 1]
        s += ru * ru + rv * rv
        g[i + 1, 0] += ru
        g[i + 1, 1] += rv
        # -r_i - dt * J1^T r_i
        g[i, 0] -= ru + dt * ((-3.0 * u * u - beta * v * v) * ru + (-2.0 * u * v) * rv)
        g[i, 1] -= rv + dt * ((-2.0 * beta * u * v) * ru + (-u * u) * rv)
        # delayed Jacobian is diag(1, -1)
        if i >= m:
            g[i - m, 0] -= dt * ru
            g[i - m, 1] += dt * rv
    g[0, 0] = 0.0
    g[0, 1] = 0.0
    g[n, 0] = 0.0
    g[n, 1] = 0.0
    return 0.5 * dt * s


def residuals(const double[:, ::1] x, Py_ssize_t m, double dt, double beta,
              double[:, ::1] r):
    with nogil:
        _residuals(x, m, dt, beta, r)


def action_grad(const double[:, ::1] x, Py_ssize_t m, double dt, double beta,
                double[:, ::1] r, double[:, ::1] g):
    """Fill residuals ``r`` and gradient ``g``; return the action."""
    cdef double s
    with nogil:
        s = _action_grad(x, m, dt, beta, r, g)
    return s


cdef void _tridiag_factor(Py_ssize_t n, double diag, double off, double[::1] c,
                          double[::1] winv) noexcept nogil:
    # Thomas elimination of the constant interior matrix, done once per run
    cdef Py_ssize_t i
    if n < 1:
        return
    winv[0] = 1.0 / diag
    c[0] = off * winv[0]
    for i in range(1, n):
        winv[i] = 1.0 / (diag - off * c[i - 1])
        c[i] = off * winv[i]


cdef void _tridiag_apply(const double[:, ::1] g, double off, const double[::1] c,
                         const double[::1] winv, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = g.shape[0] - 2
    cdef Py_ssize_t i, k
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    out[n + 1, 0] = 0.0
    out[n + 1, 1] = 0.0
    if n < 1:
        return
    out[1, 0] = g[1, 0] * winv[0]
    out[1, 1] = g[1, 1] * winv[0]
    for i in range(1, n):
        out[i + 1, 0] = (g[i + 1, 0] - off * out[i, 0]) * winv[i]
        out[i + 1, 1] = (g[i + 1, 1] - off * out[i, 1]) * winv[i]
    for k in range(n - 1, 0, -1):
        out[k, 0] -= c[k - 1] * out[k + 1, 0]
        out[k, 1] -= c[k - 1] * out[k + 1, 1]


def tridiag_solve(const double[:, ::1] g, double diag, double off, double[:, ::1] out):
    """Solve the constant-coefficient Dirichlet tridiagonal system on interior rows."""
    cdef Py_ssize_t n = g.shape[0] - 2
    cdef double[::1] c = np.empty(max(n, 1))
    cdef double[::1] winv = np.empty(max(n, 1))
    with nogil:
        _tridiag_factor(n, diag, off, c, winv)
        _tridiag_apply(g, off, c, winv, out)


cdef double _absmax(const double[:, ::1] a) noexcept nogil:
    cdef Py_ssize_t i
    cdef double best = 0.0, t
    for i in range(a.shape[0]):
        t = fabs(a[i, 0])
        if t > best or t != t:
            best = t
        t = fabs(a[i, 1])
        if t > best or t != t:
            best = t
    return best


def relax_loop(double[:, ::1] x, Py_ssize_t m, double dt, double beta,
               double grad_tol, Py_ssize_t max_iters, double step_init, double step_max,
               double backtrack, double armijo_c, int precondition, double alpha,
               Py_ssize_t window, double plateau_rtol, double plateau_gtol,
               double[::1] trace):
    """Preconditioned gradient descent with Armijo backtracking, in place on ``x``.

    Returns ``(action, iterations, grad_inf, status)`` with status 0 (gradient
    tolerance), 1 (action plateau), 2 (iteration cap), 3 (line search failed),
    4 (non-finite values). ``trace`` receives the accepted actions if it has
    room for them.
    """
    cdef Py_ssize_t n = x.shape[0] - 1
    cdef double[:, ::1] r = np.empty((n, 2))
    cdef double[:, ::1] rn = np.empty((n, 2))
    cdef double[:, ::1] g = np.empty((n + 1, 2))
    cdef double[:, ::1] gn = np.empty((n + 1, 2))
    cdef double[:, ::1] d = np.empty((n + 1, 2))
    cdef double[:, ::1] xn = np.empty((n + 1, 2))
    cdef double[::1] c = np.empty(max(n - 1, 1))
    cdef double[::1] winv = np.empty(max(n - 1, 1))
    cdef double[::1] ring = np.empty(window + 1 if window > 0 else 1)
    cdef double[:, ::1] tmp
    cdef double S, Sn, gi, gd, s, dS, diag, off
    cdef Py_ssize_t k = 0, i, ntrace = trace.shape[0]
    cdef int status = 2
    cdef bint ok
    diag = 2.0 / dt + alpha * dt
    off = -1.0 / dt
    s = step_init / 2.0
    with nogil:
        _tridiag_factor(n - 1, diag, off, c, winv)
        S = _action_grad(x, m, dt, beta, r, g)
        gi = _absmax(g)
        if S != S or gi != gi or S > 1e300:
            status = 4
        while status == 2:
            if gi < grad_tol:
                status = 0
                break
            if k >= max_iters:
                break
            if window > 0:
                if k > window and ring[k % (window + 1)] - S < plateau_rtol * S and gi < plateau_gtol:
                    # ring slot k % (window+1) still holds the action of iteration k - window - 1
                    status = 1
                    break
                ring[k % (window + 1)] = S
            if k < ntrace:
                trace[k] = S
            if precondition:
                _tridiag_apply(g, off, c, winv, d)
            else:
                for i in range(n + 1):
                    d[i, 0] = g[i, 0]
                    d[i, 1] = g[i, 1]
            gd = 0.0
            for i in range(n + 1):
                gd += g[i, 0] * d[i, 0] + g[i, 1] * d[i, 1]
            s = 2.0 * s
            if s > step_max:
                s = step_max
            ok = False
            while s > 1e-14 * step_max:
                for i in range(n + 1):
                    xn[i, 0] = x[i, 0] - s * d[i, 0]
                    xn[i, 1] = x[i, 1] - s * d[i, 1]
                Sn = _action_grad(xn, m, dt, beta, rn, gn)
                # difference of squares avoids cancellation near the minimum
                dS = 0.0
                for i in range(n):
                    dS += (rn[i, 0] - r[i, 0]) * (rn[i, 0] + r[i, 0]) + (rn[i, 1] - r[i, 1]) * (rn[i, 1] + r[i, 1])
                dS = 0.5 * dt * dS
                if dS <= -armijo_c * s * gd:
                    ok = True
                    break
                s = s * backtrack
            if not ok:
                status = 3
                break
            for i in range(1, n):
                x[i, 0] = xn[i, 0]
                x[i, 1] = xn[i, 1]
            tmp = r
            r = rn
            rn = tmp
            tmp = g
            g = gn
            gn = tmp
            S = Sn
            k += 1
            gi = _absmax(g)
            if S != S or gi != gi or S > 1e300:
                status = 4
                break
    return S, k, gi, status


def advance(int system, double[:, ::1] ring, Py_ssize_t head,
            const double[:, ::1] noise, Py_ssize_t start, Py_ssize_t stop,
            double dt, double beta, double sig, double lo, double hi):
    """Euler-Maruyama steps consuming ``noise[start:stop]``.

    ``ring[head]`` is the newest state and ``ring[(head + 1) % len]`` the state
    one delay window back. Stops early once ``u <= lo`` (code -1) or
    ``u >= hi`` (code +1). Returns ``(steps_taken, code, head)``.
    """
    cdef Py_ssize_t size = ring.shape[0]
    cdef Py_ssize_t k, old
    cdef double u, v, fu, fv, un, vn
    cdef int code = 0
    with nogil:
        for k in range(start, stop):
            old = head + 1
            if old == size:
                old = 0
            u = ring[head, 0]
            v = ring[head, 1]
            _drift(system, beta, u, v, ring[old, 0], ring[old, 1], &fu, &fv)
            un = u + dt * fu + sig * noise[k, 0]
            vn = v + dt * fv + sig * noise[k, 1]
            head = old
            ring[head, 0] = un
            ring[head, 1] = vn
            if un <= lo:
                code = -1
                break
            if un >= hi:
                code = 1
                break
    if code == 0:
        return stop - start, 0, head
    return k - start + 1, code, head


def advance_moments(int system, double[:, ::1] ring, Py_ssize_t head,
                    const double[:, ::1] noise, Py_ssize_t start, Py_ssize_t stop,
                    double dt, double beta, double sig, double[::1] acc):
    """Advance without stopping; add sums of u, v, u^2, v^2 into ``acc``."""
    cdef Py_ssize_t size = ring.shape[0]
    cdef Py_ssize_t k, old
    cdef double u, v, fu, fv, un, vn
    with nogil:
        for k in range(start, stop):
            old = head + 1
            if old == size:
                old = 0
            u = ring[head, 0]
            v = ring[head, 1]
            _drift(system, beta, u, v, ring[old, 0], ring[old, 1], &fu, &fv)
            un = u + dt * fu + sig * noise[k, 0]
            vn = v + dt * fv + sig * noise[k, 1]
            head = old
            ring[head, 0] = un
            ring[head, 1] = vn
            acc[0] += un
            acc[1] += vn
            acc[2] += un * un
            acc[3] += vn * vn
    return head


cdef inline double _dist(double u, double v, double cu) noexcept nogil:
    return sqrt((u - cu) * (u - cu) + v * v)


def relax_times(const double[:, :, ::1] hist, Py_ssize_t m, double dt, double beta,
                double kappa, double t_max, double[::1] t_out, long[::1] basin_out):
    """Deterministic DDE relaxation time for a batch of history windows.

    ``hist[j]`` holds ``m + 1`` states on the mesh ending at the start point.
    Fixed-step RK4; the delayed argument at half steps is the mean of the two
    neighbouring mesh values.
    """
    cdef Py_ssize_t nb = hist.shape[0]
    cdef Py_ssize_t size = m + 1
    cdef Py_ssize_t j, n, steps, h, d0, d1
    cdef double[:, ::1] ring = np.empty((size, 2))
    cdef double u, v, t, du, dv, hu, hv
    cdef double k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v
    cdef int label
    steps = <Py_ssize_t>(t_max / dt + 0.5)
    with nogil:
        for j in range(nb):
            # ring holds the last m + 1 mesh states, newest at h
            for n in range(size):
                ring[n, 0] = hist[j, n, 0]
                ring[n, 1] = hist[j, n, 1]
            h = m
            u = ring[h, 0]
            v = ring[h, 1]
            label = 0
            t = 0.0
            for n in range(steps + 1):
                if _dist(u, v, -1.0) < kappa:
                    label = -1
                    break
                if _dist(u, v, 1.0) < kappa:
                    label = 1
                    break
                if n == steps:
                    break
                if m == 0:
                    _drift(0, beta, u, v, u, v, &k1u, &k1v)
                    hu = u + 0.5 * dt * k1u
                    hv = v + 0.5 * dt * k1v
                    _drift(0, beta, hu, hv, hu, hv, &k2u, &k2v)
                    hu = u + 0.5 * dt * k2u
                    hv = v + 0.5 * dt * k2v
                    _drift(0, beta, hu, hv, hu, hv, &k3u, &k3v)
                    hu = u + dt * k3u
                    hv = v + dt * k3v
                    _drift(0, beta, hu, hv, hu, hv, &k4u, &k4v)
                else:
                    d0 = h + 1
                    if d0 == size:
                        d0 = 0
                    d1 = d0 + 1
                    if d1 == size:
                        d1 = 0
                    du = 0.5 * (ring[d0, 0] + ring[d1, 0])
                    dv = 0.5 * (ring[d0, 1] + ring[d1, 1])
                    _drift(0, beta, u, v, ring[d0, 0], ring[d0, 1], &k1u, &k1v)
                    hu = u + 0.5 * dt * k1u
                    hv = v + 0.5 * dt * k1v
                    _drift(0, beta, hu, hv, du, dv, &k2u, &k2v)
                    hu = u + 0.5 * dt * k2u
                    hv = v + 0.5 * dt * k2v
                    _drift(0, beta, hu, hv, du, dv, &k3u, &k3v)
                    hu = u + dt * k3u
                    hv = v + dt * k3v
                    _drift(0, beta, hu, hv, ring[d1, 0], ring[d1, 1], &k4u, &k4v)
                u = u + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
                v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
                h = h + 1
                if h == size:
                    h = 0
                ring[h, 0] = u
                ring[h, 1] = v
                t = (n + 1) * dt
            if label == 0:
                label = 1 if u >= 0.0 else -1
            t_out[j] = label * t
            basin_out[j] = label
