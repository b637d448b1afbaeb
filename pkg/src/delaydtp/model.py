"""Delayed Maier-Stein vector field and its small-delay reduction.

The full model is

    du/dt = u(t - tau) - u^3 - beta u v^2
    dv/dt = -v(t - tau) - u^2 v

with metastable states A = (-1, 0), B = (1, 0) and a saddle at the origin.
The reduced (small-delay, beta = 1) quantities are only defined for tau != 1.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, RootSearchError, SingularDelayError


class State(NamedTuple):
    u: float
    v: float


A = State(-1.0, 0.0)
B = State(1.0, 0.0)
SADDLE = State(0.0, 0.0)


@dataclass(frozen=True)
class ModelParams:
    """One problem instance.

    Parameters
    ----------
    tau : float
        Delay time, ``>= 0``.
    beta : float
        Non-conservation parameter, ``> 0``. ``beta = 1`` is the gradient case.
    epsilon : float
        Noise intensity, ``> 0``. Only stochastic operations read it.
    """

    tau: float = 0.0
    beta: float = 1.0
    epsilon: float = 0.02

    def __post_init__(self):
        for name in ("tau", "beta", "epsilon"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(name, f"{name} must be a finite number, got {value!r}")
        if self.tau < 0:
            raise ParameterError("tau", f"tau must be >= 0, got {self.tau}")
        if self.beta <= 0:
            raise ParameterError("beta", f"beta must be > 0, got {self.beta}")
        if self.epsilon <= 0:
            raise ParameterError("epsilon", f"epsilon must be > 0, got {self.epsilon}")

    def replace(self, **changes) -> "ModelParams":
        fields = {"tau": self.tau, "beta": self.beta, "epsilon": self.epsilon}
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class TransverseStability:
    """Quadratic expansion ``m0 + m2 v^2`` of the on-axis geometric action."""

    m0: float
    m2: float


def drift(x, x_del, params: ModelParams) -> State:
    """Drift ``F(x(t), x(t - tau))`` of the delayed model."""
    u, v = x
    ud, vd = x_del
    return State(ud - u**3 - params.beta * u * v**2, -vd - u**2 * v)


def drift_jacobians(x, params: ModelParams):
    """Jacobians of the drift in its instantaneous and delayed arguments."""
    u, v = x
    beta = params.beta
    j_now = np.array([[-3.0 * u**2 - beta * v**2, -2.0 * beta * u * v],
                      [-2.0 * u * v, -(u**2)]])
    j_del = np.array([[1.0, 0.0], [0.0, -1.0]])
    return j_now, j_del


def fixed_points() -> tuple[State, State, State]:
    """Return ``(A, B, saddle)``."""
    return A, B, SADDLE


def _require_reduced(params: ModelParams, *, allow_tau_one=False):
    if params.beta != 1.0:
        raise ParameterError("beta", "the small-delay reduction is only defined for beta = 1")
    if not allow_tau_one and params.tau == 1.0:
        raise SingularDelayError("reduced-model quantities are singular at tau = 1")


def reduced_drift(x, params: ModelParams) -> State:
    """Small-delay expansion of the drift (beta = 1)."""
    _require_reduced(params, allow_tau_one=True)
    u, v = x
    tau = params.tau
    return State((1.0 - tau) * (u - u**3 - u * v**2), (1.0 + tau) * (-v - u**2 * v))


def quasi_potential(x, params: ModelParams) -> float:
    """Potential-like function W(u, v) of the reduced model."""
    _require_reduced(params)
    u, v = x
    tau = params.tau
    return ((0.5 * u**4 - u**2) / (2.0 * (1.0 - tau))
            + v**2 / (2.0 * (1.0 + tau))
            + u**2 * v**2 / (1.0 - tau**2))


def m2(u: float, params: ModelParams) -> float:
    """Transverse stability coefficient on the left (``u <= 0``) segment."""
    _require_reduced(params)
    if u > 0:
        raise ParameterError("u", "m2 is only defined on the left segment u <= 0")
    tau = params.tau
    value = 1.0 / (2.0 * (1.0 + tau)) + u**2 / (1.0 - tau**2)
    return value if tau < 1.0 else -value


def transverse_stability(u: float, params: ModelParams) -> TransverseStability:
    """On-axis geometric action ``m0(u)`` from A to ``(u, 0)`` and ``m2(u)``."""
    w_a = quasi_potential(A, params)
    w_u = quasi_potential((u, 0.0), params)
    if u <= 0:
        m0 = abs(w_u - w_a)
    else:
        m0 = abs(w_u) + abs(w_a)
    return TransverseStability(m0=m0, m2=m2(u, params) if u <= 0 else math.nan)


def on_axis_unstable(params: ModelParams) -> bool:
    """Whether some ``u <= 0`` has ``m2(u) < 0`` in the reduced model."""
    _require_reduced(params)
    # m2 is monotone in u^2 on [-1, 0]; its sign is fixed by tau alone
    return m2(0.0, params) < 0.0 or m2(-1.0, params) < 0.0


def _char_functions(tau: float):
    def fu(lam):
        return lam - cmath.exp(-lam * tau) + 3.0

    def dfu(lam):
        return 1.0 + tau * cmath.exp(-lam * tau)

    def fv(lam):
        return lam + cmath.exp(-lam * tau) + 1.0

    def dfv(lam):
        return 1.0 - tau * cmath.exp(-lam * tau)

    return (fu, dfu), (fv, dfv)


def _newton(f, df, z, tol=1e-10, max_iter=100):
    fz = f(z)
    for _ in range(max_iter):
        if abs(fz) < tol:
            return z
        d = df(z)
        if d == 0:
            return None
        step = fz / d
        t = 1.0
        while t > 1e-8:
            z_new = z - t * step
            f_new = f(z_new)
            if abs(f_new) < abs(fz):
                break
            t *= 0.5
        else:
            return None
        z, fz = z_new, f_new
    return z if abs(fz) < tol else None


def characteristic_roots(tau: float, branch: str, *, re_window=(-10.0, 2.0),
                         im_window=(0.0, 20.0), grid=(121, 201)) -> list[complex]:
    """All characteristic roots of one branch found inside the search window.

    ``branch`` is ``"u"`` for ``lambda = exp(-lambda tau) - 3`` or ``"v"`` for
    ``lambda = -exp(-lambda tau) - 1``.
    """
    (fu, dfu), (fv, dfv) = _char_functions(tau)
    f, df = (fu, dfu) if branch == "u" else (fv, dfv)
    re = np.linspace(*re_window, grid[0])
    im = np.linspace(*im_window, grid[1])
    z = re[:, None] + 1j * im[None, :]
    vals = np.abs(z - np.exp(-z * tau) + 3.0) if branch == "u" else np.abs(z + np.exp(-z * tau) + 1.0)
    padded = np.pad(vals, 1, constant_values=np.inf)
    center = padded[1:-1, 1:-1]
    is_min = np.ones_like(center, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            is_min &= center <= padded[1 + di:padded.shape[0] - 1 + di, 1 + dj:padded.shape[1] - 1 + dj]
    roots: list[complex] = []
    for i, j in zip(*np.nonzero(is_min)):
        root = _newton(f, df, complex(z[i, j]))
        if root is None:
            continue
        if root.imag < 0:
            root = root.conjugate()
        if all(abs(root - r) > 1e-7 for r in roots):
            roots.append(root)
    return roots


def rightmost_char_root(point, params: ModelParams) -> complex:
    """Rightmost root of the linearisation at A or B.

    The linearisation decouples into ``lambda = exp(-lambda tau) - 3`` (u) and
    ``lambda = -exp(-lambda tau) - 1`` (v); the root with the largest real part
    over both branches is returned.
    """
    p = State(*point)
    if not (abs(abs(p.u) - 1.0) < 1e-12 and abs(p.v) < 1e-12):
        raise ParameterError("point", "characteristic roots are only available at A or B")
    best = None
    for branch in ("u", "v"):
        roots = characteristic_roots(params.tau, branch)
        if not roots:
            raise RootSearchError(f"no {branch}-branch root found for tau={params.tau}")
        cand = max(roots, key=lambda z: z.real)
        if best is None or cand.real > best.real:
            best = cand
    return best
