"""Discretised paths and the discrete Freidlin-Wentzell action.

For a uniform mesh ``t_i = i dt`` the action is the left-point sum

    S = dt/2 * sum_i |r_i|^2,   r_i = (x_{i+1} - x_i)/dt - F(x_i, x_{i-m})

with ``m = tau/dt`` and the pre-history ``x_j = A`` for ``j < 0``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import _backend
from .errors import MeshError, ParameterError
from .model import A, B, ModelParams

DEFAULT_MIN_NODES = 5000


@dataclass
class Path:
    """Uniformly sampled trajectory ``nodes[i] = x(i * dt)``."""

    nodes: np.ndarray
    dt: float

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ParameterError("nodes", "nodes must have shape (N + 1, 2)")
        if self.nodes.shape[0] < 3:
            raise ParameterError("N", "a path needs N >= 2 intervals")
        if not self.dt > 0:
            raise ParameterError("dt", "dt must be positive")

    @property
    def N(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def horizon_T(self) -> float:
        return self.N * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    @property
    def u(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def v(self) -> np.ndarray:
        return self.nodes[:, 1]

    def copy(self) -> "Path":
        return Path(self.nodes.copy(), self.dt)

    def mirrored(self) -> "Path":
        """Reflection ``v -> -v``."""
        nodes = self.nodes.copy()
        nodes[:, 1] *= -1.0
        return Path(nodes, self.dt)


@dataclass
class ActionReport:
    action: float
    residuals: np.ndarray = field(repr=False)
    grad_inf_norm: float
    iterations: int = 0


def default_mesh(tau: float, T: float, n_min: int = DEFAULT_MIN_NODES) -> tuple[int, float, int]:
    """Mesh ``(N, dt, m)`` with ``dt = tau/m`` and ``N * dt`` as close to ``T`` as possible.

    For ``tau > 0`` the delay index is ``m = ceil(n_min * tau / T)``; ``dt`` is then
    fixed by the delay and ``N = round(T / dt)``, so the horizon actually used
    is ``N * dt`` (within ``dt/2`` of ``T``).
    """
    if T <= 0:
        raise ParameterError("T", "T must be positive")
    if n_min < 2:
        raise ParameterError("N", "need at least 2 intervals")
    if tau == 0:
        return n_min, T / n_min, 0
    if tau >= T:
        raise MeshError(f"tau={tau} must be smaller than T={T}")
    m = math.ceil(n_min * tau / T - 1e-9)
    dt = tau / m
    n = int(round(T / dt))
    return n, dt, m


def make_path(T: float, N: int, kind: str = "straight", amplitude: float = 0.1,
              sign: int = 1, dt: float | None = None) -> Path:
    """Initial path from A to B.

    ``kind="straight"`` interpolates linearly on the u axis;
    ``kind="bump"`` adds ``sign * amplitude * sin(pi i / N)`` to v.
    Passing ``dt`` overrides ``T / N`` (used with :func:`default_mesh`).
    """
    if N < 2:
        raise ParameterError("N", f"N must be >= 2, got {N}")
    s = np.arange(N + 1) / N
    nodes = np.empty((N + 1, 2))
    nodes[:, 0] = A.u + (B.u - A.u) * s
    nodes[:, 1] = 0.0
    if kind in ("bump", "straight_plus_bump"):
        if amplitude <= 0:
            raise ParameterError("amplitude", "bump amplitude must be positive")
        nodes[:, 1] = (1.0 if sign >= 0 else -1.0) * amplitude * np.sin(np.pi * s)
    elif kind != "straight":
        raise ParameterError("kind", f"unknown initial path kind {kind!r}")
    nodes[0] = A
    nodes[-1] = B
    return Path(nodes, T / N if dt is None else dt)


def delay_index(path: Path, params: ModelParams) -> int:
    """Number of mesh steps in one delay window; rejects incommensurate meshes."""
    tau = params.tau
    if tau == 0:
        return 0
    if tau >= path.horizon_T:
        raise MeshError(f"tau={tau} must be smaller than the horizon T={path.horizon_T}")
    m = int(round(tau / path.dt))
    if m < 1 or abs(m * path.dt - tau) > 1e-9 * max(1.0, tau):
        raise MeshError(f"dt={path.dt!r} does not divide tau={tau!r}")
    return m


def _workspace(path: Path):
    n = path.N
    return np.empty((n, 2)), np.empty((n + 1, 2))


def residuals(path: Path, params: ModelParams, backend=None) -> np.ndarray:
    m = delay_index(path, params)
    r = np.empty((path.N, 2))
    _backend.get(backend).residuals(path.nodes, m, path.dt, params.beta, r)
    return r


def action(path: Path, params: ModelParams, backend=None) -> ActionReport:
    """Discrete action with residuals and gradient norm."""
    m = delay_index(path, params)
    r, g = _workspace(path)
    s = _backend.get(backend).action_grad(path.nodes, m, path.dt, params.beta, r, g)
    return ActionReport(action=float(s), residuals=r, grad_inf_norm=float(np.abs(g).max()))


def action_gradient(path: Path, params: ModelParams, backend=None) -> np.ndarray:
    """Exact gradient of the discrete action; zero rows at both endpoints."""
    m = delay_index(path, params)
    r, g = _workspace(path)
    _backend.get(backend).action_grad(path.nodes, m, path.dt, params.beta, r, g)
    return g


def max_transverse_distance(path: Path) -> float:
    """``L = max_i |v_i|``."""
    return float(np.abs(path.nodes[:, 1]).max())


def write_path_csv(path: Path, filename) -> None:
    filename = FsPath(filename)
    with filename.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u", "v"])
        for t, (u, v) in zip(path.times, path.nodes):
            w.writerow([repr(float(t)), repr(float(u)), repr(float(v))])


def read_path_csv(filename) -> Path:
    """Read a ``t,u,v`` CSV; raises :class:`ParameterError` naming the bad row."""
    filename = FsPath(filename)
    rows = []
    with filename.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "u", "v"]:
            raise ParameterError("path", f"{filename}: expected header t,u,v")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 3:
                    raise ValueError
                rows.append([float(c) for c in row])
            except ValueError:
                raise ParameterError("path", f"{filename}: malformed row {lineno}: {row!r}") from None
    data = np.array(rows)
    if data.shape[0] < 3:
        raise ParameterError("path", f"{filename}: need at least 3 nodes")
    if not np.all(np.isfinite(data)):
        raise ParameterError("path", f"{filename}: non-finite values")
    steps = np.diff(data[:, 0])
    dt = (data[-1, 0] - data[0, 0]) / (len(data) - 1)
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, data[-1, 0]):
        raise ParameterError("path", f"{filename}: times are not uniformly spaced")
    return Path(data[:, 1:], dt)
