"""Post-processing of transition paths: lifetimes, forces, delay scans, diagrams."""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import _backend
from .errors import ParameterError
from .mam import L_THRESHOLD, RelaxConfig, solve_branches
from .model import A, ModelParams, State
from .path import Path, delay_index, residuals

DEFAULT_BETA_GRID = (0.4, 0.45, 0.5, 0.6, 0.8, 1.0, 1.5, 2.0)


@dataclass
class LifetimeRecord:
    """Signed deterministic relaxation times along a path.

    ``per_node[i] < 0`` means node ``i`` relaxes to A, ``> 0`` to B; ``labels``
    holds the sign explicitly (a node sitting on A has ``t_life = 0``).
    ``outliers`` lists nodes whose label disagrees with the split at
    ``transition_index``. Paths that never switch basin have
    ``transition_index = None`` and ``transition_state = None``.
    """

    per_node: np.ndarray
    labels: np.ndarray
    transition_index: int | None
    transition_state: State | None
    outliers: list = field(default_factory=list)


def history_windows(path: Path, m: int, mode: str = "path") -> np.ndarray:
    """History array ``(N + 1, m + 1, 2)``; row ``i`` ends at node ``i``."""
    n = path.N
    if mode == "constant":
        return np.ascontiguousarray(np.repeat(path.nodes[:, None, :], m + 1, axis=1))
    if mode != "path":
        raise ParameterError("history", f"unknown history mode {mode!r}")
    padded = np.concatenate([np.tile(np.asarray(A, float), (m, 1)), path.nodes])
    idx = np.arange(n + 1)[:, None] + np.arange(m + 1)[None, :]
    return np.ascontiguousarray(padded[idx])


def lifetime(path: Path, params: ModelParams, kappa: float = 1e-5, t_max: float = 500.0,
             history: str = "path", backend=None) -> LifetimeRecord:
    """Deterministic fate of every node under the noiseless delayed dynamics.

    Each node is integrated with RK4 at the path step ``dt`` until it enters the
    ``kappa``-ball of A or B, or ``t_max`` elapses (then the sign of ``u``
    decides). ``history="path"`` seeds the delay window with the path segment
    leading to the node, padded with A; ``"constant"`` freezes it at the node.
    """
    if not kappa > 0:
        raise ParameterError("kappa", "kappa must be positive")
    if not t_max > 0:
        raise ParameterError("t_max", "t_max must be positive")
    m = delay_index(path, params)
    hist = history_windows(path, m, history)
    t_out = np.empty(path.N + 1)
    labels = np.empty(path.N + 1, dtype=np.int_)
    _backend.get(backend).relax_times(hist, m, path.dt, params.beta, kappa, t_max, t_out, labels)
    neg = np.nonzero(labels < 0)[0]
    if neg.size == 0 or neg[-1] == path.N:
        return LifetimeRecord(t_out, labels, None, None, [])
    last_neg = int(neg[-1])
    idx = last_neg + 1
    mid = 0.5 * (path.nodes[last_neg] + path.nodes[idx])
    outliers = [int(i) for i in np.nonzero(labels[:idx] > 0)[0]]
    return LifetimeRecord(t_out, labels, idx, State(float(mid[0]), float(mid[1])), outliers)


def optimal_force(path: Path, params: ModelParams, backend=None) -> np.ndarray:
    """Per-interval noise amplitude ``|x' - F(x, x_delayed)|`` along the path."""
    r = residuals(path, params, backend)
    return np.hypot(r[:, 0], r[:, 1])


@dataclass
class ScanRow:
    tau: float
    beta: float
    action: float
    L: float
    branches: int
    converged: bool

    @property
    def bifurcated(self) -> bool:
        return self.L > L_THRESHOLD


@dataclass
class SlopeRow:
    tau: float
    dS_dtau: float
    d2S_dtau2: float


@dataclass
class DiagramCell:
    tau: float
    beta: float
    bifurcated: bool
    L: float
    action: float = float("nan")
    converged: bool = True
    branches: int = 1


def _row(args):
    tau, template, T, cfg, backend = args
    params = template.replace(tau=float(tau))
    res = solve_branches(params, T, None, cfg, backend=backend)
    best = min(res, key=lambda r: r.action)
    return ScanRow(float(tau), params.beta, best.action, best.L, len(res),
                   all(r.converged for r in res))


def _pool_map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def scan_tau(tau_grid, params_template: ModelParams, T: float = 100.0,
             cfg: RelaxConfig | None = None, *, jobs: int = 1, backend=None) -> list[ScanRow]:
    """Minimal action and ``L`` over a sorted grid of delays (``tau = 0`` allowed)."""
    grid = [float(t) for t in tau_grid]
    if not grid:
        raise ParameterError("tau_grid", "empty delay grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("tau_grid", "delay grid must be strictly increasing")
    if grid[0] < 0 or grid[-1] >= T:
        raise ParameterError("tau_grid", "delays must lie in [0, T)")
    return _pool_map(_row, [(t, params_template, T, cfg, backend) for t in grid], jobs)


def slope_analysis(rows, rtol: float = 1e-6) -> list[SlopeRow]:
    """First and second finite differences of the action over ``tau``.

    Unconverged rows are dropped first; the remaining grid must be uniform.
    Interior points use central differences. At the ends the slope is the
    second-order one-sided difference and the curvature is copied from the
    neighbouring interior point.
    """
    valid = [r for r in rows if r.converged]
    if len(valid) < 3:
        raise ParameterError("rows", f"slope analysis needs >= 3 converged rows, got {len(valid)}")
    tau = np.array([r.tau for r in valid])
    S = np.array([r.action for r in valid])
    steps = np.diff(tau)
    h = steps.mean()
    if np.any(np.abs(steps - h) > rtol * max(1.0, abs(h)) + 1e-12):
        raise ParameterError("rows", "slope analysis needs a uniform delay grid")
    d1 = np.empty_like(S)
    d2 = np.empty_like(S)
    d1[1:-1] = (S[2:] - S[:-2]) / (2 * h)
    d1[0] = (-3 * S[0] + 4 * S[1] - S[2]) / (2 * h)
    d1[-1] = (3 * S[-1] - 4 * S[-2] + S[-3]) / (2 * h)
    d2[1:-1] = (S[2:] - 2 * S[1:-1] + S[:-2]) / h**2
    d2[0] = d2[1]
    d2[-1] = d2[-2]
    return [SlopeRow(float(t), float(a), float(b)) for t, a, b in zip(tau, d1, d2)]


def _cell(args):
    tau, beta, T, cfg, backend = args
    params = ModelParams(tau=float(tau), beta=float(beta))
    res = solve_branches(params, T, None, cfg, backend=backend)
    best = min(res, key=lambda r: r.action)
    return DiagramCell(float(tau), float(beta), best.L > L_THRESHOLD, best.L, best.action,
                       all(r.converged for r in res), len(res))


def scan_2d(tau_grid, beta_grid=DEFAULT_BETA_GRID, T: float = 100.0,
            cfg: RelaxConfig | None = None, *, jobs: int = 1, backend=None,
            progress=None) -> list[DiagramCell]:
    """Bifurcation classification on a ``tau x beta`` grid, row-major in beta."""
    taus = [float(t) for t in tau_grid]
    betas = [float(b) for b in beta_grid]
    if not taus or not betas:
        raise ParameterError("grid", "empty scan grid")
    if any(b <= 0 for b in betas):
        raise ParameterError("beta", "beta values must be positive")
    if any(b <= a for a, b in zip(taus, taus[1:])) or any(b <= a for a, b in zip(betas, betas[1:])):
        raise ParameterError("grid", "grids must be strictly increasing")
    tasks = [(t, b, T, cfg, backend) for b in betas for t in taus]
    if jobs > 1:
        return _pool_map(_cell, tasks, jobs)
    cells = []
    for task in tasks:
        cells.append(_cell(task))
        if progress is not None:
            progress(cells[-1])
    return cells


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(filename, header, rows):
    filename = FsPath(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    with filename.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_scan_csv(rows, filename) -> None:
    """Scan rows or diagram cells as ``tau,beta,action,L,branches,bifurcated,converged``."""
    out = []
    for r in rows:
        if isinstance(r, DiagramCell):
            out.append((r.tau, r.beta, r.action, r.L, r.branches, r.bifurcated, r.converged))
        else:
            out.append((r.tau, r.beta, r.action, r.L, r.branches, r.bifurcated, r.converged))
    _write_csv(filename, ["tau", "beta", "action", "L", "branches", "bifurcated", "converged"], out)


def write_slope_csv(rows, filename) -> None:
    _write_csv(filename, ["tau", "dS_dtau", "d2S_dtau2"],
               [(r.tau, r.dS_dtau, r.d2S_dtau2) for r in rows])


def write_lifetime_csv(path: Path, record: LifetimeRecord, filename) -> None:
    _write_csv(filename, ["t", "u", "v", "t_life"],
               [(t, u, v, tl) for t, (u, v), tl in zip(path.times, path.nodes, record.per_node)])


def write_force_csv(path: Path, force, filename) -> None:
    _write_csv(filename, ["t", "b_optm"], list(zip(path.times[:-1], force)))
