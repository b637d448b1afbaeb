"""Minimum action method: relaxation of discretised paths and branch detection.

The descent direction is the gradient preconditioned by the discrete
``H^1`` operator ``(1/dt) tridiag(-1, 2, -1) + alpha dt I`` with Dirichlet ends.
That operator only rescales the pseudo-time of the gradient flow; fixed points
are unchanged, but stiff short-wavelength modes no longer limit the step size.
``preconditioner="none"`` recovers plain explicit gradient descent.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import _backend
from .errors import DivergenceError, ParameterError
from .model import A, B, ModelParams
from .path import (Path, default_mesh, delay_index, make_path, max_transverse_distance,
                   write_path_csv)

L_THRESHOLD = 0.05
BUMP_AMPLITUDE = 0.1
DEDUP_DISTANCE = 1e-3
ACTION_TOL = 1e-6

_STATUS = {0: "grad_tol", 1: "plateau", 2: "max_iters", 3: "line_search", 4: "diverged"}


@dataclass(frozen=True)
class RelaxConfig:
    """Stopping rule and step policy for :func:`relax`.

    Parameters
    ----------
    max_iters : int
        Iteration cap; reaching it leaves the run unconverged.
    grad_tol : float
        Stop when the sup-norm of the raw action gradient drops below this.
    step_init, step_max : float
        First trial step and cap for the doubling trial step. ``step_max=None``
        means ``step_init``.
    backtrack_factor, armijo_c : float
        Armijo backtracking parameters.
    preconditioner : {"sobolev", "none"}
    sobolev_alpha : float
        Mass weight of the ``H^1`` preconditioner.
    plateau_window, plateau_rtol, plateau_grad_tol
        Alternative stop for slowly creeping runs: the action fell by less than
        ``plateau_rtol`` (relative) over the last ``plateau_window`` iterations
        while the gradient is already below ``plateau_grad_tol``.
        ``plateau_window=0`` disables it.
    record_trace : bool
        Keep the accepted action sequence in the result.
    """

    max_iters: int = 200_000
    grad_tol: float = 1e-9
    step_init: float = 1.0
    step_max: float | None = None
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    preconditioner: str = "sobolev"
    sobolev_alpha: float = 1.0
    plateau_window: int = 10_000
    plateau_rtol: float = 1e-7
    plateau_grad_tol: float = 1e-6
    record_trace: bool = False

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ParameterError("max_iters", "max_iters must be >= 1")
        for name in ("grad_tol", "step_init", "sobolev_alpha", "plateau_grad_tol"):
            if not getattr(self, name) > 0:
                raise ParameterError(name, f"{name} must be positive")
        if self.step_max is not None and not self.step_max > 0:
            raise ParameterError("step_max", "step_max must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ParameterError("backtrack_factor", "backtrack_factor must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ParameterError("armijo_c", "armijo_c must lie in (0, 1)")
        if self.preconditioner not in ("sobolev", "none"):
            raise ParameterError("preconditioner", f"unknown preconditioner {self.preconditioner!r}")
        if int(self.plateau_window) < 0:
            raise ParameterError("plateau_window", "plateau_window must be >= 0")

    @classmethod
    def plain(cls, **overrides) -> "RelaxConfig":
        """Unpreconditioned gradient descent with a small fixed trial step."""
        base = dict(preconditioner="none", step_init=1e-2, max_iters=500_000,
                    grad_tol=1e-6, plateau_window=0)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DtpResult:
    """Outcome of one relaxation run."""

    path: Path
    action: float
    branch: str
    converged: bool
    iterations: int
    L: float
    grad_inf_norm: float
    status: str
    start: str = ""
    trace: np.ndarray | None = field(default=None, repr=False)

    def mirrored(self) -> "DtpResult":
        flip = {"upper": "lower", "lower": "upper"}.get(self.branch, self.branch)
        start = {"bump+": "bump-", "bump-": "bump+"}.get(self.start, self.start)
        return DtpResult(self.path.mirrored(), self.action, flip, self.converged,
                         self.iterations, self.L, self.grad_inf_norm, self.status, start,
                         None if self.trace is None else self.trace.copy())


def classify_branch(path: Path, threshold: float = L_THRESHOLD) -> str:
    v = path.nodes[:, 1]
    i = int(np.argmax(np.abs(v)))
    if abs(v[i]) < threshold:
        return "on_axis"
    return "upper" if v[i] > 0 else "lower"


def relax(path: Path, params: ModelParams, cfg: RelaxConfig | None = None,
          backend=None, start: str = "") -> DtpResult:
    """Relax ``path`` toward a local minimiser of the discrete action.

    Endpoints must sit at A and B and are never modified. A non-finite action
    is reported as a failed run (``status="diverged"``) rather than raised.
    """
    cfg = cfg or RelaxConfig()
    m = delay_index(path, params)
    if not (np.array_equal(path.nodes[0], A) and np.array_equal(path.nodes[-1], B)):
        raise ParameterError("path", "relaxation needs endpoints pinned at A and B")
    x = np.array(path.nodes, dtype=float, order="C", copy=True)
    trace = np.empty(cfg.max_iters if cfg.record_trace else 0)
    step_max = cfg.step_init if cfg.step_max is None else cfg.step_max
    S, k, gi, code = _backend.get(backend).relax_loop(
        x, m, path.dt, params.beta, cfg.grad_tol, int(cfg.max_iters), cfg.step_init, step_max,
        cfg.backtrack_factor, cfg.armijo_c, int(cfg.preconditioner == "sobolev"),
        cfg.sobolev_alpha, int(cfg.plateau_window), cfg.plateau_rtol, cfg.plateau_grad_tol, trace)
    status = _STATUS[code]
    # a failed line search at a vanishing gradient means the minimum is resolved to rounding
    converged = code in (0, 1) or (code == 3 and gi < cfg.plateau_grad_tol)
    out = Path(x, path.dt)
    finite = bool(np.isfinite(S)) and bool(np.all(np.isfinite(x)))
    return DtpResult(
        path=out,
        action=float(S) if finite else float("nan"),
        branch=classify_branch(out) if finite else "on_axis",
        converged=converged and finite,
        iterations=int(k),
        L=max_transverse_distance(out) if finite else float("nan"),
        grad_inf_norm=float(gi),
        status=status if finite else "diverged",
        start=start,
        trace=trace[: min(k, trace.shape[0])].copy() if cfg.record_trace else None,
    )


def initial_paths(T: float, N: int, dt: float, amplitude: float = BUMP_AMPLITUDE):
    return {
        "straight": make_path(T, N, "straight", dt=dt),
        "bump+": make_path(T, N, "bump", amplitude, +1, dt=dt),
        "bump-": make_path(T, N, "bump", amplitude, -1, dt=dt),
    }


def mesh_for(params: ModelParams, T: float, N: int | None = None) -> tuple[int, float]:
    """Resolve ``(N, dt)``; an explicit ``N`` must be commensurate with the delay."""
    if N is None:
        n, dt, _ = default_mesh(params.tau, T)
        return n, dt
    if N < 2:
        raise ParameterError("N", f"N must be >= 2, got {N}")
    dt = T / N
    delay_index(Path(np.zeros((N + 1, 2)), dt), params)
    return N, dt


def _relax_job(args):
    path, params, cfg, backend, start = args
    return relax(path, params, cfg, backend, start)


def _node_distance(p: Path, q: Path) -> float:
    return float(np.max(np.hypot(*(p.nodes - q.nodes).T)))


def solve_branches(params: ModelParams, T: float = 100.0, N: int | None = None,
                   cfg: RelaxConfig | None = None, *, jobs: int = 1,
                   use_mirror: bool = True, backend=None) -> list[DtpResult]:
    """Minimal-action transition paths from three starts.

    Runs :func:`relax` from the straight path and from bumps of either sign,
    merges coincident results and returns every distinct minimiser whose action
    is within ``ACTION_TOL`` of the lowest one, sorted by branch label.

    The discrete problem is exactly equivariant under ``v -> -v``, so with
    ``use_mirror`` the negative bump is obtained by reflecting the positive one
    instead of being relaxed again (the two agree to the last bit).
    """
    cfg = cfg or RelaxConfig()
    n, dt = mesh_for(params, T, N)
    starts = initial_paths(T, n, dt)
    names = ["straight", "bump+"] if use_mirror else ["straight", "bump+", "bump-"]
    tasks = [(starts[k], params, cfg, backend, k) for k in names]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            runs = list(pool.map(_relax_job, tasks))
    else:
        runs = [_relax_job(t) for t in tasks]
    if use_mirror:
        runs.append(runs[1].mirrored())
    ok = [r for r in runs if r.status != "diverged"]
    if not ok:
        raise DivergenceError("all relaxation runs diverged; reduce step_init")
    ok.sort(key=lambda r: r.action)
    distinct: list[DtpResult] = []
    for r in ok:
        if any(r.branch == d.branch or _node_distance(r.path, d.path) < DEDUP_DISTANCE
               for d in distinct):
            continue
        distinct.append(r)
    best = distinct[0].action
    keep = [r for r in distinct if r.action - best <= ACTION_TOL * max(1.0, abs(best))]
    order = {"on_axis": 0, "upper": 1, "lower": 2}
    return sorted(keep, key=lambda r: order[r.branch])


def is_bifurcated(results: list[DtpResult], threshold: float = L_THRESHOLD) -> bool:
    return min(results, key=lambda r: r.action).L > threshold


def find_tau_c(params_template: ModelParams, tau_range=(0.5, 1.6), coarse_step: float = 0.1,
               T: float = 100.0, cfg: RelaxConfig | None = None, *, jobs: int = 1,
               record: list | None = None, coarse: list | None = None) -> float | None:
    """Delay at which the minimal-action path leaves the axis.

    Classifies a coarse grid over ``tau_range`` (bifurcated iff ``L > 0.05``),
    bisects the first false-to-true bracket down to ``coarse_step / 8`` and
    returns its midpoint, or ``None`` without a sign change. ``record`` collects
    ``(tau, L, bifurcated)`` for every solve. ``coarse`` may supply the grid
    classification as ``(tau, bifurcated)`` pairs from an earlier scan.
    """
    lo, hi = map(float, tau_range)
    if not (0 < lo < hi < T):
        raise ParameterError("tau_range", f"tau_range must satisfy 0 < lo < hi < T, got {tau_range}")
    if not coarse_step > 0:
        raise ParameterError("coarse_step", "coarse_step must be positive")

    def classify(tau):
        res = solve_branches(params_template.replace(tau=float(tau)), T, None, cfg, jobs=jobs)
        best = min(res, key=lambda r: r.action)
        flag = best.L > L_THRESHOLD
        if record is not None:
            record.append((float(tau), best.L, flag))
        return flag

    if coarse is None:
        count = int(np.floor((hi - lo) / coarse_step + 1e-9)) + 1
        coarse = [(t, classify(t)) for t in lo + coarse_step * np.arange(count)]
    coarse = sorted((float(t), bool(f)) for t, f in coarse)
    bracket = next(((a[0], b[0]) for a, b in zip(coarse, coarse[1:]) if not a[1] and b[1]), None)
    if bracket is None:
        return None
    a, b = bracket
    while b - a > coarse_step / 8 + 1e-12:
        mid = 0.5 * (a + b)
        if classify(mid):
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


def write_result(result: DtpResult, params: ModelParams, out_dir, stem: str,
                 extra: dict | None = None) -> tuple[FsPath, FsPath]:
    """Write ``<stem>.csv`` (path) and ``<stem>.json`` (sidecar)."""
    out_dir = FsPath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_file = out_dir / f"{stem}.csv"
    json_file = out_dir / f"{stem}.json"
    write_path_csv(result.path, csv_file)
    meta = sidecar(result, params)
    if extra:
        meta.update(extra)
    json_file.write_text(json.dumps(meta, indent=2) + "\n")
    return csv_file, json_file


def sidecar(result: DtpResult, params: ModelParams) -> dict:
    return {
        "action": result.action,
        "branch": result.branch,
        "converged": result.converged,
        "iterations": result.iterations,
        "L": result.L,
        "tau": params.tau,
        "beta": params.beta,
        "T": result.path.horizon_T,
        "N": result.path.N,
        "grad_inf_norm": result.grad_inf_norm,
        "status": result.status,
    }
