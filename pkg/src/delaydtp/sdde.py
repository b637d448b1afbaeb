"""Euler-Maruyama integration of the stochastic delayed dynamics.

A trajectory is carried as a :class:`HistoryBuffer`: a ring of the last
``m + 1`` states covering ``[t - tau, t]``. Noise is drawn in blocks from a
numpy generator and handed to the stepping kernel, so both kernel backends see
the same numbers and produce the same trajectory.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from . import _backend
from .errors import ParameterError
from .model import A, ModelParams, State, drift

MAIER_STEIN = 0
DELAYED_OU = 1

DEFAULT_DT = 1e-3
NOISE_BLOCK = 1 << 14


def stochastic_mesh(tau: float, dt_max: float = DEFAULT_DT) -> tuple[float, int]:
    """Largest step ``dt <= dt_max`` with ``tau = m dt``; returns ``(dt, m)``."""
    if not dt_max > 0:
        raise ParameterError("dt", "dt must be positive")
    if tau == 0:
        return dt_max, 0
    m = math.ceil(tau / dt_max - 1e-9)
    return tau / m, m


@dataclass
class HistoryBuffer:
    """Ring of ``m + 1`` states; ``ring[head]`` is the newest, ``ring[(head + 1) % (m + 1)]``
    the state one delay earlier."""

    ring: np.ndarray
    head: int
    dt: float

    @property
    def m(self) -> int:
        return self.ring.shape[0] - 1

    @property
    def tau(self) -> float:
        return self.m * self.dt

    @classmethod
    def constant(cls, state, m: int, dt: float) -> "HistoryBuffer":
        ring = np.empty((m + 1, 2))
        ring[:] = np.asarray(state, dtype=float)
        return cls(ring, m, dt)

    @classmethod
    def from_window(cls, window, dt: float) -> "HistoryBuffer":
        """Build from states ordered oldest to newest."""
        ring = np.ascontiguousarray(np.asarray(window, dtype=float).reshape(-1, 2))
        return cls(ring.copy(), ring.shape[0] - 1, dt)

    def newest(self) -> State:
        return State(*map(float, self.ring[self.head]))

    def delayed(self) -> State:
        return State(*map(float, self.ring[(self.head + 1) % self.ring.shape[0]]))

    def push(self, state) -> None:
        self.head = (self.head + 1) % self.ring.shape[0]
        self.ring[self.head] = state

    def window(self) -> np.ndarray:
        """States ordered oldest to newest, shape ``(m + 1, 2)``."""
        return np.roll(self.ring, -(self.head + 1), axis=0).copy()

    def copy(self) -> "HistoryBuffer":
        return HistoryBuffer(self.ring.copy(), self.head, self.dt)


def em_step(history: HistoryBuffer, params: ModelParams, dt: float, noise) -> State:
    """One Euler-Maruyama step; the caller pushes the result into ``history``."""
    if abs(dt - history.dt) > 1e-12 * max(1.0, dt):
        raise ParameterError("dt", "dt must equal the history buffer step")
    x = history.newest()
    f = drift(x, history.delayed(), params)
    sig = math.sqrt(params.epsilon * dt)
    return State(x.u + dt * f.u + sig * float(noise[0]), x.v + dt * f.v + sig * float(noise[1]))


class NoiseStream:
    """Standard normal pairs drawn from ``rng`` in fixed blocks."""

    def __init__(self, rng: np.random.Generator, block: int = NOISE_BLOCK):
        self.rng = rng
        self.block = block
        self.buf = rng.standard_normal((block, 2))
        self.pos = 0

    def refill(self):
        self.buf = self.rng.standard_normal((self.block, 2))
        self.pos = 0


def run_until(history: HistoryBuffer, params: ModelParams, stream: NoiseStream, lo: float,
              hi: float, max_steps: int | None = None, system: int = MAIER_STEIN,
              backend=None) -> tuple[int, int]:
    """Advance until ``u <= lo`` (code -1), ``u >= hi`` (+1) or ``max_steps`` (0).

    Returns ``(steps, code)``; ``history`` is updated in place.
    """
    kern = _backend.get(backend)
    sig = math.sqrt(params.epsilon * history.dt)
    total = 0
    while max_steps is None or total < max_steps:
        if stream.pos >= stream.block:
            stream.refill()
        stop = stream.block
        if max_steps is not None:
            stop = min(stop, stream.pos + (max_steps - total))
        steps, code, head = kern.advance(system, history.ring, history.head, stream.buf,
                                         stream.pos, stop, history.dt, params.beta, sig, lo, hi)
        history.head = int(head)
        stream.pos += int(steps)
        total += int(steps)
        if code != 0:
            return total, int(code)
    return total, 0


def simulate(history: HistoryBuffer, params: ModelParams, n_steps: int, rng,
             system: int = MAIER_STEIN, backend=None) -> np.ndarray:
    """Record ``n_steps`` newest states, shape ``(n_steps, 2)``."""
    stream = NoiseStream(rng)
    out = np.empty((n_steps, 2))
    for k in range(n_steps):
        run_until(history, params, stream, -np.inf, np.inf, 1, system, backend)
        out[k] = history.ring[history.head]
    return out


def delayed_ou_variance(tau: float, epsilon: float = 0.02, dt: float = 1e-2,
                        n_steps: int = 1_000_000, burn_in: int = 10_000, seed: int = 0,
                        backend=None) -> tuple[float, float]:
    """Sample and exact stationary variance of ``x' = -x(t - tau) + sqrt(eps) eta``.

    Both coordinates run as independent copies and are pooled. The exact value
    ``(eps/2)(1 + sin tau)/cos tau`` needs ``tau < pi/2``.
    """
    if not 0 <= tau < math.pi / 2:
        raise ParameterError("tau", "the delayed OU process is stationary only for tau < pi/2")
    step, m = stochastic_mesh(tau, dt) if tau > 0 else (dt, 0)
    params = ModelParams(tau=tau, beta=1.0, epsilon=epsilon)
    hist = HistoryBuffer.constant((0.0, 0.0), m, step)
    kern = _backend.get(backend)
    rng = np.random.default_rng(seed)
    sig = math.sqrt(epsilon * step)
    stream = NoiseStream(rng)
    run_until(hist, params, stream, -np.inf, np.inf, burn_in, DELAYED_OU, backend)
    acc = np.zeros(4)
    left = n_steps
    while left > 0:
        if stream.pos >= stream.block:
            stream.refill()
        stop = min(stream.block, stream.pos + left)
        hist.head = int(kern.advance_moments(DELAYED_OU, hist.ring, hist.head, stream.buf,
                                             stream.pos, stop, step, 1.0, sig, acc))
        left -= stop - stream.pos
        stream.pos = stop
    mean_u, mean_v = acc[0] / n_steps, acc[1] / n_steps
    var = 0.5 * (acc[2] / n_steps - mean_u**2 + acc[3] / n_steps - mean_v**2)
    exact = 0.5 * epsilon * (1.0 + math.sin(tau)) / math.cos(tau)
    return float(var), exact


def write_snapshot_csv(history: HistoryBuffer, filename) -> None:
    """History window as ``offset,u,v`` with offsets from ``-tau`` to 0."""
    filename = FsPath(filename)
    win = history.window()
    m = history.m
    with filename.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["offset", "u", "v"])
        for k, (u, v) in enumerate(win):
            w.writerow([repr((k - m) * history.dt), repr(float(u)), repr(float(v))])


def read_snapshot_csv(filename) -> HistoryBuffer:
    filename = FsPath(filename)
    with filename.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["offset", "u", "v"]:
            raise ParameterError("snapshot", f"{filename}: expected header offset,u,v")
        rows = [[float(c) for c in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(-1, 3)
    if data.shape[0] == 0:
        raise ParameterError("snapshot", f"{filename}: empty snapshot")
    dt = (data[-1, 0] - data[0, 0]) / (data.shape[0] - 1) if data.shape[0] > 1 else DEFAULT_DT
    return HistoryBuffer.from_window(data[:, 1:], dt)


def basin_history(tau: float, dt_max: float = DEFAULT_DT) -> HistoryBuffer:
    dt, m = stochastic_mesh(tau, dt_max)
    return HistoryBuffer.constant(A, m, dt)
