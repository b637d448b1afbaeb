"""Transition rates: forward flux sampling, brute-force simulation, action estimate.

The order parameter is the ``u`` coordinate. Because the dynamics is not
Markovian in ``(u, v)`` alone, every stored interface crossing keeps the whole
delay window, and trials restart from that window.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InterfaceStarvation, ParameterError
from .model import ModelParams
from .sdde import DEFAULT_DT, HistoryBuffer, NoiseStream, basin_history, run_until

DEFAULT_INTERFACES = tuple(round(-0.7 + 0.05 * k, 10) for k in range(25))


@dataclass(frozen=True)
class FfsConfig:
    """Forward flux sampling setup.

    Parameters
    ----------
    lambda_A : float
        A trajectory belongs to A once ``u <= lambda_A``.
    interfaces : tuple of float
        Increasing ``u`` levels; reaching the last one counts as arrival in B.
    trials_per_interface : int
    n0_crossings : int
        Forward crossings of the first interface collected from the basin run.
    seed : int
    dt_max : float
        Step bound; the step actually used divides the delay.
    max_basin_steps : int or None
        Safety cap for the basin run.
    """

    lambda_A: float = -0.8
    interfaces: tuple = DEFAULT_INTERFACES
    trials_per_interface: int = 1000
    n0_crossings: int = 1000
    seed: int = 0
    dt_max: float = DEFAULT_DT
    max_basin_steps: int | None = None

    def __post_init__(self):
        ifs = tuple(float(x) for x in self.interfaces)
        object.__setattr__(self, "interfaces", ifs)
        if len(ifs) < 2:
            raise ParameterError("interfaces", "need at least two interfaces")
        if any(b <= a for a, b in zip(ifs, ifs[1:])):
            raise ParameterError("interfaces", "interfaces must be strictly increasing")
        if not self.lambda_A < ifs[0]:
            raise ParameterError("lambda_A", "lambda_A must lie below the first interface")
        if not ifs[-1] > 0:
            raise ParameterError("interfaces", "the last interface must lie in the basin of B (u > 0)")
        if self.trials_per_interface < 1 or self.n0_crossings < 1:
            raise ParameterError("trials_per_interface", "trial counts must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["interfaces"] = list(self.interfaces)
        return d

    def refined(self) -> "FfsConfig":
        """Same endpoints with a midpoint inserted between neighbouring interfaces."""
        ifs = self.interfaces
        new = [ifs[0]]
        for a, b in zip(ifs, ifs[1:]):
            new += [0.5 * (a + b), b]
        d = asdict(self)
        d["interfaces"] = tuple(new)
        return FfsConfig(**d)


@dataclass
class RateResult:
    method: str
    tau: float
    beta: float
    epsilon: float
    rate_P: float
    flux0: float = float("nan")
    conditional_probs: list = field(default_factory=list)
    stderr_log: float = float("nan")
    seed: int | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "tau": self.tau,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "rate_P": self.rate_P,
            "flux0": self.flux0,
            "conditional_probs": list(self.conditional_probs),
            "stderr_log": self.stderr_log,
            "seed": self.seed,
        }
        out.update(self.extras)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _trial_rng(seed: int, stage: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stage, trial)))


def _basin_run(params: ModelParams, cfg: FfsConfig, backend=None):
    """Collect forward crossings of the first interface from a long run in A."""
    hist = basin_history(params.tau, cfg.dt_max)
    stream = NoiseStream(_trial_rng(cfg.seed, 0, 0))
    lam0, lam_b = cfg.interfaces[0], cfg.interfaces[-1]
    snaps = []
    steps_in_a = 0
    reached_b = 0
    budget = cfg.max_basin_steps
    while len(snaps) < cfg.n0_crossings:
        left = None if budget is None else budget - steps_in_a
        if left is not None and left <= 0:
            raise InterfaceStarvation(0, f"basin run exhausted {budget} steps with "
                                         f"{len(snaps)} crossings of u={lam0}")
        # inside A: wait for a forward crossing of lambda_0
        n, code = run_until(hist, params, stream, -np.inf, lam0, left, backend=backend)
        steps_in_a += n
        if code == 0:
            continue
        snaps.append(hist.window())
        # must fall back to A before the next crossing counts
        n, code = run_until(hist, params, stream, cfg.lambda_A, lam_b, None, backend=backend)
        steps_in_a += n
        if code == 1:
            # reached B: restart from A, the excursion time stays on the clock
            reached_b += 1
            hist = basin_history(params.tau, cfg.dt_max)
    return snaps, steps_in_a * hist.dt, hist.dt, reached_b


def _stage_trials(args):
    pool, stage, trials, seed, params, lam_a, target, dt, backend = args
    out = []
    for j in trials:
        rng = _trial_rng(seed, stage, j)
        start = pool[int(rng.integers(len(pool)))]
        hist = HistoryBuffer.from_window(start, dt)
        stream = NoiseStream(rng, block=4096)
        _, code = run_until(hist, params, stream, lam_a, target, None, backend=backend)
        out.append(hist.window() if code == 1 else None)
    return out


def ffs_rate(params: ModelParams, cfg: FfsConfig | None = None, *, jobs: int = 1,
             backend=None) -> RateResult:
    """Direct forward flux sampling of the A -> B rate.

    ``rate_P = flux0 * prod(p_i)`` with ``flux0`` the rate of forward crossings
    of the first interface per unit time spent in A, and ``p_i`` the fraction of
    trials from interface ``i`` that reach ``i + 1`` before returning to A.
    Fully determined by ``cfg.seed``; the worker count does not change results.
    """
    cfg = cfg or FfsConfig()
    pool, t_a, dt, reached_b = _basin_run(params, cfg, backend)
    n0 = len(pool)
    flux0 = n0 / t_a
    probs = []
    M = cfg.trials_per_interface
    for i, target in enumerate(cfg.interfaces[1:], start=1):
        if jobs > 1:
            blocks = [list(b) for b in np.array_split(np.arange(M), jobs) if len(b)]
            tasks = [(pool, i, b, cfg.seed, params, cfg.lambda_A, target, dt, backend) for b in blocks]
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                res = [s for part in ex.map(_stage_trials, tasks) for s in part]
        else:
            res = _stage_trials((pool, i, range(M), cfg.seed, params, cfg.lambda_A, target, dt, backend))
        nxt = [s for s in res if s is not None]
        if not nxt:
            raise InterfaceStarvation(i, f"no trial from u={cfg.interfaces[i - 1]} reached "
                                         f"interface {i} (u={target})")
        probs.append(len(nxt) / M)
        pool = nxt
    rate = flux0 * math.prod(probs)
    stderr = math.sqrt(1.0 / n0 + sum((1 - p) / (p * M) for p in probs))
    return RateResult("ffs", params.tau, params.beta, params.epsilon, rate, flux0, probs,
                      stderr, cfg.seed,
                      {"dt": dt, "time_in_A": t_a, "basin_reached_B": reached_b,
                       "config": cfg.to_dict()})


def direct_rate(params: ModelParams, epsilon_run: float | None = None, n_transitions: int = 100,
                seed: int = 0, *, lambda_A: float = -0.8, lambda_B: float = 0.5,
                dt_max: float = DEFAULT_DT, max_steps: int = 10**10, backend=None) -> RateResult:
    """Rate from one long trajectory hopping between the wells.

    A trajectory is in A after visiting ``u <= lambda_A`` and leaves A for good
    when it reaches ``u >= lambda_B``; B is defined by reflection ``u -> -u``.
    Transitions both ways are pooled (the model is symmetric in ``u``), so the
    rate is the total count over the total time spent in either state.
    ``max_steps`` bounds the work; hitting it returns the partial estimate with
    ``extras["budget_exhausted"] = True``.
    """
    if n_transitions < 1:
        raise ParameterError("n_transitions", "n_transitions must be >= 1")
    eps = params.epsilon if epsilon_run is None else float(epsilon_run)
    run_params = params.replace(epsilon=eps)
    hist = basin_history(params.tau, dt_max)
    dt = hist.dt
    stream = NoiseStream(_trial_rng(seed, 0, 0))
    counts = {"AB": 0, "BA": 0}
    steps = {"A": 0, "B": 0}
    state = "A"
    used = 0
    exhausted = False
    while counts["AB"] + counts["BA"] < n_transitions:
        left = max_steps - used
        if left <= 0:
            exhausted = True
            break
        if state == "A":
            n, code = run_until(hist, run_params, stream, -np.inf, lambda_B, left, backend=backend)
        else:
            n, code = run_until(hist, run_params, stream, -lambda_B, np.inf, left, backend=backend)
        used += n
        steps[state] += n
        if code == 0:
            continue
        counts["AB" if state == "A" else "BA"] += 1
        # transit to the other core; a fall-back restarts the dwell in the old state
        n, code = run_until(hist, run_params, stream, lambda_A, -lambda_A, None, backend=backend)
        used += n
        state = "B" if code == 1 else "A"
    total = counts["AB"] + counts["BA"]
    t_a, t_b = steps["A"] * dt, steps["B"] * dt
    rate = total / (t_a + t_b) if t_a + t_b > 0 else 0.0
    extras = {
        "dt": dt,
        "n_transitions": total,
        "rate_AB": counts["AB"] / t_a if t_a > 0 else 0.0,
        "rate_BA": counts["BA"] / t_b if t_b > 0 else 0.0,
        "n_AB": counts["AB"],
        "n_BA": counts["BA"],
        "time_in_A": t_a,
        "time_in_B": t_b,
        "budget_exhausted": exhausted,
        "lambda_A": lambda_A,
        "lambda_B": lambda_B,
    }
    stderr = 1.0 / math.sqrt(total) if total else float("inf")
    return RateResult("direct", params.tau, params.beta, eps, rate, float("nan"), [], stderr,
                      seed, extras)


def action_rate_estimate(S: float, params: ModelParams, branches: int = 1) -> float:
    """Bare exponential estimate ``branches * exp(-S / eps)``."""
    if not S >= 0:
        raise ParameterError("S", f"action must be >= 0, got {S}")
    if branches not in (1, 2):
        raise ParameterError("branches", f"branches must be 1 or 2, got {branches}")
    return branches * math.exp(-S / params.epsilon)


def prefactor(rate_ffs: float, rate_action: float) -> float:
    """``C0 = rate_ffs / rate_action``."""
    if not rate_action > 0:
        raise ParameterError("rate_action", "rate_action must be positive")
    return rate_ffs / rate_action
