"""Command-line interface.

Every command reads optional JSON config (top-level keys are shared defaults,
a section named after the command overrides them, explicit flags override
both), writes CSV/JSON artifacts to ``--out-dir`` and echoes the effective
configuration into each JSON it writes.

Exit codes: 0 ok, 1 numerical failure, 2 invalid config or input,
3 forward flux sampling starvation.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .analysis import (lifetime, optimal_force, scan_2d, scan_tau, slope_analysis,
                       write_force_csv, write_lifetime_csv, write_scan_csv, write_slope_csv)
from .errors import (DelayDtpError, DivergenceError, InterfaceStarvation, ParameterError,
                     RootSearchError)
from .ffs import FfsConfig, RateResult, action_rate_estimate, direct_rate, ffs_rate, prefactor
from .mam import RelaxConfig, find_tau_c, solve_branches, write_result
from .model import A, B, ModelParams, rightmost_char_root
from .path import read_path_csv

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG, EXIT_STARVED = 0, 1, 2, 3

DEFAULTS = {
    "tau": 0.0,
    "beta": 1.0,
    "epsilon": 0.02,
    "T": 100.0,
    "N": None,
    "out_dir": ".",
    "seed": 0,
    "jobs": 1,
    "relax": {},
}

COMMAND_DEFAULTS = {
    "solve": {},
    "scan": {"tau_grid": "0.5:1.6:0.1", "beta_grid": None, "tau_c_step": None},
    "diagnose": {"path": None, "kappa": 1e-5, "t_max": 500.0, "history": "path"},
    "rate": {"method": "ffs", "prefactor": False, "sidecar": None, "ffs_result": None,
             "n_transitions": 100, "ffs": {}},
    "stability": {"tau_grid": "0:2:0.25"},
}


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(filename: FsPath, payload: dict) -> None:
    filename.parent.mkdir(parents=True, exist_ok=True)
    filename.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def parse_grid(value, name: str) -> list[float]:
    """``"a:b:h"`` (inclusive range), ``"x,y,z"`` or a list of numbers."""
    if value is None:
        return []
    try:
        if isinstance(value, (list, tuple)):
            return [float(x) for x in value]
        text = str(value).strip()
        if not text:
            return []
        if ":" in text:
            a, b, h = (float(p) for p in text.split(":"))
            if not h > 0:
                raise ValueError
            count = int(math.floor((b - a) / h + 1e-9)) + 1
            return [round(a + h * k, 12) for k in range(max(count, 0))]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ParameterError(name, f"cannot parse grid {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--tau", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--T", type=float, dest="T")
    common.add_argument("--N", type=int, dest="N")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)

    p = argparse.ArgumentParser(prog="delaydtp", description="Transition paths of the delayed Maier-Stein model.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("solve", parents=[common], help="minimal-action paths from three starts")

    sp = sub.add_parser("scan", parents=[common], help="action and L over a delay grid, or a tau-beta diagram")
    sp.add_argument("--tau-grid", dest="tau_grid", help="a:b:h or comma list")
    sp.add_argument("--beta-grid", dest="beta_grid", help="comma list; gives a 2D diagram")
    sp.add_argument("--tau-c-step", dest="tau_c_step", type=float,
                    help="coarse spacing for the threshold bisection (default: grid spacing)")

    dp = sub.add_parser("diagnose", parents=[common], help="lifetimes and optimal forces along a path")
    dp.add_argument("--path", help="path CSV (t,u,v)")
    dp.add_argument("--kappa", type=float)
    dp.add_argument("--t-max", dest="t_max", type=float)
    dp.add_argument("--history", choices=["path", "constant"])

    rp = sub.add_parser("rate", parents=[common], help="transition rate estimates")
    rp.add_argument("--method", choices=["ffs", "direct", "action"])
    rp.add_argument("--prefactor", action="store_true", default=None,
                    help="ratio of the FFS rate to the action estimate")
    rp.add_argument("--sidecar", help="JSON sidecar of a prior solve (method=action)")
    rp.add_argument("--ffs-result", dest="ffs_result", help="RateResult JSON of a prior FFS run")
    rp.add_argument("--n-transitions", dest="n_transitions", type=int)
    rp.add_argument("--trials", type=int, help="FFS trials per interface")
    rp.add_argument("--n0", type=int, help="FFS first-interface crossings")
    rp.add_argument("--interfaces", help="FFS interfaces, a:b:h or comma list")

    st = sub.add_parser("stability", parents=[common], help="rightmost characteristic roots at A and B")
    st.add_argument("--tau-grid", dest="tau_grid")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then config file (shared keys, then command section), then flags."""
    cmd = args.command
    cfg = json.loads(json.dumps(DEFAULTS))
    cfg.update(json.loads(json.dumps(COMMAND_DEFAULTS[cmd])))
    if args.config:
        try:
            raw = json.loads(FsPath(args.config).read_text())
        except OSError as exc:
            raise ParameterError("config", f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParameterError("config", f"invalid JSON in {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise ParameterError("config", "config must be a JSON object")
        for key, value in raw.items():
            if key not in COMMAND_DEFAULTS:
                cfg[key] = value
        section = raw.get(cmd, {})
        if not isinstance(section, dict):
            raise ParameterError("config", f"section {cmd!r} must be an object")
        cfg.update(section)
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
    ffs_flags = {"trials": "trials_per_interface", "n0": "n0_crossings", "interfaces": "interfaces"}
    for flag, field_name in ffs_flags.items():
        if flag in flags:
            value = flags.pop(flag)
            if flag == "interfaces":
                value = parse_grid(value, "interfaces")
            cfg.setdefault("ffs", {})[field_name] = value
    cfg.update(flags)
    return cfg


def _params(cfg: dict) -> ModelParams:
    return ModelParams(tau=float(cfg["tau"]), beta=float(cfg["beta"]), epsilon=float(cfg["epsilon"]))


def _relax_cfg(cfg: dict) -> RelaxConfig:
    try:
        return RelaxConfig(**cfg.get("relax", {}))
    except TypeError as exc:
        raise ParameterError("relax", str(exc)) from None


def _ffs_cfg(cfg: dict) -> FfsConfig:
    opts = dict(cfg.get("ffs", {}))
    opts.setdefault("seed", int(cfg["seed"]))
    try:
        return FfsConfig(**opts)
    except TypeError as exc:
        raise ParameterError("ffs", str(exc)) from None


def _check_common(cfg: dict) -> None:
    if not float(cfg["T"]) > 0:
        raise ParameterError("T", "T must be positive")
    if int(cfg["jobs"]) < 1:
        raise ParameterError("jobs", "jobs must be >= 1")


def _stem(params: ModelParams, branch: str) -> str:
    return f"dtp_tau{params.tau:g}_beta{params.beta:g}_{branch}"


def cmd_solve(cfg: dict) -> int:
    params = _params(cfg)
    out = FsPath(cfg["out_dir"])
    results = solve_branches(params, float(cfg["T"]), cfg["N"], _relax_cfg(cfg), jobs=int(cfg["jobs"]))
    for r in results:
        write_result(r, params, out, _stem(params, r.branch),
                     extra=_clean({"branches": len(results), "config": cfg}))
    best = results[0]
    print(f"tau={params.tau:g} beta={params.beta:g} branches={len(results)} "
          f"action={best.action:.10g} L={best.L:.6g}"
          + ("" if all(r.converged for r in results) else " (not converged)"))
    return EXIT_OK if all(r.converged for r in results) else EXIT_NUMERIC


def cmd_scan(cfg: dict) -> int:
    template = _params(cfg)
    T = float(cfg["T"])
    rcfg = _relax_cfg(cfg)
    taus = parse_grid(cfg["tau_grid"], "tau_grid")
    betas = parse_grid(cfg.get("beta_grid"), "beta_grid")
    if not taus or (cfg.get("beta_grid") is not None and not betas):
        raise ParameterError("tau_grid", "scan grid is empty")
    out = FsPath(cfg["out_dir"])
    summary = {"config": cfg}
    if betas:
        cells = scan_2d(taus, betas, T, rcfg, jobs=int(cfg["jobs"]))
        write_scan_csv(cells, out / "scan.csv")
        rows = cells
        summary["cells"] = [vars(c) for c in cells]
    else:
        rows = scan_tau(taus, template, T, rcfg, jobs=int(cfg["jobs"]))
        write_scan_csv(rows, out / "scan.csv")
        try:
            slopes = slope_analysis(rows)
            write_slope_csv(slopes, out / "slope.csv")
            summary["slopes"] = [vars(s) for s in slopes]
        except ParameterError as exc:
            summary["slopes_error"] = str(exc)
        positive = [t for t in taus if t > 0]
        tau_c = None
        if len(positive) >= 2:
            step = cfg.get("tau_c_step") or min(np.diff(positive))
            tau_c = find_tau_c(template, (positive[0], positive[-1]), float(step), T, rcfg,
                               coarse=[(r.tau, r.bifurcated) for r in rows if r.tau > 0])
        summary["tau_c"] = tau_c
        summary["rows"] = [dict(vars(r), bifurcated=r.bifurcated) for r in rows]
    frac = sum(r.converged for r in rows) / len(rows)
    summary["converged_fraction"] = frac
    _write_json(out / "scan_summary.json", summary)
    line = f"rows={len(rows)} converged={frac:.0%}"
    if not betas:
        line += f" tau_c={summary['tau_c']}"
    print(line)
    return EXIT_OK if frac >= 0.9 else EXIT_NUMERIC


def cmd_diagnose(cfg: dict) -> int:
    if not cfg.get("path"):
        raise ParameterError("path", "diagnose needs --path")
    try:
        path = read_path_csv(cfg["path"])
    except OSError as exc:
        raise ParameterError("path", f"cannot read {cfg['path']}: {exc}") from None
    params = _params(cfg)
    rec = lifetime(path, params, float(cfg["kappa"]), float(cfg["t_max"]), cfg["history"])
    force = optimal_force(path, params)
    out = FsPath(cfg["out_dir"])
    write_lifetime_csv(path, rec, out / "lifetime.csv")
    write_force_csv(path, force, out / "force.csv")
    ts = None if rec.transition_state is None else list(rec.transition_state)
    _write_json(out / "diagnose.json", {
        "transition_index": rec.transition_index,
        "transition_state": ts,
        "outliers": rec.outliers,
        "max_b_optm": float(force.max()),
        "config": cfg,
    })
    print("transition_state=" + ("none" if ts is None else f"({ts[0]:.6g}, {ts[1]:.6g})")
          + f" index={rec.transition_index} outliers={len(rec.outliers)}")
    return EXIT_OK


def _action_rate(cfg: dict, params: ModelParams) -> RateResult:
    if cfg.get("sidecar"):
        try:
            meta = json.loads(FsPath(cfg["sidecar"]).read_text())
            S = float(meta["action"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ParameterError("sidecar", f"unusable sidecar {cfg['sidecar']}: {exc}") from None
        branches = int(meta.get("branches", 2 if meta.get("branch") in ("upper", "lower") else 1))
        source = str(cfg["sidecar"])
    else:
        results = solve_branches(params, float(cfg["T"]), cfg["N"], _relax_cfg(cfg), jobs=int(cfg["jobs"]))
        S = results[0].action
        branches = len(results)
        source = "solve"
    rate = action_rate_estimate(S, params, branches)
    return RateResult("action_estimate", params.tau, params.beta, params.epsilon, rate,
                      extras={"action": S, "branches": branches, "action_source": source})


def cmd_rate(cfg: dict) -> int:
    params = _params(cfg)
    out = FsPath(cfg["out_dir"])
    method = cfg["method"]
    if method not in ("ffs", "direct", "action"):
        raise ParameterError("method", f"unknown method {method!r}")
    if cfg.get("prefactor"):
        if cfg.get("ffs_result"):
            try:
                data = json.loads(FsPath(cfg["ffs_result"]).read_text())
                rate_ffs = float(data["rate_P"])
            except (OSError, ValueError, KeyError, TypeError) as exc:
                raise ParameterError("ffs_result", f"unusable FFS result: {exc}") from None
        else:
            res = ffs_rate(params, _ffs_cfg(cfg), jobs=int(cfg["jobs"]))
            _write_json(out / "rate_ffs.json", dict(res.to_dict(), config=cfg))
            rate_ffs = res.rate_P
        act = _action_rate(cfg, params)
        c0 = prefactor(rate_ffs, act.rate_P)
        _write_json(out / "prefactor.json", {
            "tau": params.tau, "beta": params.beta, "epsilon": params.epsilon, "C0": c0,
            "rate_ffs": rate_ffs, "rate_action": act.rate_P, "action": act.extras["action"],
            "branches": act.extras["branches"], "config": cfg})
        print(f"C0={c0:.6g} rate_ffs={rate_ffs:.6g} rate_action={act.rate_P:.6g}")
        return EXIT_OK
    if method == "ffs":
        res = ffs_rate(params, _ffs_cfg(cfg), jobs=int(cfg["jobs"]))
    elif method == "direct":
        res = direct_rate(params, params.epsilon, int(cfg["n_transitions"]), int(cfg["seed"]))
    else:
        res = _action_rate(cfg, params)
    _write_json(out / f"rate_{method}.json", dict(res.to_dict(), config=cfg))
    print(f"method={res.method} rate_P={res.rate_P:.10g} stderr_log={res.stderr_log:.3g}")
    if res.extras.get("budget_exhausted"):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_stability(cfg: dict) -> int:
    taus = parse_grid(cfg["tau_grid"], "tau_grid")
    if not taus:
        raise ParameterError("tau_grid", "stability grid is empty")
    out = FsPath(cfg["out_dir"])
    rows = []
    for tau in taus:
        params = ModelParams(tau=tau, beta=float(cfg["beta"]), epsilon=float(cfg["epsilon"]))
        for name, point in (("A", A), ("B", B)):
            lam = rightmost_char_root(point, params)
            rows.append({"tau": tau, "point": name, "re": lam.real, "im": lam.imag})
        print(f"tau={tau:g} rightmost root {lam.real:+.6f}{lam.imag:+.6f}i "
              + ("stable" if lam.real < 0 else "unstable"))
    out.mkdir(parents=True, exist_ok=True)
    with (out / "stability.csv").open("w") as fh:
        fh.write("tau,point,re,im\n")
        for r in rows:
            fh.write(f"{r['tau']!r},{r['point']},{r['re']!r},{r['im']!r}\n")
    _write_json(out / "stability.json", {"roots": rows, "config": cfg})
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "scan": cmd_scan, "diagnose": cmd_diagnose,
            "rate": cmd_rate, "stability": cmd_stability}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        _check_common(cfg)
        cfg["relax"] = _relax_cfg(cfg).to_dict()
        if args.command == "rate":
            cfg["ffs"] = _ffs_cfg(cfg).to_dict()
        return COMMANDS[args.command](cfg)
    except InterfaceStarvation as exc:
        print(f"error: interface {exc.index} starved: {exc}", file=sys.stderr)
        return EXIT_STARVED
    except ParameterError as exc:
        print(f"error: invalid {exc.field}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, RootSearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DelayDtpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TypeError, ValueError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
