import json
import math

import pytest

from delaydtp.errors import InterfaceStarvation, ParameterError
from delaydtp.ffs import (DEFAULT_INTERFACES, FfsConfig, RateResult, action_rate_estimate,
                          direct_rate, ffs_rate, prefactor)
from delaydtp.model import ModelParams

SMALL = dict(interfaces=(-0.7, -0.4, -0.1, 0.2, 0.5), trials_per_interface=60, n0_crossings=40)


def test_config_validation_and_refinement():
    assert DEFAULT_INTERFACES[0] == -0.7 and DEFAULT_INTERFACES[-1] == 0.5
    with pytest.raises(ParameterError):
        FfsConfig(interfaces=(0.1,))
    with pytest.raises(ParameterError):
        FfsConfig(interfaces=(-0.5, -0.6, 0.5))
    with pytest.raises(ParameterError):
        FfsConfig(lambda_A=-0.7)
    with pytest.raises(ParameterError):
        FfsConfig(interfaces=(-0.7, -0.1))
    with pytest.raises(ParameterError):
        FfsConfig(trials_per_interface=0)
    r = FfsConfig(interfaces=(-0.7, -0.1, 0.5)).refined()
    assert r.interfaces == pytest.approx((-0.7, -0.4, -0.1, 0.2, 0.5), abs=1e-15)
    assert FfsConfig().to_dict()["interfaces"] == list(DEFAULT_INTERFACES)


def test_ffs_seed_determinism_and_jobs():
    p = ModelParams(tau=0.1, epsilon=0.1)
    a = ffs_rate(p, FfsConfig(seed=5, **SMALL))
    b = ffs_rate(p, FfsConfig(seed=5, **SMALL))
    c = ffs_rate(p, FfsConfig(seed=5, **SMALL), jobs=2)
    assert a.to_dict() == b.to_dict() == c.to_dict()
    d = ffs_rate(p, FfsConfig(seed=6, **SMALL))
    assert d.rate_P != a.rate_P


def test_ffs_result_fields():
    p = ModelParams(epsilon=0.1)
    r = ffs_rate(p, FfsConfig(seed=1, **SMALL))
    assert len(r.conditional_probs) == 4
    assert all(0 < q <= 1 for q in r.conditional_probs)
    assert r.rate_P == pytest.approx(r.flux0 * math.prod(r.conditional_probs))
    expected = math.sqrt(1 / 40 + sum((1 - q) / (q * 60) for q in r.conditional_probs))
    assert r.stderr_log == pytest.approx(expected)
    d = json.loads(r.to_json())
    assert d["method"] == "ffs" and d["config"]["seed"] == 1


def test_starvation_names_interface():
    p = ModelParams(epsilon=0.005)
    cfg = FfsConfig(lambda_A=-0.95, interfaces=(-0.9, 0.5), trials_per_interface=5,
                    n0_crossings=5, seed=0)
    with pytest.raises(InterfaceStarvation) as info:
        ffs_rate(p, cfg)
    assert info.value.index == 1


def test_basin_budget_starvation():
    cfg = FfsConfig(max_basin_steps=10, **SMALL)
    with pytest.raises(InterfaceStarvation) as info:
        ffs_rate(ModelParams(epsilon=0.01), cfg)
    assert info.value.index == 0


def test_direct_rate_budget_and_determinism():
    p = ModelParams(epsilon=0.3)
    a = direct_rate(p, n_transitions=6, seed=2)
    b = direct_rate(p, n_transitions=6, seed=2)
    assert a.to_json() == b.to_json()
    assert a.extras["n_transitions"] == 6 and not a.extras["budget_exhausted"]
    assert a.rate_P == pytest.approx(6 / (a.extras["time_in_A"] + a.extras["time_in_B"]))
    c = direct_rate(p, n_transitions=10**6, seed=2, max_steps=1000)
    assert c.extras["budget_exhausted"]
    with pytest.raises(ParameterError):
        direct_rate(p, n_transitions=0)


def test_action_rate_and_prefactor():
    p = ModelParams(epsilon=0.02)
    assert action_rate_estimate(0.5, p) == pytest.approx(math.exp(-25))
    assert action_rate_estimate(0.5, p, 2) == pytest.approx(2 * math.exp(-25))
    assert action_rate_estimate(0.0, p) == 1.0
    with pytest.raises(ParameterError):
        action_rate_estimate(-0.1, p)
    with pytest.raises(ParameterError):
        action_rate_estimate(0.5, p, 3)
    assert prefactor(3e-10, 1e-10) == pytest.approx(3.0)
    with pytest.raises(ParameterError):
        prefactor(1.0, 0.0)


def test_rate_result_to_dict_merges_extras():
    r = RateResult("x", 0.0, 1.0, 0.02, 1e-3, extras={"k": 1})
    assert r.to_dict()["k"] == 1 and r.to_dict()["rate_P"] == 1e-3
