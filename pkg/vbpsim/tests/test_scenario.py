# Copyright 2026 The vbpsim developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
Test the scenario data model, cost sampling and overrides.
"""
import logging
import math
import pytest
import numpy as np
from vbpsim import DATA_PATH, TEST_DATA
from vbpsim.src.scenario import (FirmConfig, FirmType, ScenarioError, ScenarioFormatError,
                                 SensitivityOverride, TaskSpec, TaskSpecError,
                                 apply_overrides, dump_scenarios, is_resolved,
                                 load_scenarios, make_override, override_label,
                                 resolve_costs, sample_cost, validate_scenario,
                                 validate_task)
from .example_fixtures import adefovir, unresolved


def test_load_adefovir():
    scenarios = load_scenarios(DATA_PATH / "scenarios" / "examples.json")
    scenario = scenarios[0]
    assert scenario.drug_id == "adefovir"
    assert math.isclose(scenario.p_max, 1.08)
    assert scenario.x == 2
    assert math.isclose(scenario.rho, 0.6)
    assert math.isclose(scenario.q0, 2893.17)
    assert math.isclose(scenario.qe, 3471.80)
    assert [firm.firm_id for firm in scenario.firms] == ["F1", "F2", "F3"]
    firm = scenario.firms[1]
    assert math.isclose(firm.omega, 2.0)
    assert firm.firm_type == FirmType.A
    assert firm.has_raw_material
    assert math.isclose(firm.cost, 0.0980)
    # residual shares default to 1/N
    assert all(math.isclose(firm.beta, 1/3) for firm in scenario.firms)


def test_load_amoxicillin():
    scenarios = {scenario.drug_id: scenario
                 for scenario in load_scenarios(DATA_PATH / "scenarios" / "examples.json")}
    scenario = scenarios["amoxicillin"]
    assert scenario.x == 6
    assert math.isclose(scenario.rho, 0.8)
    assert len(scenario.firms) == 12
    assert all(firm.cost <= 0.0270 for firm in scenario.firms)


@pytest.mark.parametrize("file_, error, text", [
    ("x_exceeds.json", ScenarioError, "x exceeds firm count"),
    ("beta_sum.json", ScenarioError, "oversold"),
    ("broken.json", ScenarioFormatError, "line 7 column"),
])
def test_load_invalid(file_, error, text):
    with pytest.raises(error) as excinfo:
        load_scenarios(TEST_DATA / "scenarios" / file_)
    assert text in str(excinfo.value)


def test_soft_warnings(caplog):
    caplog.set_level(logging.WARNING)
    scenario = load_scenarios(TEST_DATA / "scenarios" / "low_qe.json")[0]
    assert scenario.firms[0].firm_type == FirmType.C
    assert not scenario.firms[0].has_raw_material
    assert scenario.firms[1].has_raw_material
    warnings = validate_scenario(scenario)
    assert len(warnings) == 1
    assert "below rho*q0" in warnings[0]
    assert any("below rho*q0" in record.getMessage() for record in caplog.records)


def test_beta_rounding_is_tolerated(adefovir):
    firms = tuple(firm._replace(beta=0.3333334) for firm in adefovir.firms)
    warnings = validate_scenario(adefovir._replace(firms=firms))
    assert any("slightly above 1" in msg for msg in warnings)


@pytest.mark.parametrize("field, value, text", [
    ("p_max", 0.0, "p_max"),
    ("rho", 0.0, "rho"),
    ("x", 0, "x"),
    ("q0", -1.0, "q0"),
    ("firms", (), "firms"),
])
def test_validate_rejects(adefovir, field, value, text):
    with pytest.raises(ScenarioError) as excinfo:
        validate_scenario(adefovir._replace(**{field: value}))
    assert "adefovir" in str(excinfo.value)
    assert text in str(excinfo.value)


def test_validate_rejects_cost_above_ceiling(adefovir):
    firms = (adefovir.firms[0]._replace(cost=1.2),) + adefovir.firms[1:]
    with pytest.raises(ScenarioError, match=r"firms\[F1\]\.cost"):
        validate_scenario(adefovir._replace(firms=firms))


def test_validate_rejects_duplicate_ids(adefovir):
    firms = adefovir.firms[:2] + (adefovir.firms[2]._replace(firm_id="F1"),)
    with pytest.raises(ScenarioError, match="duplicate"):
        validate_scenario(adefovir._replace(firms=firms))


@pytest.mark.parametrize("token, expected", [
    ("A", FirmType.A),
    ("d", FirmType.D),
    ("Type B", FirmType.B),
    (FirmType.C, FirmType.C),
])
def test_firm_type_parse(token, expected):
    assert FirmType.parse(token) == expected


def test_firm_type_parse_unknown():
    with pytest.raises(ScenarioFormatError):
        FirmType.parse("E")


def test_sample_cost_type_a_with_raw_material():
    firm = FirmConfig("F2", 2.0, FirmType.A, True, 1/3)
    rng = np.random.default_rng(4)
    for _ in range(1000):
        cost = sample_cost(firm, 1.08, rng)
        assert 0.90 * 0.054 <= cost < 0.95 * 0.1242
    # the published cost of F2 lies in the same interval
    assert 0.0486 <= 0.0980 < 0.11799


def test_sample_cost_type_d():
    firm = FirmConfig("S1", 0.0, FirmType.D, False, 0.5)
    rng = np.random.default_rng(5)
    costs = [sample_cost(firm, 1.0, rng) for _ in range(1000)]
    assert min(costs) >= 0.115
    assert max(costs) < 0.30


def test_sample_cost_type_b_mean():
    firm = FirmConfig("S1", 0.0, FirmType.B, False, 0.5)
    rng = np.random.default_rng(6)
    costs = np.array([sample_cost(firm, 1.0, rng) for _ in range(100000)])
    assert abs(costs.mean() - 0.1575) / 0.1575 < 0.01


def test_sample_cost_needs_missing_cost(adefovir):
    with pytest.raises(ScenarioError):
        sample_cost(adefovir.firms[0], adefovir.p_max, np.random.default_rng(0))


def test_resolve_costs(unresolved, adefovir):
    first = resolve_costs(unresolved, 42)
    second = resolve_costs(unresolved, 42)
    other = resolve_costs(unresolved, 43)
    assert is_resolved(first)
    assert not is_resolved(unresolved)
    assert [firm.cost for firm in first.firms] == [firm.cost for firm in second.firms]
    assert [firm.cost for firm in first.firms] != [firm.cost for firm in other.firms]
    # given costs are kept
    assert resolve_costs(adefovir, 1) == adefovir


def test_override_p_max(adefovir):
    result = apply_overrides(adefovir, [SensitivityOverride("p_max", 1.2)])
    assert math.isclose(result.p_max, 1.296)
    assert result._replace(p_max=adefovir.p_max) == adefovir


def test_override_empty(adefovir):
    assert apply_overrides(adefovir, []) == adefovir


def test_override_cost(adefovir):
    result = apply_overrides(adefovir, [make_override("cost", 0.5)])
    for old, new in zip(adefovir.firms, result.firms):
        assert math.isclose(new.cost, old.cost * 0.5)


def test_override_rho_clamped(adefovir, caplog):
    caplog.set_level(logging.WARNING)
    result = apply_overrides(adefovir, [make_override("rho", 2.0)])
    assert result.rho == 1.0
    assert any("clamping" in record.getMessage() for record in caplog.records)


@pytest.mark.parametrize("target, first, second", [
    ("p_max", 1.1, 0.9),
    ("q0", 1.5, 1.2),
    ("qe", 1.1, 0.95),
    ("cost", 0.8, 1.25),
    ("rho", 1.2, 1.1),
])
def test_override_composition(adefovir, target, first, second):
    stepwise = apply_overrides(adefovir, [make_override(target, first),
                                          make_override(target, second)])
    nested = apply_overrides(apply_overrides(adefovir, [make_override(target, first)]),
                             [make_override(target, second)])
    combined = apply_overrides(adefovir, [make_override(target, first * second)])
    for result in (stepwise, nested):
        if target == "cost":
            for got, expected in zip(result.firms, combined.firms):
                assert math.isclose(got.cost, expected.cost)
        else:
            assert math.isclose(getattr(result, target), getattr(combined, target))
            assert result._replace(**{target: getattr(adefovir, target)}) == adefovir


def test_override_composition_after_rho_clamp(adefovir, caplog):
    caplog.set_level(logging.WARNING)
    result = apply_overrides(adefovir, [make_override("rho", 2.0), make_override("rho", 0.5)])
    # the clamp applies before the second factor
    assert math.isclose(result.rho, min(adefovir.rho * 2.0, 1.0) * 0.5)
    assert math.isclose(result.rho, 0.5)
    assert any("clamping" in record.getMessage() for record in caplog.records)


def test_override_violation_names_override(adefovir):
    with pytest.raises(ScenarioError) as excinfo:
        apply_overrides(adefovir, [make_override("cost", 20.0)])
    assert "cost_x20" in str(excinfo.value)


def test_override_cost_needs_resolved(unresolved):
    with pytest.raises(ScenarioError, match="resolved costs"):
        apply_overrides(unresolved, [make_override("cost", 1.1)])


@pytest.mark.parametrize("target, multiplier", [
    ("omega", 1.2),
    ("rho", 0.0),
    ("qe", -1.0),
    ("q0", float("nan")),
])
def test_make_override_rejects(target, multiplier):
    with pytest.raises(ScenarioError):
        make_override(target, multiplier)


def test_override_label():
    assert override_label(()) == "base"
    overrides = (make_override("p_max", 1.2), make_override("rho", 0.8))
    assert override_label(overrides) == "p_max_x1.2-rho_x0.8"


@pytest.mark.parametrize("changes", [
    {"episodes": 0},
    {"timesteps": 0},
    {"eval_episodes": 0},
    {"algorithm": "dqn"},
    {"seed": -1},
    {"cost_seed": 2**64},
])
def test_validate_task(changes):
    task = TaskSpec("b", "adefovir", "rule", (), 10, 5, 0)
    assert validate_task(task) == task
    with pytest.raises(TaskSpecError):
        validate_task(task._replace(**changes))


def test_dump_and_reload(tmp_path, unresolved):
    path = tmp_path / "out.json"
    resolved = resolve_costs(unresolved, 3)
    dump_scenarios([resolved], path)
    assert load_scenarios(path) == [resolved]
