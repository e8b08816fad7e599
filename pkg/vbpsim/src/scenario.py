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
Data model of a volume-based procurement lot: the policy parameters of a
drug, the roster of competing firms, cost sampling for firms whose cost is
unknown and the multiplicative sensitivity overrides used in sweeps.
"""
import enum
import json
import math
from collections import namedtuple
import numpy as np
from vermouth.log_helpers import StyleAdapter, get_logger

LOGGER = StyleAdapter(get_logger(__name__))

BETA_WARN_TOL = 1e-9
BETA_ERROR_TOL = 1e-6
OVERRIDE_TARGETS = ("rho", "p_max", "q0", "qe", "cost")
ALGORITHMS = ("rule", "ippo", "mappo", "llm")


class ScenarioError(ValueError):
    """Raised when a scenario or an override violates an invariant."""


class ScenarioFormatError(IOError):
    """Raised when a scenario file cannot be parsed."""


class TaskSpecError(ValueError):
    """Raised when a task specification is invalid."""


class FirmType(enum.Enum):
    """
    Firm category. A are originators; B, C and D are large, medium and
    small generic manufacturers.
    """
    A = "A"
    B = "B"
    C = "C"
    D = "D"

    @classmethod
    def parse(cls, token):
        """
        Convert a token like 'A' or 'Type A' into a FirmType.

        Raises
        ------
        ScenarioFormatError
            if the token is not one of the four categories
        """
        if isinstance(token, cls):
            return token
        text = str(token).strip()
        if text.lower().startswith("type"):
            text = text[4:].strip()
        try:
            return cls(text.upper())
        except ValueError as error:
            msg = "Unknown firm type '{}'; expected one of A, B, C, D."
            raise ScenarioFormatError(msg.format(token)) from error


# baseline cost interval as fraction of p_max, per firm type
COST_BOUNDS = {FirmType.A: (0.05, 0.115),
               FirmType.B: (0.115, 0.20),
               FirmType.C: (0.115, 0.30),
               FirmType.D: (0.115, 0.30)}
# in-house API production shaves 5-10% off the baseline cost
RAW_MATERIAL_FACTOR = (0.90, 0.95)

FirmConfig = namedtuple("FirmConfig", ["firm_id", "omega", "firm_type",
                                       "has_raw_material", "beta", "cost"],
                        defaults=(None, None))

DrugScenario = namedtuple("DrugScenario", ["drug_id", "p_max", "rho", "x",
                                           "q0", "qe", "firms", "name"],
                          defaults=(None,))

SensitivityOverride = namedtuple("SensitivityOverride", ["target", "multiplier"])

TaskSpec = namedtuple("TaskSpec", ["batch_id", "scenario_ref", "algorithm",
                                   "overrides", "episodes", "timesteps", "seed",
                                   "eval_episodes", "setting", "cost_seed"],
                      defaults=(5, "base", None))


def make_override(target, multiplier):
    """
    Build a validated SensitivityOverride.

    Parameters
    ----------
    target: str
        one of rho, p_max, q0, qe, cost
    multiplier: float
        strictly positive factor

    Returns
    -------
    SensitivityOverride
    """
    if target not in OVERRIDE_TARGETS:
        msg = "Unknown sensitivity target '{}'; expected one of {}."
        raise ScenarioError(msg.format(target, ", ".join(OVERRIDE_TARGETS)))
    multiplier = float(multiplier)
    if not math.isfinite(multiplier) or multiplier <= 0:
        raise ScenarioError("Sensitivity multiplier must be positive, got {}.".format(multiplier))
    return SensitivityOverride(target, multiplier)


def override_label(overrides):
    """
    Directory friendly label of a list of overrides; 'base' if empty.
    """
    if not overrides:
        return "base"
    return "-".join("{}_x{:g}".format(item.target, item.multiplier) for item in overrides)


def validate_task(task):
    """
    Check the invariants of a TaskSpec and return it unchanged.
    """
    if task.algorithm not in ALGORITHMS:
        raise TaskSpecError("Unknown algorithm '{}'.".format(task.algorithm))
    if int(task.episodes) < 1:
        raise TaskSpecError("Task {} needs at least one episode.".format(task.scenario_ref))
    if int(task.timesteps) < 1:
        raise TaskSpecError("Task {} needs at least one timestep.".format(task.scenario_ref))
    if int(task.eval_episodes) < 1:
        raise TaskSpecError("Task {} needs at least one evaluation episode.".format(task.scenario_ref))
    if not 0 <= int(task.seed) < 2**64:
        raise TaskSpecError("Task seed must be a 64-bit unsigned integer.")
    if task.cost_seed is not None and not 0 <= int(task.cost_seed) < 2**64:
        raise TaskSpecError("Cost seed must be a 64-bit unsigned integer.")
    return task


def n_firms(scenario):
    return len(scenario.firms)


def is_resolved(scenario):
    """
    True if every firm of `scenario` carries a cost.
    """
    return all(firm.cost is not None for firm in scenario.firms)


def _check(condition, scenario, field, message):
    if not condition:
        msg = "Scenario {}: field '{}' {}."
        raise ScenarioError(msg.format(scenario.drug_id, field, message))


def validate_scenario(scenario):
    """
    Check all invariants of `scenario`. Hard violations raise a
    ScenarioError naming the scenario and the field; soft ones are
    logged as warning and returned.

    Parameters
    ----------
    scenario: DrugScenario

    Returns
    -------
    list[str]
        warning messages
    """
    warnings = []
    _check(len(scenario.firms) >= 1, scenario, "firms", "must list at least one firm")
    _check(math.isfinite(scenario.p_max) and scenario.p_max > 0, scenario,
           "p_max", "must be positive")
    _check(0 < scenario.rho <= 1, scenario, "rho", "must lie in (0, 1]")
    _check(int(scenario.x) == scenario.x and scenario.x >= 1, scenario,
           "x", "must be a positive integer")
    _check(scenario.x <= len(scenario.firms), scenario, "x", "x exceeds firm count")
    _check(math.isfinite(scenario.q0) and scenario.q0 > 0, scenario, "q0", "must be positive")
    _check(math.isfinite(scenario.qe) and scenario.qe > 0, scenario, "qe", "must be positive")

    firm_ids = [firm.firm_id for firm in scenario.firms]
    _check(len(set(firm_ids)) == len(firm_ids), scenario, "firms", "has duplicate firm_id")

    for firm in scenario.firms:
        field = "firms[{}]".format(firm.firm_id)
        _check(firm.omega >= 0, scenario, field + ".omega", "must be nonnegative")
        _check(firm.beta is not None and 0 <= firm.beta <= 1, scenario,
               field + ".beta", "must lie in [0, 1]")
        if firm.cost is not None:
            _check(0 < firm.cost < scenario.p_max, scenario, field + ".cost",
                   "must satisfy 0 < cost < p_max ({})".format(scenario.p_max))

    beta_sum = sum(firm.beta for firm in scenario.firms)
    _check(beta_sum <= 1 + BETA_ERROR_TOL, scenario, "beta",
           "sums to {:.6f} over all firms which exceeds 1".format(beta_sum))
    if beta_sum > 1 + BETA_WARN_TOL:
        warnings.append("Scenario {}: residual shares sum to {:.9f}, slightly above 1."
                        .format(scenario.drug_id, beta_sum))

    if scenario.qe < scenario.rho * scenario.q0:
        warnings.append("Scenario {}: qe ({}) is below rho*q0 ({}); the linkage term "
                        "of the profit becomes negative.".format(scenario.drug_id,
                                                                 scenario.qe,
                                                                 scenario.rho * scenario.q0))
    for msg in warnings:
        LOGGER.warning(msg, type="scenario")
    return warnings


def sample_cost(firm, p_max, rng):
    """
    Sample the unit cost of `firm`. A baseline is drawn uniformly from
    the firm type interval (fractions of `p_max`); firms with in-house
    API production get it multiplied by U(0.90, 0.95).

    Parameters
    ----------
    firm: FirmConfig
        firm without cost
    p_max: float
    rng: numpy.random.Generator

    Returns
    -------
    float
    """
    if firm.cost is not None:
        raise ScenarioError("Firm {} already has a cost.".format(firm.firm_id))
    if p_max <= 0:
        raise ScenarioError("p_max must be positive to sample a cost.")
    low, high = COST_BOUNDS[FirmType.parse(firm.firm_type)]
    cost = rng.uniform(low * p_max, high * p_max)
    if firm.has_raw_material:
        cost *= rng.uniform(*RAW_MATERIAL_FACTOR)
    return float(cost)


def resolve_costs(scenario, seed):
    """
    Return a copy of `scenario` in which every missing firm cost has been
    sampled. Firms are visited in roster order, so the result only depends
    on `seed` and the scenario.
    """
    rng = np.random.default_rng(seed)
    firms = []
    for firm in scenario.firms:
        if firm.cost is None:
            firm = firm._replace(cost=sample_cost(firm, scenario.p_max, rng))
            LOGGER.debug("sampled cost {:.6f} for firm {} of {}",
                         firm.cost, firm.firm_id, scenario.drug_id)
        firms.append(firm)
    resolved = scenario._replace(firms=tuple(firms))
    validate_scenario(resolved)
    return resolved


def apply_overrides(scenario, overrides):
    """
    Return a copy of `scenario` with each override target multiplied by
    its multiplier. A rho pushed above 1 is clamped to 1. The target cost
    scales every firm's resolved cost.

    Parameters
    ----------
    scenario: DrugScenario
    overrides: list[SensitivityOverride]

    Returns
    -------
    DrugScenario

    Raises
    ------
    ScenarioError
        if the modified scenario violates an invariant; the message
        names the override
    """
    result = scenario
    for override in overrides:
        override = make_override(*override)
        if override.target == "cost":
            if not is_resolved(result):
                msg = "Override {} needs resolved costs for scenario {}."
                raise ScenarioError(msg.format(override_label([override]), scenario.drug_id))
            firms = tuple(firm._replace(cost=firm.cost * override.multiplier)
                          for firm in result.firms)
            result = result._replace(firms=firms)
        elif override.target == "rho":
            rho = result.rho * override.multiplier
            if rho > 1:
                LOGGER.warning("Override {} drives rho of {} to {:.4f}; clamping to 1.",
                               override_label([override]), scenario.drug_id, rho,
                               type="scenario")
                rho = 1.0
            result = result._replace(rho=rho)
        else:
            value = getattr(result, override.target) * override.multiplier
            result = result._replace(**{override.target: value})

    try:
        validate_scenario(result)
    except ScenarioError as error:
        msg = "Override {} is not applicable: {}"
        raise ScenarioError(msg.format(override_label(overrides), error)) from error
    return result


def _field(raw, key, convert, context, default=KeyError):
    if key not in raw:
        if default is KeyError:
            raise ScenarioFormatError("{}: missing field '{}'.".format(context, key))
        return default
    try:
        return convert(raw[key])
    except (TypeError, ValueError) as error:
        msg = "{}: field '{}' has invalid value {!r}."
        raise ScenarioFormatError(msg.format(context, key, raw[key])) from error


def _to_bool(value):
    if isinstance(value, bool):
        return value
    if str(value).strip().lower() in ("yes", "true", "1"):
        return True
    if str(value).strip().lower() in ("no", "false", "0"):
        return False
    raise ValueError(value)


def _to_optional_float(value):
    return None if value is None else float(value)


def _parse_firm(raw, context):
    if not isinstance(raw, dict):
        raise ScenarioFormatError("{}: firm entries must be objects.".format(context))
    firm_id = _field(raw, "firm_id", str, context)
    context = "{} firm {}".format(context, firm_id)
    return FirmConfig(firm_id=firm_id,
                      omega=_field(raw, "omega", float, context),
                      firm_type=_field(raw, "type", FirmType.parse, context),
                      has_raw_material=_field(raw, "raw_material", _to_bool, context),
                      beta=_field(raw, "beta", _to_optional_float, context, default=None),
                      cost=_field(raw, "cost", _to_optional_float, context, default=None))


def _parse_scenario(raw, index):
    context = "scenario #{}".format(index)
    if not isinstance(raw, dict):
        raise ScenarioFormatError("{}: scenario entries must be objects.".format(context))
    drug_id = _field(raw, "drug_id", str, context)
    context = "scenario #{} ({})".format(index, drug_id)
    raw_firms = _field(raw, "firms", list, context)
    firms = [_parse_firm(firm, context) for firm in raw_firms]
    # residual market split uniformly unless given
    firms = tuple(firm._replace(beta=1.0 / len(firms)) if firm.beta is None else firm
                  for firm in firms)
    x_value = _field(raw, "x", float, context)
    if x_value != int(x_value):
        raise ScenarioFormatError("{}: field 'x' must be an integer.".format(context))
    return DrugScenario(drug_id=drug_id,
                        p_max=_field(raw, "p_max", float, context),
                        rho=_field(raw, "rho", float, context),
                        x=int(x_value),
                        q0=_field(raw, "q0", float, context),
                        qe=_field(raw, "qe", float, context),
                        firms=firms,
                        name=_field(raw, "name", str, context, default=None))


def parse_scenarios(text, source="<string>"):
    """
    Parse the JSON text of a scenario file and validate every scenario.

    Parameters
    ----------
    text: str
    source: str
        name used in error messages

    Returns
    -------
    list[DrugScenario]
    """
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as error:
        msg = "{}: line {} column {}: {}"
        raise ScenarioFormatError(msg.format(source, error.lineno, error.colno, error.msg)) from error

    if not isinstance(payload, dict) or not isinstance(payload.get("scenarios"), list):
        raise ScenarioFormatError("{}: expected a top-level object with a 'scenarios' list."
                                  .format(source))

    scenarios = [_parse_scenario(raw, idx) for idx, raw in enumerate(payload["scenarios"])]
    for scenario in scenarios:
        validate_scenario(scenario)
    return scenarios


def load_scenarios(path):
    """
    Read and validate a scenario file.

    Parameters
    ----------
    path: str or pathlib.Path

    Returns
    -------
    list[DrugScenario]
        in file order, firm order preserved
    """
    with open(path, encoding="utf-8") as file_:
        text = file_.read()
    return parse_scenarios(text, source=str(path))


def scenario_to_dict(scenario):
    firms = []
    for firm in scenario.firms:
        entry = {"firm_id": firm.firm_id,
                 "omega": firm.omega,
                 "type": FirmType.parse(firm.firm_type).value,
                 "raw_material": bool(firm.has_raw_material),
                 "beta": firm.beta}
        if firm.cost is not None:
            entry["cost"] = firm.cost
        firms.append(entry)
    payload = {"drug_id": scenario.drug_id,
               "p_max": scenario.p_max,
               "rho": scenario.rho,
               "x": scenario.x,
               "q0": scenario.q0,
               "qe": scenario.qe,
               "firms": firms}
    if scenario.name is not None:
        payload["name"] = scenario.name
    return payload


def dump_scenarios(scenarios, path):
    """
    Write `scenarios` to `path` in the scenario file format.
    """
    payload = {"scenarios": [scenario_to_dict(scenario) for scenario in scenarios]}
    with open(path, "w", encoding="utf-8") as file_:
        json.dump(payload, file_, indent=2)
        file_.write("\n")
