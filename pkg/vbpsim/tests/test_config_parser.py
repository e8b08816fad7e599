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
Test parsing of run configuration files.
"""
import json
import math
import textwrap
from pathlib import Path
import pytest
from vbpsim import DATA_PATH, TEST_DATA
from vbpsim.src.config_parser import (ConfigError, RunConfig, config_to_dict, load_run_config,
                                      parse_bool, read_run_config)
from vbpsim.src.data_library import load_scenario_source


def _read(text):
    return read_run_config(textwrap.dedent(text).splitlines(keepends=True))


def test_load_rule_config():
    config = load_run_config(TEST_DATA / "configs" / "rule.cfg")
    assert config.batch == "unit"
    assert (config.episodes, config.timesteps, config.eval_episodes) == (2, 5, 2)
    assert config.seed == 11
    assert config.trajectory
    assert not config.checkpoints
    assert config.algorithms == ("rule",)
    assert [(item.target, item.multiplier) for item in config.sensitivity] == [
        ("p_max", 0.9), ("p_max", 1.1)]
    assert config.settings.rule.down_step == 0.03
    assert config.settings.rule.up_step == 0.01
    assert Path(config.cwdir) == TEST_DATA / "configs"
    scenarios = load_scenario_source(config.scenarios, config.cwdir)
    assert [scenario.drug_id for scenario in scenarios] == ["adefovir"]


def test_mock_script_is_relative_to_config():
    config = load_run_config(TEST_DATA / "configs" / "mock_llm.cfg")
    assert config.algorithms == ("llm",)
    assert Path(config.settings.llm.mock_script).resolve() == (TEST_DATA / "mock_llm.json").resolve()


@pytest.mark.parametrize("name", ["demo", "learning", "llm", "sensitivity"])
def test_bundled_configs(name):
    config = load_run_config(Path(DATA_PATH) / "configs" / (name + ".cfg"))
    assert config.batch == name
    assert load_scenario_source(config.scenarios, config.cwdir)


def test_learning_config_ppo():
    config = load_run_config(Path(DATA_PATH) / "configs" / "learning.cfg")
    ppo = config.settings.ppo
    assert config.algorithms == ("ippo", "mappo")
    assert ppo.lr == 5e-5
    assert ppo.minibatch_size is None
    assert ppo.max_grad_norm == 0.5
    assert config.workers == 2


def test_defaults():
    config = _read("""
        [ run ]
        batch small ; trailing comment
        """)
    assert config.batch == "small"
    assert config._replace(batch="batch", cwdir=None) == RunConfig()


def test_list_keys():
    config = _read("""
        [ run ]
        drugs adefovir entecavir
        sweep_seeds 4 5
        [ agents ]
        algorithms llm
        [ llm ]
        episodes 3
        memory_size 2
        """)
    assert config.drugs == ("adefovir", "entecavir")
    assert config.sweep_seeds == (4, 5)
    assert config.llm_episodes == 3
    assert config.settings.llm.memory_size == 2


def test_log_std_bounds():
    config = _read("""
        [ agents ]
        algorithms ippo
        [ ppo ]
        log_std_bounds -4 0.5
        hidden 32
        """)
    assert config.settings.ppo.log_std_bounds == (-4.0, 0.5)
    assert config.settings.ppo.hidden == 32


@pytest.mark.parametrize("text, match", [
    ("[ run ]\nepisodes_total 5\n", "unknown key 'episodes_total'"),
    ("[ run ]\nepisodes 5 6\n", "exactly one value"),
    ("[ run ]\nepisodes many\n", "invalid value for 'episodes'"),
    ("[ run ]\nepisodes 0\n", "'episodes' must be at least 1"),
    ("[ run ]\nseed -1\n", "invalid value for 'seed'"),
    ("[ run ]\ntrajectory maybe\n", "not a boolean"),
    ("[ agents ]\nalgorithms rule dqn\n", "unknown algorithm"),
    ("[ agents ]\nalgorithms\n", "expected 'algorithms"),
    ("[ agents ]\n[ llm ]\napi_key secret\n", "environment"),
    ("[ agents ]\n[ llm ]\ntemperature -1\n", "transport settings"),
    ("[ agents ]\n[ ppo ]\nlog_std_bounds -4\n", "two numbers"),
    ("[ agents ]\n[ ppo ]\nclip 0\n", r"\[ ppo \]"),
    ("[ sensitivity ]\nmargin 0.8\n", "line 2"),
    ("[ sensitivity ]\nrho\n", "no multipliers"),
])
def test_rejects(text, match):
    with pytest.raises(ConfigError, match=match):
        read_run_config(text.splitlines(keepends=True))


@pytest.mark.parametrize("text", [
    "[ ppo ]\nlr 1e-4\n",
    "[ nonsense ]\nfoo 1\n",
    "batch orphan\n",
])
def test_rejects_structure(text):
    with pytest.raises(ConfigError):
        read_run_config(text.splitlines(keepends=True))


@pytest.mark.parametrize("token, expected", [
    ("yes", True), ("On", True), ("1", True), ("no", False), ("FALSE", False), ("0", False)])
def test_parse_bool(token, expected):
    assert parse_bool(token) == expected


def test_config_to_dict():
    config = load_run_config(TEST_DATA / "configs" / "rule.cfg")
    payload = json.loads(json.dumps(config_to_dict(config)))
    assert payload["sensitivity"] == [{"target": "p_max", "multiplier": 0.9},
                                      {"target": "p_max", "multiplier": 1.1}]
    assert payload["rule"]["down_step"] == 0.03
    assert payload["ppo"]["log_std_bounds"] == [-5.0, 1.0]
    assert payload["algorithms"] == ["rule"]
    assert math.isclose(payload["llm"]["temperature"], 0.7)
