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
Parser of the run configuration file. The file is split into sections
like a GROMACS topology; ``;`` starts a comment::

    [ run ]
    batch     demo
    scenarios examples      ; a file or a bundled library
    episodes  1000
    [ sensitivity ]
    p_max 0.8 1.0 1.2
    [ agents ]
    algorithms rule ippo
    [ ppo ]
    lr 5e-5
"""
from collections import namedtuple
from pathlib import Path
from vermouth.parser_utils import SectionLineParser
from vermouth.log_helpers import StyleAdapter, get_logger
from .llm_agent import LlmConfig
from .ppo import PpoConfig, validate_ppo_config
from .rule_agent import RuleConfig
from .scenario import ALGORITHMS, ScenarioError, make_override
from .workflow import AgentSettings

LOGGER = StyleAdapter(get_logger(__name__))

RunConfig = namedtuple("RunConfig", ["batch", "scenarios", "drugs", "episodes", "timesteps",
                                     "eval_episodes", "eval_explore", "seed", "workers",
                                     "output", "trajectory", "checkpoints", "sweep_seeds",
                                     "sensitivity", "algorithms", "settings", "llm_episodes",
                                     "cwdir"],
                       defaults=("batch", "examples", (), 1000, 50, 5, False, 0, 1, "out",
                                 False, False, (0, 1, 2), (), ("rule",), AgentSettings(),
                                 None, None))


class ConfigError(IOError):
    """Raised when a run configuration is malformed."""


def parse_bool(token):
    value = token.casefold()
    if value in ("yes", "true", "on", "1"):
        return True
    if value in ("no", "false", "off", "0"):
        return False
    raise ValueError("'{}' is not a boolean".format(token))


def _optional(convert):
    def parse(token):
        if token.casefold() in ("none", "full", "off"):
            return None
        return convert(token)
    return parse


def _seed(token):
    seed = int(token)
    if not 0 <= seed < 2**64:
        raise ValueError("seed {} is not a 64-bit unsigned integer".format(seed))
    return seed


RUN_KEYS = {"batch": str, "scenarios": str, "episodes": int, "timesteps": int,
            "eval_episodes": int, "eval_explore": parse_bool, "seed": _seed,
            "workers": int, "output": str, "trajectory": parse_bool,
            "checkpoints": parse_bool}

PPO_KEYS = {"lr": float, "gamma": float, "lam": float, "clip": float,
            "entropy_coef_start": float, "entropy_coef_end": float, "kl_stop": float,
            "epochs": int, "minibatch_size": _optional(int),
            "max_grad_norm": _optional(float), "value_clip": parse_bool,
            "value_clip_range": float, "hidden": int, "log_std_init": float}

RULE_KEYS = {"down_step": float, "up_step": float}

LLM_KEYS = {"model": str, "endpoint": str, "temperature": float, "max_tokens": int,
            "timeout": float, "retries": int, "mock_script": str, "memory_size": int,
            "reflection_every": int}


class RunConfigDirector(SectionLineParser):
    """
    Collects the key value pairs of every section and turns them into a
    RunConfig once the file is read.
    """
    COMMENT_CHAR = ';'

    def __init__(self, cwdir=None):
        super().__init__()
        self.cwdir = cwdir
        self.run = {}
        self.ppo = {}
        self.rule = {}
        self.llm = {}
        self.sensitivity = []
        self.algorithms = None
        self.drugs = None
        self.sweep_seeds = None
        self.config = None

    @staticmethod
    def _key_value(line, lineno, table, section):
        tokens = line.split()
        key = tokens[0].casefold()
        if key not in table:
            msg = "line {}: unknown key '{}' in section [ {} ]; known keys are {}."
            raise ConfigError(msg.format(lineno, key, section, ", ".join(sorted(table))))
        if len(tokens) != 2:
            raise ConfigError("line {}: key '{}' takes exactly one value.".format(lineno, key))
        try:
            return key, table[key](tokens[1])
        except ValueError as error:
            raise ConfigError("line {}: invalid value for '{}': {}".format(lineno, key, error)) from error

    @SectionLineParser.section_parser('run')
    def _run(self, line, lineno=0):
        """
        Scalars of the run plus the list valued keys drugs and
        sweep_seeds.
        """
        tokens = line.split()
        key = tokens[0].casefold()
        if key == "drugs":
            self.drugs = tuple(tokens[1:])
        elif key == "sweep_seeds":
            try:
                self.sweep_seeds = tuple(_seed(token) for token in tokens[1:])
            except ValueError as error:
                raise ConfigError("line {}: invalid sweep seed: {}".format(lineno, error)) from error
        else:
            key, value = self._key_value(line, lineno, RUN_KEYS, "run")
            self.run[key] = value

    @SectionLineParser.section_parser('sensitivity')
    def _sensitivity(self, line, lineno=0):
        """
        One target per line followed by its multipliers, e.g.
        'rho 0.8 1.0 1.2'.
        """
        tokens = line.split()
        if len(tokens) < 2:
            raise ConfigError("line {}: sensitivity target '{}' has no multipliers."
                              .format(lineno, tokens[0]))
        try:
            for token in tokens[1:]:
                self.sensitivity.append(make_override(tokens[0], float(token)))
        except (ScenarioError, ValueError) as error:
            raise ConfigError("line {}: {}".format(lineno, error)) from error

    @SectionLineParser.section_parser('agents')
    def _agents(self, line, lineno=0):
        tokens = line.split()
        if tokens[0].casefold() != "algorithms" or len(tokens) < 2:
            raise ConfigError("line {}: expected 'algorithms <name> ...'.".format(lineno))
        unknown = [name for name in tokens[1:] if name not in ALGORITHMS]
        if unknown:
            raise ConfigError("line {}: unknown algorithm(s) {}; choose from {}."
                              .format(lineno, ", ".join(unknown), ", ".join(ALGORITHMS)))
        self.algorithms = tuple(tokens[1:])

    @SectionLineParser.section_parser('agents', 'ppo')
    def _ppo(self, line, lineno=0):
        tokens = line.split()
        if tokens[0].casefold() == "log_std_bounds":
            try:
                self.ppo["log_std_bounds"] = (float(tokens[1]), float(tokens[2]))
            except (IndexError, ValueError) as error:
                raise ConfigError("line {}: log_std_bounds takes two numbers.".format(lineno)) from error
            return
        key, value = self._key_value(line, lineno, PPO_KEYS, "ppo")
        self.ppo[key] = value

    @SectionLineParser.section_parser('agents', 'rule')
    def _rule(self, line, lineno=0):
        key, value = self._key_value(line, lineno, RULE_KEYS, "rule")
        self.rule[key] = value

    @SectionLineParser.section_parser('agents', 'llm')
    def _llm(self, line, lineno=0):
        tokens = line.split()
        if tokens[0].casefold() == "episodes":
            key, value = self._key_value(line, lineno, {"episodes": int}, "llm")
            self.run["llm_episodes"] = value
            return
        if tokens[0].casefold() == "api_key":
            raise ConfigError("line {}: credentials are read from the environment only."
                              .format(lineno))
        key, value = self._key_value(line, lineno, LLM_KEYS, "llm")
        self.llm[key] = value

    def _relative(self, path):
        if self.cwdir is None or Path(path).is_absolute():
            return path
        candidate = Path(self.cwdir).joinpath(path)
        return str(candidate) if candidate.exists() else path

    def finalize(self, lineno=0):
        """
        Assemble and validate the RunConfig.
        """
        if "mock_script" in self.llm:
            self.llm["mock_script"] = self._relative(self.llm["mock_script"])
        try:
            ppo = validate_ppo_config(PpoConfig(**self.ppo))
        except ValueError as error:
            raise ConfigError("[ ppo ]: {}".format(error)) from error
        settings = AgentSettings(ppo=ppo, rule=RuleConfig(**self.rule), llm=LlmConfig(**self.llm))

        values = dict(self.run)
        values["settings"] = settings
        values["sensitivity"] = tuple(self.sensitivity)
        values["cwdir"] = self.cwdir
        if self.algorithms is not None:
            values["algorithms"] = self.algorithms
        if self.drugs is not None:
            values["drugs"] = self.drugs
        if self.sweep_seeds is not None:
            values["sweep_seeds"] = self.sweep_seeds
        self.config = validate_run_config(RunConfig(**values))
        super().finalize(lineno=lineno)


def validate_run_config(config):
    """
    Range checks that do not depend on the parser.
    """
    checks = (("episodes", config.episodes >= 1),
              ("timesteps", config.timesteps >= 1),
              ("eval_episodes", config.eval_episodes >= 1),
              ("workers", config.workers >= 1),
              ("llm episodes", config.llm_episodes is None or config.llm_episodes >= 1),
              ("algorithms", len(config.algorithms) >= 1))
    for name, valid in checks:
        if not valid:
            raise ConfigError("Run configuration: '{}' must be at least 1.".format(name))
    llm = config.settings.llm
    if llm.temperature < 0 or llm.max_tokens < 1 or llm.retries < 0 or llm.timeout <= 0:
        raise ConfigError("Run configuration: invalid [ llm ] transport settings.")
    if llm.memory_size < 1 or llm.reflection_every < 1:
        raise ConfigError("Run configuration: llm memory_size and reflection_every must be positive.")
    return config


def read_run_config(lines, cwdir=None):
    """
    Parse the lines of a run configuration.

    Parameters
    ----------
    lines: list[str]
    cwdir: pathlib.Path
        directory relative paths in the file refer to

    Returns
    -------
    RunConfig
    """
    director = RunConfigDirector(cwdir)
    try:
        list(director.parse(iter(lines)))
    except ConfigError:
        raise
    except (KeyError, ValueError, IndexError, TypeError, IOError) as error:
        raise ConfigError("Cannot parse run configuration: {}".format(error)) from error
    return director.config


def load_run_config(path):
    """
    Read the run configuration at `path`.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as file_:
        lines = file_.readlines()
    return read_run_config(lines, cwdir=path.parent)


def config_to_dict(config):
    """
    Plain dict view of a RunConfig for run_meta.json.
    """
    payload = config._asdict()
    settings = payload.pop("settings")
    payload["ppo"] = settings.ppo._asdict()
    payload["rule"] = settings.rule._asdict()
    payload["llm"] = settings.llm._asdict()
    payload["sensitivity"] = [{"target": item.target, "multiplier": item.multiplier}
                              for item in config.sensitivity]
    payload["cwdir"] = str(config.cwdir) if config.cwdir is not None else None
    for key in ("drugs", "algorithms", "sweep_seeds"):
        payload[key] = list(payload[key])
    payload["ppo"]["log_std_bounds"] = list(payload["ppo"]["log_std_bounds"])
    return payload
