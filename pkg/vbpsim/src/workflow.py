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
The simulation workflow: expand a configuration into tasks, train the
agents of every task for a number of episodes, evaluate the trained
agents and hand the results to the exporters.
"""
import hashlib
import time
from collections import namedtuple
import numpy as np
from vermouth.log_helpers import StyleAdapter, get_logger
from .agents import AgentPopulation
from .export import export_result, task_directory, write_failure
from .llm_agent import LlmAgent, LlmConfig, LlmPopulation, constraint_stats, training_records
from .logging import task_label
from .market_env import TRAJECTORY_COLUMNS, ProcurementEnv, clear_market, firm_arrays, market_profits
from .ppo import PpoConfig, anneal_entropy
from .processor import Processor
from .rl_agents import IppoAgent, IppoPopulation, MappoActor, MappoPopulation
from .rule_agent import RuleAgent, RuleConfig
from .scenario import (FirmType, TaskSpec, TaskSpecError, apply_overrides, override_label,
                       resolve_costs, validate_task)
from .transport import HttpChatTransport, MockTransport

LOGGER = StyleAdapter(get_logger(__name__))

AgentSettings = namedtuple("AgentSettings", ["ppo", "rule", "llm"],
                           defaults=(PpoConfig(), RuleConfig(), LlmConfig()))

EpisodeRecord = namedtuple("EpisodeRecord", ["episode", "returns", "mean_reward",
                                             "mean_price", "winner_ratio",
                                             "final_prices", "final_winners",
                                             "final_profits"])

RunResult = namedtuple("RunResult", ["task", "scenario", "training_stats", "evaluation",
                                     "final_strategy", "transcripts", "constraint_stats",
                                     "trajectory", "wall_time", "population"])

TaskOutcome = namedtuple("TaskOutcome", ["task", "result", "error"])


def derive_seed(base_seed, *coordinates):
    """
    Stable 64-bit seed from a base seed and task coordinates.
    """
    text = "/".join([str(int(base_seed))] + [str(item) for item in coordinates])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def build_task_set(scenarios, algorithms, episodes, timesteps, seed, batch="batch",
                   drugs=None, sensitivity=None, eval_episodes=5, llm_episodes=None):
    """
    Expand scenarios, algorithms and sensitivity settings into tasks.

    Parameters
    ----------
    scenarios: list[DrugScenario]
    algorithms: list[str]
    episodes: int
    timesteps: int
    seed: int
        base seed; every task gets a seed hashed from it and the task
        coordinates, costs are sampled with a seed that ignores the
        algorithm and the sensitivity setting
    batch: str
    drugs: list[str]
        restrict to these drug ids; all scenarios when empty
    sensitivity: list[SensitivityOverride]
        one setting per override; a single unmodified setting when empty
    eval_episodes: int
    llm_episodes: int
        episode count used for llm tasks instead of `episodes`

    Returns
    -------
    list[TaskSpec]
    """
    by_id = {scenario.drug_id: scenario for scenario in scenarios}
    if drugs:
        unknown = [drug for drug in drugs if drug not in by_id]
        if unknown:
            raise TaskSpecError("Unknown drug(s) {}; known are {}."
                                .format(", ".join(unknown), ", ".join(by_id)))
        selected = list(drugs)
    else:
        selected = list(by_id)

    settings = [(override,) for override in sensitivity] if sensitivity else [()]
    tasks = []
    for drug in selected:
        for algorithm in algorithms:
            for overrides in settings:
                setting = override_label(overrides)
                n_episodes = llm_episodes if algorithm == "llm" and llm_episodes else episodes
                task = TaskSpec(batch_id=batch,
                                scenario_ref=drug,
                                algorithm=algorithm,
                                overrides=overrides,
                                episodes=n_episodes,
                                timesteps=timesteps,
                                seed=derive_seed(seed, batch, drug, algorithm, setting),
                                eval_episodes=eval_episodes,
                                setting=setting,
                                cost_seed=derive_seed(seed, batch, drug))
                tasks.append(validate_task(task))
    LOGGER.info("built {} tasks", len(tasks), type="step")
    return tasks


def make_transport(config):
    """
    Mock transport if a script is configured, HTTP otherwise.
    """
    if config.mock_script:
        return MockTransport.from_file(config.mock_script)
    return HttpChatTransport(config.model, config.endpoint, config.timeout, config.retries)


def build_population(algorithm, scenario, settings, seed_sequence, transport=None):
    """
    Create the agents of every firm of `scenario` for `algorithm`.

    Parameters
    ----------
    algorithm: str
        rule, ippo, mappo or llm
    scenario: DrugScenario
        scenario with resolved costs
    settings: AgentSettings
    seed_sequence: numpy.random.SeedSequence
        one independent stream is spawned per firm
    transport: ChatTransport
        used by llm agents; built from the settings when omitted

    Returns
    -------
    AgentPopulation
    """
    firms = scenario.firms
    streams = [np.random.default_rng(child) for child in seed_sequence.spawn(len(firms) + 1)]
    if algorithm == "rule":
        return AgentPopulation([RuleAgent(firm, scenario, settings.rule) for firm in firms])
    if algorithm == "ippo":
        return IppoPopulation([IppoAgent(firm, scenario, settings.ppo, rng)
                               for firm, rng in zip(firms, streams)])
    if algorithm == "mappo":
        actors = [MappoActor(firm, scenario, settings.ppo, rng) for firm, rng in zip(firms, streams)]
        return MappoPopulation(actors, settings.ppo, streams[-1])
    if algorithm == "llm":
        transport = transport or make_transport(settings.llm)
        return LlmPopulation([LlmAgent(firm, scenario, transport, settings.llm) for firm in firms])
    raise TaskSpecError("Unknown algorithm '{}'.".format(algorithm))


def run_episode(env, population, scenario, explore=True, episode=0, seed=None, trajectory=None):
    """
    Play one episode of simultaneous bids.

    Parameters
    ----------
    env: ProcurementEnv
    population: AgentPopulation
        agents in the firm order of `scenario`
    scenario: DrugScenario
    explore: bool
    episode: int
        index used in the trajectory rows
    seed: int
        passed to the environment reset
    trajectory: list
        when given, one dict per (step, firm) is appended

    Returns
    -------
    EpisodeRecord
    """
    observations = env.reset(scenario, seed)
    population.start_episode(env)
    returns = np.zeros(len(scenario.firms))
    prices, ratios = [], []
    outcome = None
    while not env.done:
        actions = population.act(observations, explore)
        outcome = env.step(actions)
        population.observe(outcome)
        returns += outcome.rewards
        prices.append(outcome.prices.mean())
        ratios.append(outcome.prices[outcome.winners].mean() / scenario.p_max)
        if trajectory is not None:
            for idx, firm in enumerate(scenario.firms):
                trajectory.append(dict(zip(TRAJECTORY_COLUMNS,
                                           (episode, outcome.t, firm.firm_id,
                                            float(outcome.actions[idx]),
                                            float(outcome.prices[idx]),
                                            int(outcome.winners[idx]),
                                            float(outcome.profits[idx]),
                                            float(outcome.rewards[idx])))))
        observations = outcome.next_obs
    return EpisodeRecord(episode=episode,
                         returns=returns,
                         mean_reward=float(returns.sum() / (env.timesteps * len(returns))),
                         mean_price=float(np.mean(prices)),
                         winner_ratio=float(np.mean(ratios)),
                         final_prices=outcome.prices.copy(),
                         final_winners=outcome.winners.copy(),
                         final_profits=outcome.profits.copy())


def _mean_stat(stats, name):
    values = [getattr(item, name) for item in stats if item is not None]
    if not values:
        return None
    return float(np.mean(values))


def _training_row(record, stats, entropy_coef):
    learned = [item for item in stats if item is not None]
    return {"episode": record.episode,
            "mean_reward": record.mean_reward,
            "total_return": float(record.returns.sum()),
            "mean_price": record.mean_price,
            "winner_bid_ratio": record.winner_ratio,
            "policy_loss": _mean_stat(learned, "policy_loss"),
            "value_loss": _mean_stat(learned, "value_loss"),
            "approx_kl": _mean_stat(learned, "approx_kl"),
            "entropy": _mean_stat(learned, "entropy"),
            "entropy_coef": entropy_coef if learned else None,
            "stopped_early": sum(int(item.stopped_early) for item in learned) if learned else None}


def aggregate_final_strategy(records, scenario):
    """
    Average the final-step price of every firm over the evaluation
    episodes; winners and profits follow from clearing those prices.
    """
    cost, _, _ = firm_arrays(scenario)
    prices = np.mean([record.final_prices for record in records], axis=0)
    winners = clear_market(prices, scenario.x, cost).winners
    profits = market_profits(prices, winners, scenario)
    rows = []
    for idx, firm in enumerate(scenario.firms):
        rows.append({"firm_id": firm.firm_id,
                     "firm_type": FirmType.parse(firm.firm_type).value,
                     "cost": firm.cost,
                     "final_price": float(prices[idx]),
                     "won": int(winners[idx]),
                     "profit": float(profits[idx]),
                     "bid_ceiling_ratio": float(prices[idx] / scenario.p_max)})
    return rows


def prepare_scenario(task, scenario):
    """
    Resolve missing costs and apply the task's sensitivity overrides.
    """
    seed = task.seed if task.cost_seed is None else task.cost_seed
    return apply_overrides(resolve_costs(scenario, seed), task.overrides)


def run_task(task, scenario, settings=AgentSettings(), transport=None,
             record_trajectory=False, eval_explore=False):
    """
    Train the agents of `task` and evaluate the result.

    Parameters
    ----------
    task: TaskSpec
    scenario: DrugScenario
        base scenario; costs are resolved and overrides applied here
    settings: AgentSettings
    transport: ChatTransport
        optional transport for llm tasks
    record_trajectory: bool
        keep one row per (episode, step, firm) of the training episodes
    eval_explore: bool
        act stochastically during evaluation

    Returns
    -------
    RunResult
    """
    validate_task(task)
    start = time.perf_counter()
    label = task_label(task)
    scenario = prepare_scenario(task, scenario)
    seeds = np.random.SeedSequence(task.seed).spawn(2)
    population = build_population(task.algorithm, scenario, settings, seeds[0], transport)
    env = ProcurementEnv(task.timesteps)
    episode_seeds = seeds[1].generate_state(task.episodes + task.eval_episodes, dtype=np.uint64)
    trajectory = [] if record_trajectory else None

    LOGGER.info("training {} for {} episodes", label, task.episodes, type="step")
    training_stats = []
    for episode in range(task.episodes):
        record = run_episode(env, population, scenario, explore=True, episode=episode,
                             seed=int(episode_seeds[episode]), trajectory=trajectory)
        progress = episode / (task.episodes - 1) if task.episodes > 1 else 0.0
        stats = population.end_episode(progress)
        training_stats.append(_training_row(record, stats, anneal_entropy(progress, settings.ppo)))
        LOGGER.debug("{} episode {}: mean reward {:.4f}", label, episode, record.mean_reward)

    LOGGER.info("evaluating {} over {} episodes", label, task.eval_episodes, type="step")
    evaluation, records = [], []
    for episode in range(task.eval_episodes):
        record = run_episode(env, population, scenario, explore=eval_explore, episode=episode,
                             seed=int(episode_seeds[task.episodes + episode]))
        records.append(record)
        for idx, firm in enumerate(scenario.firms):
            evaluation.append({"eval_episode": episode,
                               "firm_id": firm.firm_id,
                               "final_price": float(record.final_prices[idx]),
                               "won": int(record.final_winners[idx]),
                               "profit": float(record.final_profits[idx]),
                               "episode_return": float(record.returns[idx])})

    transcripts = population.transcripts()
    # llm agents count episodes across the run; evaluation follows training
    for record in transcripts:
        record["phase"] = "train" if record["episode"] < task.episodes else "eval"
    if task.algorithm == "llm":
        violations = constraint_stats(training_records(transcripts))
    else:
        violations = None
    return RunResult(task=task,
                     scenario=scenario,
                     training_stats=training_stats,
                     evaluation=evaluation,
                     final_strategy=aggregate_final_strategy(records, scenario),
                     transcripts=transcripts,
                     constraint_stats=violations,
                     trajectory=trajectory,
                     wall_time=time.perf_counter() - start,
                     population=population)


class TaskRunner(Processor):
    """
    Runs tasks against a table of scenarios, exports every result into
    its own directory and records failures instead of raising them.

    Parameters
    ----------
    scenarios: dict[str, DrugScenario]
    settings: AgentSettings
    output: str or pathlib.Path
        root of the output tree; nothing is written when None
    trajectory: bool
    checkpoints: bool
    eval_explore: bool
    config_echo: dict
        stored in every run_meta.json
    """
    def __init__(self, scenarios, settings=AgentSettings(), output=None, trajectory=False,
                 checkpoints=False, eval_explore=False, config_echo=None):
        self.scenarios = scenarios
        self.settings = settings
        self.output = output
        self.trajectory = trajectory
        self.checkpoints = checkpoints
        self.eval_explore = eval_explore
        self.config_echo = config_echo or {}

    def run_task(self, task):
        directory = task_directory(self.output, task) if self.output is not None else None
        try:
            if task.scenario_ref not in self.scenarios:
                raise TaskSpecError("Unknown scenario '{}'.".format(task.scenario_ref))
            result = run_task(task, self.scenarios[task.scenario_ref], self.settings,
                              record_trajectory=self.trajectory,
                              eval_explore=self.eval_explore)
            if directory is not None:
                LOGGER.info("exporting {} to {}", task_label(task), directory, type="step")
                export_result(result, directory, checkpoints=self.checkpoints,
                              config_echo=self.config_echo)
        except Exception as error:  # pylint: disable=broad-except
            LOGGER.error("task {} failed: {}", task_label(task), error, type="step")
            if directory is not None:
                write_failure(directory, task, error)
            return TaskOutcome(task, None, "{}: {}".format(type(error).__name__, error))
        # agents stay in the worker
        return TaskOutcome(task, result._replace(population=None), None)
