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
Test the independent and centralised critic PPO agents.
"""
import math
import pytest
import numpy as np
from vbpsim.src.market_env import OBS_DIM, ProcurementEnv
from vbpsim.src.networks import load_checkpoint
from vbpsim.src.ppo import PpoConfig, UpdateStats
from vbpsim.src.rl_agents import (IppoAgent, IppoPopulation, MappoActor, MappoPopulation,
                                  Trajectory)
from vbpsim.src.workflow import run_episode
from .example_fixtures import adefovir

CONFIG = PpoConfig(hidden=16, kl_stop=10.0)


def _ippo(scenario, seed=0, config=CONFIG):
    return IppoPopulation([IppoAgent(firm, scenario, config, np.random.default_rng(seed + idx))
                           for idx, firm in enumerate(scenario.firms)])


def _mappo(scenario, seed=0, config=CONFIG):
    actors = [MappoActor(firm, scenario, config, np.random.default_rng(seed + idx))
              for idx, firm in enumerate(scenario.firms)]
    return MappoPopulation(actors, config, np.random.default_rng(seed + 100))


def test_trajectory_check():
    traj = Trajectory()
    traj.record_decision(np.zeros(3), 0.1, -0.5, 0.2)
    traj.record_reward(1.0)
    traj.check()
    traj.record_decision(np.zeros(3), 0.1, -0.5, 0.2)
    with pytest.raises(ValueError):
        traj.check()
    traj.clear()
    assert len(traj) == 0


def test_act_needs_episode(adefovir):
    agent = IppoAgent(adefovir.firms[0], adefovir, CONFIG, np.random.default_rng(0))
    with pytest.raises(RuntimeError):
        agent.act(np.zeros(OBS_DIM))


def test_deterministic_evaluation(adefovir):
    population = _ippo(adefovir)
    env = ProcurementEnv(4)
    observations = env.reset(adefovir, seed=0)
    population.start_episode(env)
    first = population.act(observations, explore=False)
    second = population.act(observations, explore=False)
    assert np.array_equal(first, second)
    # nothing is recorded without exploration
    assert all(len(agent.trajectory.obs) == 0 for agent in population.agents)


def test_ippo_episode_update(adefovir):
    population = _ippo(adefovir)
    env = ProcurementEnv(6)
    run_episode(env, population, adefovir, explore=True)
    agent = population.agents[0]
    assert len(agent.trajectory) == 6
    assert len(agent.trajectory.values) == 6
    rewards = np.array(agent.trajectory.rewards)
    # rewards are profits divided by the scenario profit scale
    assert np.all(np.abs(rewards) <= 1.0 + 1e-12)
    stats = population.end_episode(progress=0.5)
    assert all(isinstance(item, UpdateStats) for item in stats)
    assert all(math.isclose(item.entropy, agent.policy.entropy(), rel_tol=0.1) for item in stats)
    assert len(agent.trajectory) == 0


def test_no_update_without_exploration(adefovir):
    population = _ippo(adefovir)
    run_episode(ProcurementEnv(3), population, adefovir, explore=False)
    assert population.end_episode() == [None, None, None]


def test_mappo_critic_width(adefovir):
    population = _mappo(adefovir)
    assert population.critic_width == 30
    assert population.critic.output_dim == 3
    assert population.config.value_clip
    env = ProcurementEnv(3)
    observations = env.reset(adefovir, seed=0)
    population.start_episode(env)
    assert population.global_state(observations).shape == (30,)
    with pytest.raises(ValueError):
        population.global_state(observations[:2])


def test_mappo_episode_update(adefovir):
    population = _mappo(adefovir)
    run_episode(ProcurementEnv(5), population, adefovir, explore=True)
    assert len(population.global_states) == 5
    stats = population.end_episode(progress=1.0)
    assert len(stats) == 3
    assert len(set(item.value_loss for item in stats)) == 1
    assert population.global_states == []
    assert all(len(agent.trajectory) == 0 for agent in population.agents)


def _pin_critic(critic, value):
    critic.weights[-1][...] = 0.0
    critic.biases[-1][...] = value


def test_mappo_matches_ippo_with_pinned_critics(adefovir):
    ippo = _ippo(adefovir, seed=7)
    mappo = _mappo(adefovir, seed=7)
    for idx, (left, right) in enumerate(zip(ippo.agents, mappo.agents)):
        for param_left, param_right in zip(left.policy.parameters(), right.policy.parameters()):
            assert np.array_equal(param_left, param_right)
        _pin_critic(left.critic, 0.3)
        # identical exploration noise in both populations
        left.rng = np.random.default_rng(50 + idx)
        right.rng = np.random.default_rng(50 + idx)
    _pin_critic(mappo.critic, 0.3)

    run_episode(ProcurementEnv(8), ippo, adefovir, explore=True)
    run_episode(ProcurementEnv(8), mappo, adefovir, explore=True)
    ippo.end_episode(progress=0.0)
    mappo.end_episode(progress=0.0)
    for left, right in zip(ippo.agents, mappo.agents):
        for param_left, param_right in zip(left.policy.parameters(), right.policy.parameters()):
            assert np.allclose(param_left, param_right, rtol=0, atol=1e-8)


def test_checkpoints(tmp_path, adefovir):
    population = _mappo(adefovir)
    paths = population.save_checkpoints(tmp_path)
    assert sorted(path.split("/")[-1] for path in map(str, paths)) == [
        "checkpoint_F1.json", "checkpoint_F2.json", "checkpoint_F3.json",
        "checkpoint_critic.json"]
    policy, critic, metadata = load_checkpoint(tmp_path / "checkpoint_F2.json")
    assert critic is None
    assert metadata["firm_id"] == "F2"
    obs = np.full(OBS_DIM, 0.5)
    assert policy.mean(obs) == population.agents[1].policy.mean(obs)
    _, shared, _ = load_checkpoint(tmp_path / "checkpoint_critic.json")
    assert shared.input_dim == 30

    ippo_dir = tmp_path / "ippo"
    ippo_dir.mkdir()
    ippo_paths = _ippo(adefovir).save_checkpoints(ippo_dir)
    _, own_critic, _ = load_checkpoint(ippo_paths[0])
    assert own_critic.input_dim == OBS_DIM


def test_default_hyperparameters(adefovir):
    config = PpoConfig()
    assert (config.lr, config.gamma, config.lam, config.clip) == (5e-5, 0.99, 0.95, 0.2)
    assert (config.entropy_coef_start, config.entropy_coef_end) == (0.005, 0.001)
    assert config.kl_stop == 0.01
    assert not config.value_clip

    agent = IppoAgent(adefovir.firms[0], adefovir, config, np.random.default_rng(0))
    assert agent.policy.mean_net.sizes == (OBS_DIM, 128, 128, 1) == (10, 128, 128, 1)
    assert agent.critic.sizes == (10, 128, 128, 1)
    for net in (agent.policy.mean_net, agent.critic):
        _, activations = net.forward_cache(np.full(OBS_DIM, 1e3))
        # two tanh hidden layers, linear output
        assert len(activations) == 4
        assert all(np.all(np.abs(hidden) <= 1.0) for hidden in activations[1:-1])

    population = _mappo(adefovir, config=config)
    assert population.config.value_clip
    assert not config.value_clip
    assert population.critic.sizes == (10 * 3, 128, 128, 3)
    assert population.critic_width == 10 * len(adefovir.firms)


def _snapshot(agent):
    nets = (agent.policy.parameters(), agent.critic.parameters())
    optimizers = (agent.policy_optimizer, agent.value_optimizer)
    params = [param.copy() for group in nets for param in group]
    moments = [moment.copy() for opt in optimizers for moment in opt.first + opt.second]
    return params, moments, [opt.n_steps for opt in optimizers]


def _same_snapshot(first, second):
    return (all(np.array_equal(a, b) for a, b in zip(first[0], second[0]))
            and all(np.array_equal(a, b) for a, b in zip(first[1], second[1]))
            and first[2] == second[2])


def test_ippo_updates_are_isolated(adefovir):
    population = _ippo(adefovir)
    run_episode(ProcurementEnv(6), population, adefovir, explore=True, seed=2)
    learner, bystander = population.agents[0], population.agents[1]
    before = _snapshot(bystander)
    learner_before = _snapshot(learner)
    assert learner.end_episode_update(progress=0.3) is not None
    assert _same_snapshot(_snapshot(bystander), before)
    assert not _same_snapshot(_snapshot(learner), learner_before)
    # the bystander still holds its own trajectory
    assert len(bystander.trajectory) == 6


def test_ippo_update_ignores_other_learners(adefovir):
    first = _ippo(adefovir, seed=5)
    second = _ippo(adefovir, seed=5)
    for population in (first, second):
        run_episode(ProcurementEnv(6), population, adefovir, explore=True, seed=3)
    first.agents[0].end_episode_update()
    first.agents[2].end_episode_update()
    first.agents[1].end_episode_update()
    second.agents[1].end_episode_update()
    assert _same_snapshot(_snapshot(first.agents[1]), _snapshot(second.agents[1]))
