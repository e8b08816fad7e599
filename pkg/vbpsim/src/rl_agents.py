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
Learning agents. IPPO gives every firm its own actor and critic; MAPPO
keeps decentralised actors but trains them against one centralised
critic that sees the concatenated state of all firms.
"""
import os
import numpy as np
from vermouth.log_helpers import StyleAdapter, get_logger
from .agents import AgentPolicy, AgentPopulation
from .market_env import OBS_DIM, profit_scale
from .networks import Adam, GaussianPolicy, value_net, save_checkpoint
from .ppo import PpoBatch, UpdateStats, anneal_entropy, gae, policy_update, ppo_update, value_update

LOGGER = StyleAdapter(get_logger(__name__))


class Trajectory:
    """
    Rollout buffer of one firm for one episode.
    """
    def __init__(self):
        self.clear()

    def clear(self):
        self.obs = []
        self.actions = []
        self.logp = []
        self.values = []
        self.rewards = []

    def __len__(self):
        return len(self.rewards)

    def record_decision(self, obs, action, logp, value=None):
        self.obs.append(np.asarray(obs, dtype=float))
        self.actions.append(action)
        self.logp.append(logp)
        if value is not None:
            self.values.append(value)

    def record_reward(self, reward):
        self.rewards.append(reward)

    def check(self):
        lengths = {len(self.obs), len(self.actions), len(self.logp), len(self.rewards)}
        if self.values:
            lengths.add(len(self.values))
        if len(lengths) != 1:
            raise ValueError("Trajectory fields differ in length: {}.".format(sorted(lengths)))


class PpoActor(AgentPolicy):
    """
    Gaussian actor acting on the normalised local observation of one firm.

    Parameters
    ----------
    firm: FirmConfig
    scenario: DrugScenario
    config: PpoConfig
    rng: numpy.random.Generator
    """
    def __init__(self, firm, scenario, config, rng):
        super().__init__(firm, scenario)
        self.config = config
        self.rng = rng
        self.policy = GaussianPolicy(OBS_DIM, config.hidden, rng,
                                     config.log_std_init, config.log_std_bounds)
        self.policy_optimizer = Adam(self.policy.parameters(), config.lr)
        self.reward_scale = profit_scale(scenario)
        self.trajectory = Trajectory()
        self.recording = False

    def start_episode(self, scaler=None):
        super().start_episode(scaler)
        self.trajectory.clear()
        self.recording = False

    def local_input(self, observation):
        if self.scaler is None:
            raise RuntimeError("start_episode() must be called before act().")
        return self.scaler(observation)

    def act(self, observation, explore=True):
        local = self.local_input(observation)
        if not explore:
            return float(np.clip(self.policy.mode(local), -1.0, 1.0))
        action, logp = self.policy.sample(local, self.rng)
        self.trajectory.record_decision(local, action, logp, self.value_estimate(local))
        self.recording = True
        return float(np.clip(action, -1.0, 1.0))

    def value_estimate(self, local):
        return None

    def observe_outcome(self, outcome):
        if self.recording:
            self.trajectory.record_reward(outcome.reward / self.reward_scale)

    def checkpoint_critic(self):
        return None

    def save_checkpoint(self, directory):
        path = os.path.join(directory, "checkpoint_{}.json".format(self.firm_id))
        save_checkpoint(path, self.policy, self.checkpoint_critic(), firm_id=self.firm_id,
                        drug_id=self.scenario.drug_id, reward_scale=self.reward_scale)
        return path


class IppoAgent(PpoActor):
    """
    Independent actor-critic; updates only from its own trajectory.
    """
    def __init__(self, firm, scenario, config, rng):
        super().__init__(firm, scenario, config, rng)
        self.critic = value_net(OBS_DIM, 1, config.hidden, rng)
        self.value_optimizer = Adam(self.critic.parameters(), config.lr)

    def value_estimate(self, local):
        return float(self.critic.forward(local)[0])

    def checkpoint_critic(self):
        return self.critic

    def end_episode_update(self, progress=1.0):
        if not self.recording or len(self.trajectory) == 0:
            return None
        traj = self.trajectory
        traj.check()
        advantages, returns = gae(traj.rewards, traj.values, 0.0,
                                  self.config.gamma, self.config.lam)
        obs = np.array(traj.obs)
        batch = PpoBatch(obs=obs,
                         actions=np.array(traj.actions),
                         old_logp=np.array(traj.logp),
                         advantages=advantages,
                         returns=returns[:, None],
                         critic_inputs=obs,
                         old_values=np.array(traj.values)[:, None])
        stats = ppo_update(self.policy, self.critic, batch, self.config,
                           anneal_entropy(progress, self.config),
                           self.policy_optimizer, self.value_optimizer, self.rng)
        traj.clear()
        self.recording = False
        return stats


class IppoPopulation(AgentPopulation):

    def save_checkpoints(self, directory):
        return [agent.save_checkpoint(directory) for agent in self.agents]


class MappoActor(PpoActor):
    """
    Decentralised actor; values come from the critic of its population.
    """


class MappoPopulation(AgentPopulation):
    """
    Actors paired with a centralised critic. The critic input is the
    concatenation of all normalised observations in firm order and it
    predicts one value per firm.

    Parameters
    ----------
    agents: list[MappoActor]
    config: PpoConfig
        value clipping is always switched on for the shared critic
    rng: numpy.random.Generator
    """
    def __init__(self, agents, config, rng):
        super().__init__(agents)
        self.config = config._replace(value_clip=True)
        self.rng = rng
        self.critic = value_net(OBS_DIM * len(agents), len(agents), config.hidden, rng)
        self.value_optimizer = Adam(self.critic.parameters(), config.lr)
        self.global_states = []
        self.values = []

    @property
    def critic_width(self):
        return self.critic.input_dim

    def start_episode(self, env):
        super().start_episode(env)
        self.global_states = []
        self.values = []

    def global_state(self, observations):
        self._check_width(observations)
        local = [agent.local_input(obs) for agent, obs in zip(self.agents, observations)]
        state = np.concatenate(local)
        if len(state) != self.critic_width:
            raise ValueError("Critic expects {} inputs for {} firms, got {}."
                             .format(self.critic_width, self.critic_width // OBS_DIM, len(state)))
        return state

    def act(self, observations, explore=True):
        actions = super().act(observations, explore)
        if explore:
            state = self.global_state(observations)
            self.global_states.append(state)
            self.values.append(self.critic.forward(state))
        return actions

    def end_episode(self, progress=1.0):
        if not self.global_states:
            return [None] * len(self.agents)
        values = np.array(self.values)
        entropy_coef = anneal_entropy(progress, self.config)
        returns = np.zeros_like(values)
        stats = []
        for idx, agent in enumerate(self.agents):
            traj = agent.trajectory
            traj.check()
            advantages, returns[:, idx] = gae(traj.rewards, values[:, idx], 0.0,
                                              self.config.gamma, self.config.lam)
            batch = PpoBatch(obs=np.array(traj.obs),
                             actions=np.array(traj.actions),
                             old_logp=np.array(traj.logp),
                             advantages=advantages,
                             returns=None, critic_inputs=None, old_values=None)
            stats.append(policy_update(agent.policy, agent.policy_optimizer, batch,
                                       self.config, entropy_coef, agent.rng))
            traj.clear()
            agent.recording = False

        loss = value_update(self.critic, self.value_optimizer, np.array(self.global_states),
                            returns, values, self.config, self.rng)
        self.global_states = []
        self.values = []
        return [UpdateStats(policy_loss=item["policy_loss"], value_loss=loss,
                            entropy=item["entropy"], approx_kl=item["approx_kl"],
                            stopped_early=item["stopped_early"],
                            epochs_run=item["epochs_run"]) for item in stats]

    def save_checkpoints(self, directory):
        paths = [agent.save_checkpoint(directory) for agent in self.agents]
        path = os.path.join(directory, "checkpoint_critic.json")
        save_checkpoint(path, critic=self.critic, role="shared critic")
        return paths + [path]
