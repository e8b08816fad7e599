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
Common interface of the bidding agents and the population that lets one
agent per firm move simultaneously.
"""
from collections import namedtuple
import numpy as np

FirmOutcome = namedtuple("FirmOutcome", ["t", "action", "price", "won", "profit",
                                         "reward", "rank", "n_firms", "p_win",
                                         "next_obs", "done"])


def firm_outcome(outcome, index):
    """
    The part of a StepOutcome that concerns firm `index`. Besides its own
    result a firm learns its price rank and the publicly announced winning
    prices.
    """
    ranks = list(outcome.ranks)
    p_win = [float(outcome.prices[idx]) for idx in ranks if outcome.winners[idx]]
    return FirmOutcome(t=outcome.t,
                       action=float(outcome.actions[index]),
                       price=float(outcome.prices[index]),
                       won=bool(outcome.winners[index]),
                       profit=float(outcome.profits[index]),
                       reward=float(outcome.rewards[index]),
                       rank=ranks.index(index) + 1,
                       n_firms=len(ranks),
                       p_win=p_win,
                       next_obs=outcome.next_obs[index],
                       done=outcome.done)


class AgentPolicy:
    """
    A bidding strategy for a single firm. Subclasses must implement
    `act`.

    Parameters
    ----------
    firm: FirmConfig
        the firm, cost resolved
    scenario: DrugScenario
    """
    def __init__(self, firm, scenario):
        self.firm = firm
        self.scenario = scenario
        self.scaler = None

    @property
    def firm_id(self):
        return self.firm.firm_id

    def start_episode(self, scaler=None):
        """
        Called after every environment reset with the observation scaler
        of the new episode.
        """
        self.scaler = scaler

    def act(self, observation, explore=True):
        """
        Choose an action in [-1, 1] from the raw 10-dimensional observation
        of this firm. With `explore` False the choice is deterministic.
        """
        raise NotImplementedError

    def observe_outcome(self, outcome):
        """
        Receive the FirmOutcome of the last step.
        """

    def end_episode_update(self, progress=1.0):
        """
        Learn from the finished episode. `progress` is the fraction of
        training done so far. Returns update statistics or None.
        """
        return None


class AgentPopulation:
    """
    One AgentPolicy per firm, in the firm order of the scenario.
    """
    def __init__(self, agents):
        self.agents = list(agents)

    def __len__(self):
        return len(self.agents)

    @property
    def firm_ids(self):
        return [agent.firm_id for agent in self.agents]

    def start_episode(self, env):
        for agent in self.agents:
            agent.start_episode(env.scaler)

    def _check_width(self, observations):
        if len(observations) != len(self.agents):
            raise ValueError("Got observations for {} firms but {} agents."
                             .format(len(observations), len(self.agents)))

    def act(self, observations, explore=True):
        """
        Collect one action per firm. Agents only see their own row of
        `observations`.
        """
        self._check_width(observations)
        actions = np.array([agent.act(obs, explore) for agent, obs in zip(self.agents, observations)],
                           dtype=float)
        return self._sanitize(actions)

    @staticmethod
    def _sanitize(actions):
        if not np.all(np.isfinite(actions)):
            raise ValueError("An agent produced a non-finite action.")
        return np.clip(actions, -1.0, 1.0)

    def observe(self, outcome):
        for idx, agent in enumerate(self.agents):
            agent.observe_outcome(firm_outcome(outcome, idx))

    def end_episode(self, progress=1.0):
        """
        Let every agent update; returns the list of update statistics.
        """
        return [agent.end_episode_update(progress) for agent in self.agents]

    def transcripts(self):
        return []

    def save_checkpoints(self, directory):
        """
        Write policy checkpoints; only learning agents have any.
        """
        return []
