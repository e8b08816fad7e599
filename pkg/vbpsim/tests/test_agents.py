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
Test the agent population plumbing and the target margin rule agent.
"""
import math
import pytest
import numpy as np
from vbpsim.src.agents import AgentPolicy, AgentPopulation, FirmOutcome, firm_outcome
from vbpsim.src.market_env import ProcurementEnv, decode_action, encode_price
from vbpsim.src.rule_agent import RuleAgent, RuleConfig
from vbpsim.src.scenario import FirmConfig, FirmType
from .example_fixtures import adefovir


class ConstantAgent(AgentPolicy):

    def __init__(self, firm, scenario, action):
        super().__init__(firm, scenario)
        self.action = action
        self.outcomes = []

    def act(self, observation, explore=True):
        return self.action

    def observe_outcome(self, outcome):
        self.outcomes.append(outcome)


def _outcome(won):
    return FirmOutcome(t=0, action=0.0, price=0.5, won=won, profit=0.0, reward=0.0,
                       rank=1 if won else 3, n_firms=3, p_win=[], next_obs=None, done=False)


def _observation(scenario, firm):
    env = ProcurementEnv(3)
    observations = env.reset(scenario, seed=0)
    return observations[[item.firm_id for item in scenario.firms].index(firm.firm_id)]


def test_firm_outcome(adefovir):
    env = ProcurementEnv(3)
    env.reset(adefovir, seed=0)
    costs = np.array([firm.cost for firm in adefovir.firms])
    outcome = env.step(encode_price(np.array([0.6, 0.3, 0.4]), costs, adefovir.p_max))
    view = firm_outcome(outcome, 0)
    assert not view.won
    assert view.rank == 3
    assert view.n_firms == 3
    assert np.allclose(view.p_win, [0.3, 0.4])
    assert math.isclose(view.price, outcome.prices[0])
    assert firm_outcome(outcome, 1).rank == 1


def test_population_round(adefovir):
    agents = [ConstantAgent(firm, adefovir, action)
              for firm, action in zip(adefovir.firms, (0.2, -3.0, 0.5))]
    population = AgentPopulation(agents)
    env = ProcurementEnv(2)
    observations = env.reset(adefovir, seed=0)
    population.start_episode(env)
    actions = population.act(observations)
    # out of range actions are clipped before they reach the market
    assert np.allclose(actions, [0.2, -1.0, 0.5])
    population.observe(env.step(actions))
    assert [len(agent.outcomes) for agent in agents] == [1, 1, 1]
    assert agents[1].outcomes[0].won
    assert population.end_episode() == [None, None, None]
    assert population.firm_ids == ["F1", "F2", "F3"]
    assert population.transcripts() == []


def test_population_rejects(adefovir):
    population = AgentPopulation([ConstantAgent(firm, adefovir, np.nan) for firm in adefovir.firms])
    observations = ProcurementEnv(2).reset(adefovir, seed=0)
    with pytest.raises(ValueError):
        population.act(observations[:2])
    with pytest.raises(ValueError):
        population.act(observations)


def test_rule_type_a_margin(adefovir):
    firm = adefovir.firms[1]
    agent = RuleAgent(firm, adefovir)
    action = agent.act(_observation(adefovir, firm), explore=False)
    assert math.isclose(decode_action(action, firm.cost, adefovir.p_max), 0.098 * 1.20)


def test_rule_clamps_to_ceiling(adefovir):
    firm = FirmConfig("F9", 0.0, FirmType.A, False, 0.0, 0.95)
    scenario = adefovir._replace(p_max=1.0, firms=adefovir.firms + (firm,))
    agent = RuleAgent(firm, scenario)
    assert agent.target_price(0.95, 1.0) == 1.0
    assert agent.act(_observation(scenario, firm)) == 1.0


def test_rule_undercuts_after_losses(adefovir):
    agent = RuleAgent(adefovir.firms[0], adefovir, RuleConfig(down_step=0.02))
    assert agent.current_margin == 0.086
    for _ in range(3):
        agent.observe_outcome(_outcome(won=False))
    assert math.isclose(agent.current_margin, 0.026)
    # margins never go negative
    for _ in range(10):
        agent.observe_outcome(_outcome(won=False))
    assert agent.current_margin == 0.0


def test_rule_recovers_after_wins(adefovir):
    agent = RuleAgent(adefovir.firms[2], adefovir, RuleConfig(down_step=0.04, up_step=0.01))
    agent.observe_outcome(_outcome(won=False))
    agent.observe_outcome(_outcome(won=True))
    assert math.isclose(agent.current_margin, 0.14 - 0.04 + 0.01)
    for _ in range(5):
        agent.observe_outcome(_outcome(won=True))
    assert agent.current_margin == 0.14
    agent.observe_outcome(_outcome(won=False))
    agent.start_episode()
    assert agent.current_margin == 0.14


def test_rule_is_deterministic(adefovir):
    firm = adefovir.firms[0]
    agent = RuleAgent(firm, adefovir)
    observation = _observation(adefovir, firm)
    assert agent.act(observation, explore=True) == agent.act(observation, explore=False)


def test_rule_rejects_negative_steps(adefovir):
    with pytest.raises(ValueError):
        RuleAgent(adefovir.firms[0], adefovir, RuleConfig(down_step=-0.1))
