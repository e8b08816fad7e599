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
Target margin heuristic: every firm bids cost times one plus a margin
set by its type, undercuts after a lost round and creeps back up after
a won one.
"""
from collections import namedtuple
from .agents import AgentPolicy
from .market_env import COST_SLOT, P_MAX_SLOT, encode_price
from .scenario import FirmType

BASE_MARGINS = {FirmType.A: 0.20,
                FirmType.B: 0.14,
                FirmType.C: 0.086,
                FirmType.D: 0.086}

RuleConfig = namedtuple("RuleConfig", ["down_step", "up_step"], defaults=(0.02, 0.01))


class RuleAgent(AgentPolicy):
    """
    Parameters
    ----------
    firm: FirmConfig
    scenario: DrugScenario
    config: RuleConfig
    """
    def __init__(self, firm, scenario, config=RuleConfig()):
        super().__init__(firm, scenario)
        if config.down_step < 0 or config.up_step < 0:
            raise ValueError("Margin steps cannot be negative.")
        self.base_margin = BASE_MARGINS[FirmType.parse(firm.firm_type)]
        self.down_step = config.down_step
        self.up_step = config.up_step
        self.current_margin = self.base_margin

    def start_episode(self, scaler=None):
        super().start_episode(scaler)
        self.current_margin = self.base_margin

    def target_price(self, cost, p_max):
        return min(max(cost * (1 + self.current_margin), cost), p_max)

    def act(self, observation, explore=True):
        cost = observation[COST_SLOT]
        p_max = observation[P_MAX_SLOT]
        return encode_price(self.target_price(cost, p_max), cost, p_max)

    def observe_outcome(self, outcome):
        if outcome.won:
            self.current_margin = min(self.current_margin + self.up_step, self.base_margin)
        else:
            self.current_margin = max(self.current_margin - self.down_step, 0.0)
