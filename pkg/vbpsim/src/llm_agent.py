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
Language model bidders. Each firm perceives the tender, remembers its
last few rounds, asks a chat model for a bid and, every few rounds, is
asked to reflect on its cumulative performance.
"""
import json
import math
from collections import deque, namedtuple
from concurrent.futures import ThreadPoolExecutor
import numpy as np
from vermouth.log_helpers import StyleAdapter, get_logger
from .agents import AgentPolicy, AgentPopulation
from .market_env import (COST_SLOT, P_MAX_SLOT, Q0_SLOT, QE_SLOT, RHO_SLOT,
                         X_SLOT, encode_price)
from .scenario import FirmType

LOGGER = StyleAdapter(get_logger(__name__))

LlmConfig = namedtuple("LlmConfig", ["model", "endpoint", "temperature", "max_tokens",
                                     "timeout", "retries", "mock_script",
                                     "memory_size", "reflection_every"],
                       defaults=("qwen3-235b-a22b-instruct", None, 0.7, 512, 60.0, 2,
                                 None, 3, 5))

MemoryEntry = namedtuple("MemoryEntry", ["step", "price", "profit", "delta", "rank", "won"])

MarketFeedback = namedtuple("MarketFeedback", ["rank", "n_firms", "won", "p_win"])

FIRM_DESCRIPTIONS = {FirmType.A: "originator manufacturer",
                     FirmType.B: "large generic manufacturer",
                     FirmType.C: "medium generic manufacturer",
                     FirmType.D: "small generic manufacturer"}

SYSTEM_PROMPT = (
    "You are the pricing strategist of a pharmaceutical firm in a national "
    "volume-based drug procurement tender. All firms submit sealed bids at the "
    "same time; the lowest bids win the guaranteed procurement volume. Your bid "
    "must not be below your unit cost and must not exceed the maximum valid "
    "bidding price.\n"
    "Answer with exactly one JSON object and nothing else, in the form\n"
    '{"reasoning": "<text>", "bid_price": <float>}'
)

FALLBACK_MARKUP = 1.1


class LlmResponseError(ValueError):
    """Raised when a model reply holds no usable bid."""


class LlmMemory:
    """
    Sliding window over the most recent decision outcomes plus the
    cumulative statistics shown when reflection is due.
    """
    def __init__(self, size=3, reflection_every=5):
        self.entries = deque(maxlen=size)
        self.reflection_every = reflection_every
        self.step = 0
        self.reflection = None
        self.n_outcomes = 0
        self.n_wins = 0
        self.total_profit = 0.0
        self.total_price = 0.0
        self._last_profit = None

    def advance(self):
        """
        Move to the next decision; returns its 1-based step number.
        """
        self.step += 1
        return self.step

    @property
    def reflection_due(self):
        return self.step > 0 and self.step % self.reflection_every == 0

    def record(self, price, profit, rank, won):
        delta = None if self._last_profit is None else profit - self._last_profit
        self.entries.append(MemoryEntry(self.step, price, profit, delta, rank, won))
        self._last_profit = profit
        self.n_outcomes += 1
        self.n_wins += int(won)
        self.total_profit += profit
        self.total_price += price


def _render_memory(memory):
    if not memory.entries:
        return "No bidding history yet; this is your first bid."
    lines = []
    for entry in memory.entries:
        status = "won" if entry.won else "lost"
        if entry.delta is None:
            change = "first recorded round"
        else:
            change = "profit change {:+.2f} vs the previous round, {}".format(
                entry.delta, "after winning" if entry.won else "after losing")
        lines.append("- Round {}: bid {:.4f}, price rank {}, {}, profit {:.2f} ({})"
                     .format(entry.step, entry.price, entry.rank, status, entry.profit, change))
    if memory.reflection:
        lines.append("Your latest strategy reflection: " + memory.reflection)
    return "\n".join(lines)


def _render_feedback(feedback):
    if feedback is None:
        return "No market results have been published yet."
    status = "selected as a winner" if feedback.won else "not selected"
    winning = ", ".join("{:.4f}".format(price) for price in feedback.p_win)
    return ("In the last round your price ranked {} of {} and you were {}. "
            "Winning prices: {}.".format(feedback.rank, feedback.n_firms, status, winning))


def build_prompt(memory, observation, feedback, firm):
    """
    Build the system and user prompt of one decision.

    Parameters
    ----------
    memory: LlmMemory
        already advanced to the current step
    observation: numpy.ndarray
        raw observation of the firm
    feedback: MarketFeedback or None
        result of the previous round
    firm: FirmConfig

    Returns
    -------
    str
        system prompt
    str
        user prompt
    """
    firm_type = FirmType.parse(firm.firm_type)
    p_max, cost = observation[P_MAX_SLOT], observation[COST_SLOT]
    sections = [
        "## Role\nYou set the bid price of firm {} in this tender.".format(firm.firm_id),
        "## Firm\nType {} ({}). Unit cost {:.4f} CNY per unit. Price linkage coefficient {}. "
        "In-house API production: {}.".format(firm_type.value, FIRM_DESCRIPTIONS[firm_type],
                                             cost, firm.omega,
                                             "yes" if firm.has_raw_material else "no"),
        "## Procurement rules\nMaximum valid bidding price {:.4f} CNY per unit. "
        "The {} lowest bids win. Agreed procurement volume {} (10^4 units) of which a "
        "share {} is guaranteed to the winners; actual market volume {} (10^4 units)."
        .format(p_max, int(observation[X_SLOT]), observation[Q0_SLOT],
                observation[RHO_SLOT], observation[QE_SLOT]),
        "## Recent rounds\n" + _render_memory(memory),
        "## Market feedback\n" + _render_feedback(feedback),
    ]
    if memory.reflection_due:
        n_seen = max(memory.n_outcomes, 1)
        sections.append(
            "## Reflection\nAnalyze cumulative performance metrics before bidding: over {} "
            "rounds you won {} times, average profit {:.2f}, average bid {:.4f}. Reconsider "
            "whether your pricing strategy should change and explain why in your reasoning."
            .format(memory.n_outcomes, memory.n_wins, memory.total_profit / n_seen,
                    memory.total_price / n_seen))
    sections.append("## Task\nDecide your bid for round {}.".format(memory.step))
    return SYSTEM_PROMPT, "\n\n".join(sections)


def parse_llm_response(text):
    """
    Extract the first JSON object with both `reasoning` and a numeric
    `bid_price` from `text`, ignoring any surrounding prose.

    Returns
    -------
    str
        reasoning
    float
        the raw bid, not yet clamped

    Raises
    ------
    LlmResponseError
    """
    decoder = json.JSONDecoder()
    start = text.find("{") if isinstance(text, str) else -1
    while start != -1:
        try:
            payload, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            payload = None
        if isinstance(payload, dict) and "reasoning" in payload and "bid_price" in payload:
            bid = payload["bid_price"]
            if isinstance(bid, str):
                try:
                    bid = float(bid)
                except ValueError:
                    bid = None
            if isinstance(bid, (int, float)) and not isinstance(bid, bool) and math.isfinite(bid):
                return str(payload["reasoning"]), float(bid)
        start = text.find("{", start + 1)
    raise LlmResponseError("No JSON object with reasoning and bid_price found.")


def clamp_bid(raw_bid, cost, p_max):
    return min(max(raw_bid, cost), p_max)


class LlmAgent(AgentPolicy):
    """
    Parameters
    ----------
    firm: FirmConfig
    scenario: DrugScenario
    transport: ChatTransport
    config: LlmConfig
    """
    def __init__(self, firm, scenario, transport, config=LlmConfig()):
        super().__init__(firm, scenario)
        self.transport = transport
        self.config = config
        self.memory = LlmMemory(config.memory_size, config.reflection_every)
        self.feedback = None
        self.previous_bid = None
        self.episode = -1
        self.records = []

    def start_episode(self, scaler=None):
        super().start_episode(scaler)
        self.memory = LlmMemory(self.config.memory_size, self.config.reflection_every)
        self.feedback = None
        self.previous_bid = None
        self.episode += 1

    def _fallback_bid(self, cost, p_max):
        if self.previous_bid is not None:
            return self.previous_bid
        return clamp_bid(FALLBACK_MARKUP * cost, cost, p_max)

    def act(self, observation, explore=True):
        cost = float(observation[COST_SLOT])
        p_max = float(observation[P_MAX_SLOT])
        step = self.memory.advance()
        reflection = self.memory.reflection_due
        system, user = build_prompt(self.memory, observation, self.feedback, self.firm)

        responses = []
        reasoning, raw_bid = None, None
        # one retry after an unusable reply
        for attempt in range(2):
            context = {"firm_id": self.firm_id, "step": step, "attempt": attempt}
            text = self.transport.complete(system, user, self.config.temperature,
                                           self.config.max_tokens, context)
            responses.append(text)
            try:
                reasoning, raw_bid = parse_llm_response(text)
                break
            except LlmResponseError:
                continue

        fallback = raw_bid is None
        if fallback:
            bid = self._fallback_bid(cost, p_max)
            LOGGER.warning("firm {} step {}: no usable bid in the reply, falling back to {:.4f}",
                           self.firm_id, step, bid, type="llm")
        else:
            bid = clamp_bid(raw_bid, cost, p_max)
        if reflection and reasoning:
            self.memory.reflection = reasoning

        self.previous_bid = bid
        self.records.append({"episode": self.episode,
                             "step": step,
                             "firm_id": self.firm_id,
                             "system": system,
                             "user": user,
                             "responses": responses,
                             "reasoning": reasoning,
                             "raw_bid": raw_bid,
                             "bid": bid,
                             "cost": cost,
                             "p_max": p_max,
                             "below_cost": raw_bid is not None and raw_bid < cost,
                             "above_ceiling": raw_bid is not None and raw_bid > p_max,
                             "fallback": fallback,
                             "reflection": reflection})
        return encode_price(bid, cost, p_max)

    def observe_outcome(self, outcome):
        self.memory.record(outcome.price, outcome.profit, outcome.rank, outcome.won)
        self.feedback = MarketFeedback(outcome.rank, outcome.n_firms, outcome.won, outcome.p_win)
        if self.records:
            self.records[-1].update({"price": outcome.price, "won": outcome.won,
                                     "profit": outcome.profit, "rank": outcome.rank})


class LlmPopulation(AgentPopulation):
    """
    Queries all firms of a round concurrently and waits for every reply
    before the market clears.
    """
    def act(self, observations, explore=True):
        self._check_width(observations)
        with ThreadPoolExecutor(max_workers=len(self.agents)) as executor:
            futures = [executor.submit(agent.act, obs, explore)
                       for agent, obs in zip(self.agents, observations)]
            actions = np.array([future.result() for future in futures], dtype=float)
        return self._sanitize(actions)

    def transcripts(self):
        records = [record for agent in self.agents for record in agent.records]
        return sorted(records, key=lambda record: (record["episode"], record["step"],
                                                   self.firm_ids.index(record["firm_id"])))


def training_records(records):
    """
    Transcript records of the training episodes; records without a phase
    tag count as training.
    """
    return [record for record in records if record.get("phase", "train") == "train"]


def constraint_stats(records):
    """
    Count how many raw bids violated the price bounds.

    Parameters
    ----------
    records: list[dict]
        transcript records carrying raw_bid, cost and p_max

    Returns
    -------
    dict
        records, below_cost, above_ceiling, below_pct and above_pct
        (percentages rounded to two decimals)
    """
    n_records = len(records)
    below = sum(1 for rec in records if rec["raw_bid"] is not None and rec["raw_bid"] < rec["cost"])
    above = sum(1 for rec in records if rec["raw_bid"] is not None and rec["raw_bid"] > rec["p_max"])
    fallbacks = sum(1 for rec in records if rec.get("fallback"))

    def percent(count):
        return round(100.0 * count / n_records, 2) if n_records else 0.0

    return {"records": n_records,
            "below_cost": below,
            "above_ceiling": above,
            "below_pct": percent(below),
            "above_pct": percent(above),
            "fallbacks": fallbacks}
