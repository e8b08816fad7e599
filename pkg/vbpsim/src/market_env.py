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
The sealed-bid procurement game. Every firm submits one price per step,
the x lowest prices win the guaranteed volume and every firm, winner or
not, earns from the residual market through price linkage.
"""
from collections import namedtuple
import numpy as np
from vermouth.log_helpers import StyleAdapter, get_logger
from .scenario import ScenarioError, is_resolved

LOGGER = StyleAdapter(get_logger(__name__))

OBS_DIM = 10
# slots of the per-firm observation
(P_MAX_SLOT, RHO_SLOT, X_SLOT, OMEGA_SLOT, Q0_SLOT, QE_SLOT,
 COST_SLOT, PRICE_SLOT, PROFIT_SLOT, TIME_SLOT) = range(OBS_DIM)

TRAJECTORY_COLUMNS = ("episode", "t", "firm_id", "action", "price",
                      "won", "profit", "reward")

ClearingResult = namedtuple("ClearingResult", ["ranks", "winners", "p_win"])

StepOutcome = namedtuple("StepOutcome", ["prices", "winners", "profits", "rewards",
                                         "next_obs", "done", "actions", "t", "ranks"])


class EpisodeFinishedError(RuntimeError):
    """Raised when stepping an environment whose episode is over."""


def decode_action(action, cost, p_max):
    """
    Map a normalized action onto the feasible price interval [cost, p_max].
    Actions outside [-1, 1] are clamped first. Works elementwise on arrays.

    Parameters
    ----------
    action: float or numpy.ndarray
    cost: float or numpy.ndarray
    p_max: float

    Returns
    -------
    float or numpy.ndarray
    """
    action = np.clip(action, -1.0, 1.0)
    # written as a convex combination so both end points map exactly
    price = 0.5 * (1.0 - action) * cost + 0.5 * (1.0 + action) * p_max
    price = np.clip(price, cost, p_max)
    if np.ndim(price) == 0:
        return float(price)
    return price


def encode_price(price, cost, p_max):
    """
    Inverse of :func:`decode_action`; prices outside [cost, p_max]
    are clamped first.
    """
    price = np.clip(price, cost, p_max)
    action = np.clip(2.0 * (price - cost) / (p_max - cost) - 1.0, -1.0, 1.0)
    if np.ndim(action) == 0:
        return float(action)
    return action


def clear_market(prices, x, costs=None):
    """
    Select the `x` lowest prices. Ties are broken by lower cost and then
    by lower firm index.

    Parameters
    ----------
    prices: array-like
        one price per firm
    x: int
        number of winners
    costs: array-like
        unit cost per firm; used for tie-breaking only

    Returns
    -------
    ClearingResult
    """
    prices = np.asarray(prices, dtype=float)
    n_bidders = len(prices)
    if not 1 <= x <= n_bidders:
        raise ValueError("Cannot select {} winners from {} bids.".format(x, n_bidders))
    costs = np.zeros(n_bidders) if costs is None else np.asarray(costs, dtype=float)
    # lexsort uses the last key as primary key
    ranks = np.lexsort((np.arange(n_bidders), costs, prices))
    winners = np.zeros(n_bidders, dtype=bool)
    winners[ranks[:x]] = True
    return ClearingResult(ranks=ranks, winners=winners, p_win=[float(p) for p in prices[ranks[:x]]])


def _profit_terms(price, cost, omega, beta, scenario):
    procurement = (price - cost) * (scenario.rho / scenario.x) * scenario.q0
    linkage = (price * (1 + omega) - cost) * (scenario.qe - scenario.rho * scenario.q0) * beta
    return procurement, linkage


def profit(price, firm, scenario, won):
    """
    Profit of `firm` bidding `price`, in 10^4 CNY. Winners share the
    guaranteed volume rho*q0 evenly; every firm sells its share beta of
    the residual volume qe - rho*q0 at the linked price price*(1+omega).

    Parameters
    ----------
    price: float
    firm: FirmConfig
        firm with resolved cost
    scenario: DrugScenario
    won: bool

    Returns
    -------
    float
    """
    procurement, linkage = _profit_terms(price, firm.cost, firm.omega, firm.beta, scenario)
    if won:
        return procurement + linkage
    return linkage


def market_profits(prices, winners, scenario):
    """
    Vectorised :func:`profit` over all firms of `scenario`.
    """
    cost, omega, beta = firm_arrays(scenario)
    procurement, linkage = _profit_terms(np.asarray(prices, dtype=float), cost, omega, beta, scenario)
    return np.where(winners, procurement + linkage, linkage)


def firm_arrays(scenario):
    """
    Return the cost, omega and beta of every firm as arrays.
    """
    if not is_resolved(scenario):
        raise ScenarioError("Scenario {} has firms without cost; resolve costs first."
                            .format(scenario.drug_id))
    cost = np.array([firm.cost for firm in scenario.firms], dtype=float)
    omega = np.array([firm.omega for firm in scenario.firms], dtype=float)
    beta = np.array([firm.beta for firm in scenario.firms], dtype=float)
    return cost, omega, beta


def profit_bounds(scenario):
    """
    Smallest and largest profit any firm can make in `scenario`. Profit is
    linear in price, so the extremes sit at the interval end points.
    """
    cost, _, _ = firm_arrays(scenario)
    candidates = []
    for prices in (cost, np.full_like(cost, scenario.p_max)):
        for won in (True, False):
            candidates.append(market_profits(prices, np.full(len(cost), won), scenario))
    candidates = np.concatenate(candidates)
    return float(candidates.min()), float(candidates.max())


def profit_scale(scenario):
    """
    Magnitude used to bring profits to order one before learning.
    """
    low, high = profit_bounds(scenario)
    scale = max(abs(low), abs(high))
    return scale if scale > 0 else 1.0


class ObservationScaler:
    """
    Min-max scaling of observations with bounds derived from the scenario
    at reset. Features with an empty range map to 0.
    """
    def __init__(self, scenario):
        _, omega, _ = firm_arrays(scenario)
        volume = max(scenario.q0, scenario.qe)
        profit_low, profit_high = profit_bounds(scenario)
        self.lower = np.zeros(OBS_DIM)
        self.upper = np.zeros(OBS_DIM)
        self.upper[[P_MAX_SLOT, COST_SLOT, PRICE_SLOT]] = scenario.p_max
        self.upper[RHO_SLOT] = 1.0
        self.upper[X_SLOT] = len(scenario.firms)
        self.upper[OMEGA_SLOT] = max(1.0, float(omega.max()))
        self.upper[[Q0_SLOT, QE_SLOT]] = volume
        self.lower[PROFIT_SLOT] = min(profit_low, 0.0)
        self.upper[PROFIT_SLOT] = max(profit_high, 0.0)
        self.upper[TIME_SLOT] = 1.0

    def __call__(self, observations):
        observations = np.asarray(observations, dtype=float)
        span = self.upper - self.lower
        safe_span = np.where(span > 0, span, 1.0)
        scaled = (observations - self.lower) / safe_span
        return np.where(span > 0, scaled, 0.0)


class ProcurementEnv:
    """
    One procurement lot played for a fixed number of steps. Policy and
    firm parameters stay fixed during an episode; only the previous price,
    the previous profit and the time fraction evolve.

    Parameters
    ----------
    timesteps: int
        the horizon T
    """
    def __init__(self, timesteps):
        if int(timesteps) < 1:
            raise ValueError("The horizon needs at least one step.")
        self.timesteps = int(timesteps)
        self.scenario = None
        self.seed = None
        self.scaler = None
        self.t = 0
        self.prev_price = None
        self.prev_profit = None
        self.history = []
        self._cost = self._omega = self._beta = None

    @property
    def n_firms(self):
        return len(self.scenario.firms)

    @property
    def done(self):
        return self.t >= self.timesteps

    def reset(self, scenario, seed=None):
        """
        Start a new episode. Before the first bid every firm's previous
        price is its cost and its previous profit is zero.

        Parameters
        ----------
        scenario: DrugScenario
            scenario with resolved costs
        seed: int
            recorded with the episode; the market itself is deterministic

        Returns
        -------
        numpy.ndarray
            raw observations, shape (N, 10)
        """
        self._cost, self._omega, self._beta = firm_arrays(scenario)
        self.scenario = scenario
        self.seed = seed
        self.scaler = ObservationScaler(scenario)
        self.t = 0
        self.prev_price = self._cost.copy()
        self.prev_profit = np.zeros(len(scenario.firms))
        self.history = []
        return self.observe()

    def observe(self):
        """
        Raw observations of all firms for the current step.
        """
        scenario = self.scenario
        obs = np.empty((self.n_firms, OBS_DIM))
        obs[:, P_MAX_SLOT] = scenario.p_max
        obs[:, RHO_SLOT] = scenario.rho
        obs[:, X_SLOT] = scenario.x
        obs[:, OMEGA_SLOT] = self._omega
        obs[:, Q0_SLOT] = scenario.q0
        obs[:, QE_SLOT] = scenario.qe
        obs[:, COST_SLOT] = self._cost
        obs[:, PRICE_SLOT] = self.prev_price
        obs[:, PROFIT_SLOT] = self.prev_profit
        obs[:, TIME_SLOT] = self.t / self.timesteps
        return obs

    def normalize(self, observations):
        """
        Scale raw observations with the bounds fixed at reset.
        """
        return self.scaler(observations)

    def step(self, actions):
        """
        Play one simultaneous round of bids.

        Parameters
        ----------
        actions: array-like
            one action in [-1, 1] per firm; out of range values are clamped

        Returns
        -------
        StepOutcome
        """
        if self.scenario is None:
            raise RuntimeError("Call reset() before step().")
        if self.done:
            raise EpisodeFinishedError("Episode of {} finished after {} steps."
                                       .format(self.scenario.drug_id, self.timesteps))
        actions = np.clip(np.asarray(actions, dtype=float).reshape(-1), -1.0, 1.0)
        if len(actions) != self.n_firms:
            raise ValueError("Expected {} actions, got {}.".format(self.n_firms, len(actions)))
        if not np.all(np.isfinite(actions)):
            raise ValueError("Actions must be finite.")

        prices = decode_action(actions, self._cost, self.scenario.p_max)
        clearing = clear_market(prices, self.scenario.x, self._cost)
        profits = market_profits(prices, clearing.winners, self.scenario)

        self.prev_price = prices.copy()
        self.prev_profit = profits.copy()
        step_index = self.t
        self.t += 1
        outcome = StepOutcome(prices=prices,
                              winners=clearing.winners,
                              profits=profits,
                              rewards=profits.copy(),
                              next_obs=self.observe(),
                              done=self.done,
                              actions=actions,
                              t=step_index,
                              ranks=clearing.ranks)
        self.history.append(outcome)
        return outcome
