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
Agreement metrics between simulated and observed tenders, summaries of
profits and bid-to-ceiling ratios, and sensitivity sweeps with
confidence bands over seeds.
"""
import csv
import math
from collections import defaultdict
import numpy as np
import scipy.stats
from vermouth.log_helpers import StyleAdapter, get_logger
from .market_env import clear_market
from .scenario import TaskSpec, make_override, override_label
from .workflow import AgentSettings, TaskRunner

LOGGER = StyleAdapter(get_logger(__name__))

REFERENCE_COLUMNS = ("drug_id", "firm_id", "actual_price", "actual_winner")
PROFIT_COLUMNS = ("mean_profit", "profit_q25", "profit_median", "profit_q75",
                  "mean_bid_ceiling_ratio")
METRIC_COLUMNS = ("n_firms", "spearman", "p", "r2", "alignment", "alignment_macro")
SWEEP_COLUMNS = ("multiplier", "mean_price", "price_ci_lo", "price_ci_hi", "mean_profit",
                 "profit_ci_lo", "profit_ci_hi", "mean_bid_ceiling_ratio", "n_seeds")


class MetricError(ValueError):
    """Raised when the inputs of a metric violate its preconditions."""


class ReferenceFormatError(IOError):
    """Raised when a reference file does not follow the expected schema."""


def _paired(pred, actual, minimum):
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or pred.ndim != 1:
        raise MetricError("Predictions and observations must be vectors of equal length.")
    if len(pred) < minimum:
        raise MetricError("Need at least {} pairs, got {}.".format(minimum, len(pred)))
    return pred, actual


def spearman(pred, actual):
    """
    Spearman rank correlation with average ranks for ties and a two
    sided p-value from the t approximation.

    Returns
    -------
    float
        rho; nan when either input is constant
    float
        p-value; nan when rho is undefined
    """
    pred, actual = _paired(pred, actual, 3)
    if np.ptp(pred) == 0 or np.ptp(actual) == 0:
        LOGGER.warning("Spearman correlation undefined for a constant vector.")
        return float("nan"), float("nan")
    rank_pred = scipy.stats.rankdata(pred)
    rank_actual = scipy.stats.rankdata(actual)
    rho = float(np.corrcoef(rank_pred, rank_actual)[0, 1])
    n_pairs = len(pred)
    # perfect rank agreement has no finite t statistic
    if math.isclose(abs(rho), 1.0, rel_tol=0.0, abs_tol=1e-12):
        return math.copysign(1.0, rho), 0.0
    t_stat = rho * math.sqrt((n_pairs - 2) / (1 - rho ** 2))
    p_value = float(2 * scipy.stats.t.sf(abs(t_stat), n_pairs - 2))
    return rho, p_value


def r_squared(pred, actual, log_scale=True):
    """
    Coefficient of determination 1 - SS_res / SS_tot, by default on
    log prices.
    """
    pred, actual = _paired(pred, actual, 2)
    if log_scale:
        if np.any(pred <= 0) or np.any(actual <= 0):
            raise MetricError("Log-scale R^2 needs positive prices.")
        pred, actual = np.log(pred), np.log(actual)
    ss_tot = np.sum((actual - actual.mean()) ** 2)
    if ss_tot == 0:
        raise MetricError("R^2 is undefined for constant observations.")
    ss_res = np.sum((actual - pred) ** 2)
    return float(1 - ss_res / ss_tot)


def _winner_set(winners):
    winners = np.asarray(winners)
    if winners.dtype == bool:
        return set(np.flatnonzero(winners).tolist())
    return set(int(idx) for idx in winners)


def winner_alignment(pred_prices, actual_winners, x, costs=None):
    """
    Fraction of the `x` observed winners that also win when the
    predicted prices are cleared.

    Parameters
    ----------
    pred_prices: array-like
    actual_winners: array-like
        boolean mask or firm indices
    x: int
    costs: array-like
        tie-break of the clearing
    """
    actual = _winner_set(actual_winners)
    if len(actual) != x:
        raise MetricError("Expected {} observed winners, got {}.".format(x, len(actual)))
    predicted = _winner_set(clear_market(pred_prices, x, costs).winners)
    return len(predicted & actual) / x


def aggregate_alignment(items):
    """
    Combine per-drug alignments.

    Parameters
    ----------
    items: list[tuple[float, int]]
        (alignment rate, winner slots x) per drug

    Returns
    -------
    float
        slot weighted (micro) average
    float
        plain (macro) average over drugs
    """
    if not items:
        return float("nan"), float("nan")
    rates = np.array([rate for rate, _ in items], dtype=float)
    slots = np.array([slots for _, slots in items], dtype=float)
    return float(np.sum(rates * slots) / np.sum(slots)), float(rates.mean())


def bid_ceiling_ratio(prices, p_max):
    if p_max <= 0:
        raise MetricError("p_max must be positive.")
    return np.asarray(prices, dtype=float) / p_max


def confidence_interval(values, level=0.95):
    """
    Mean and two sided confidence interval; Student t below ten samples,
    normal approximation otherwise. Bounds are nan for fewer than two.
    """
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if len(values) < 2:
        return mean, float("nan"), float("nan")
    sem = values.std(ddof=1) / math.sqrt(len(values))
    if len(values) < 10:
        quantile = scipy.stats.t.ppf(0.5 + level / 2, len(values) - 1)
    else:
        quantile = scipy.stats.norm.ppf(0.5 + level / 2)
    return mean, float(mean - quantile * sem), float(mean + quantile * sem)


def profit_summary(profits):
    """
    Mean and quartiles of `profits`.
    """
    profits = np.asarray(profits, dtype=float)
    q25, median, q75 = np.percentile(profits, [25, 50, 75])
    return {"mean_profit": float(profits.mean()),
            "profit_q25": float(q25),
            "profit_median": float(median),
            "profit_q75": float(q75)}


def bid_ceiling_by_type(runs):
    """
    Mean bid-to-ceiling ratio per algorithm and firm type.

    Parameters
    ----------
    runs: list[tuple[dict, list[dict]]]
        (run_meta, final strategy rows) as read by
        :func:`vbpsim.src.export.read_run`

    Returns
    -------
    list[dict]
    """
    groups = defaultdict(list)
    for meta, rows in runs:
        for row in rows:
            groups[(meta["task"]["algorithm"], row["firm_type"])].append(row["bid_ceiling_ratio"])
    return [{"algorithm": algorithm, "firm_type": firm_type,
             "mean_bid_ceiling_ratio": float(np.mean(ratios)), "n_firms": len(ratios)}
            for (algorithm, firm_type), ratios in sorted(groups.items())]


def read_reference(path):
    """
    Read observed tender results.

    Returns
    -------
    dict[str, dict[str, tuple[float, bool]]]
        drug_id -> firm_id -> (actual price, actual winner)
    """
    reference = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as file_:
        reader = csv.DictReader(file_)
        missing = [column for column in REFERENCE_COLUMNS if column not in (reader.fieldnames or [])]
        if missing:
            raise ReferenceFormatError("{}: missing column(s) {}.".format(path, ", ".join(missing)))
        for lineno, row in enumerate(reader, start=2):
            try:
                winner = int(row["actual_winner"])
                if winner not in (0, 1):
                    raise ValueError(winner)
                reference[row["drug_id"]][row["firm_id"]] = (float(row["actual_price"]), bool(winner))
            except (TypeError, ValueError) as error:
                raise ReferenceFormatError("{}:{}: invalid reference row.".format(path, lineno)) from error
    return dict(reference)


def _safe_r_squared(pred, actual):
    try:
        return r_squared(pred, actual)
    except MetricError as error:
        LOGGER.warning("R^2 skipped: {}", error)
        return float("nan")


def _safe_spearman(pred, actual):
    if len(pred) < 3:
        return float("nan"), float("nan")
    try:
        return spearman(pred, actual)
    except MetricError as error:
        LOGGER.warning("Spearman correlation skipped: {}", error)
        return float("nan"), float("nan")


def compute_metrics(runs, reference=None):
    """
    One metrics row per task directory. Without a reference only the
    profit columns are filled. With a reference, rows with drug_id ALL
    pool every matched firm of an algorithm and setting and report slot
    weighted alignment in `alignment` and the per-drug average in
    `alignment_macro`.

    Parameters
    ----------
    runs: list[tuple[dict, list[dict]]]
    reference: dict
        as returned by :func:`read_reference`

    Returns
    -------
    list[dict]
    """
    rows = []
    pooled = defaultdict(lambda: {"pred": [], "actual": [], "alignment": []})
    for meta, strategy in runs:
        task = meta["task"]
        row = {"drug_id": task["scenario_ref"], "algorithm": task["algorithm"],
               "setting": task["setting"]}
        row.update(profit_summary([item["profit"] for item in strategy]))
        row["mean_bid_ceiling_ratio"] = float(np.mean([item["bid_ceiling_ratio"] for item in strategy]))
        if reference is not None:
            row.update(_reference_metrics(meta, strategy, reference, pooled))
        rows.append(row)

    if reference is not None:
        for (algorithm, setting), data in sorted(pooled.items()):
            micro, macro = aggregate_alignment(data["alignment"])
            rho, p_value = _safe_spearman(data["pred"], data["actual"])
            rows.append({"drug_id": "ALL", "algorithm": algorithm, "setting": setting,
                         "n_firms": len(data["pred"]),
                         "spearman": rho, "p": p_value,
                         "r2": _safe_r_squared(data["pred"], data["actual"]),
                         "alignment": micro, "alignment_macro": macro})
    return rows


def _reference_metrics(meta, strategy, reference, pooled):
    task = meta["task"]
    observed = reference.get(task["scenario_ref"])
    if not observed:
        LOGGER.warning("No reference data for drug {}.", task["scenario_ref"])
        return {"n_firms": 0}
    matched = [item for item in strategy if item["firm_id"] in observed]
    pred = [item["final_price"] for item in matched]
    actual = [observed[item["firm_id"]][0] for item in matched]
    actual_winners = [observed[item["firm_id"]][1] for item in matched]
    x_winners = int(meta["scenario"]["x"])
    costs = [item["cost"] for item in matched]

    group = pooled[(task["algorithm"], task["setting"])]
    group["pred"].extend(pred)
    group["actual"].extend(actual)

    if sum(actual_winners) == x_winners and len(matched) >= x_winners:
        alignment = winner_alignment(pred, np.array(actual_winners), x_winners, costs)
        group["alignment"].append((alignment, x_winners))
    else:
        LOGGER.warning("Reference for {} lists {} winners, expected {}.",
                       task["scenario_ref"], sum(actual_winners), x_winners)
        alignment = float("nan")
    rho, p_value = _safe_spearman(pred, actual)
    return {"n_firms": len(matched), "spearman": rho, "p": p_value,
            "r2": _safe_r_squared(pred, actual), "alignment": alignment,
            "alignment_macro": None}


def sweep(scenario, algorithm, target, multipliers, seeds, episodes, timesteps,
          settings=None, eval_episodes=5, workers=1, output=None, batch="sweep"):
    """
    Run `algorithm` on `scenario` once per multiplier of `target` and per
    seed and summarise mean bid price, mean profit and bid-to-ceiling
    ratio per multiplier with 95% confidence intervals over seeds.

    Parameters
    ----------
    scenario: DrugScenario
    algorithm: str
    target: str
        rho, p_max, q0, qe or cost
    multipliers: list[float]
    seeds: list[int]
        every seed also fixes the sampled costs, so all multipliers see
        the same firms
    episodes, timesteps, eval_episodes: int
    settings: vbpsim.src.workflow.AgentSettings
    workers: int
    output: str or pathlib.Path
        when given, task results are exported below it

    Returns
    -------
    list[dict]
        one row per multiplier, ascending
    """
    if not multipliers:
        raise MetricError("A sweep needs at least one multiplier.")
    if not seeds:
        raise MetricError("A sweep needs at least one seed.")
    multipliers = sorted(set(float(value) for value in multipliers))
    tasks = []
    for multiplier in multipliers:
        overrides = (make_override(target, multiplier),)
        for seed in seeds:
            tasks.append(TaskSpec(batch_id=batch,
                                  scenario_ref=scenario.drug_id,
                                  algorithm=algorithm,
                                  overrides=overrides,
                                  episodes=episodes,
                                  timesteps=timesteps,
                                  seed=int(seed),
                                  eval_episodes=eval_episodes,
                                  setting="{}-seed{}".format(override_label(overrides), seed),
                                  cost_seed=int(seed)))

    runner = TaskRunner({scenario.drug_id: scenario}, settings or AgentSettings(), output=output)
    outcomes = runner.run_tasks(tasks, workers)
    failed = [outcome for outcome in outcomes if outcome.error]
    if failed:
        raise RuntimeError("{} sweep task(s) failed, first: {}".format(len(failed), failed[0].error))

    per_multiplier = defaultdict(lambda: {"price": [], "profit": [], "ratio": []})
    for outcome in outcomes:
        strategy = outcome.result.final_strategy
        data = per_multiplier[outcome.task.overrides[0].multiplier]
        data["price"].append(np.mean([row["final_price"] for row in strategy]))
        data["profit"].append(np.mean([row["profit"] for row in strategy]))
        data["ratio"].append(np.mean([row["bid_ceiling_ratio"] for row in strategy]))

    rows = []
    for multiplier in multipliers:
        data = per_multiplier[multiplier]
        mean_price, price_lo, price_hi = confidence_interval(data["price"])
        mean_profit, profit_lo, profit_hi = confidence_interval(data["profit"])
        rows.append({"multiplier": multiplier,
                     "mean_price": mean_price, "price_ci_lo": price_lo, "price_ci_hi": price_hi,
                     "mean_profit": mean_profit, "profit_ci_lo": profit_lo,
                     "profit_ci_hi": profit_hi,
                     "mean_bid_ceiling_ratio": float(np.mean(data["ratio"])),
                     "n_seeds": len(data["price"])})
    return rows
