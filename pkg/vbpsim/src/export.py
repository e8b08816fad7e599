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
Writers (and a few readers) for the per-task output tree.
"""
import csv
import json
import platform
from pathlib import Path
import numpy as np
import scipy
from vermouth.log_helpers import StyleAdapter, get_logger
from .logging import task_label
from .market_env import TRAJECTORY_COLUMNS
from .scenario import scenario_to_dict

LOGGER = StyleAdapter(get_logger(__name__))

FAILED_MARKER = "FAILED"
FINAL_STRATEGY_COLUMNS = ("firm_id", "firm_type", "cost", "final_price", "won",
                          "profit", "bid_ceiling_ratio")
EVALUATION_COLUMNS = ("eval_episode", "firm_id", "final_price", "won", "profit",
                      "episode_return")
TRAINING_COLUMNS = ("episode", "mean_reward", "total_return", "mean_price",
                    "winner_bid_ratio", "policy_loss", "value_loss", "approx_kl",
                    "entropy", "entropy_coef", "stopped_early")


def task_directory(output, task):
    """
    ``<output>/<batch>/<drug>/<algorithm>/<setting>``
    """
    return Path(output, task.batch_id, task.scenario_ref, task.algorithm, task.setting)


def write_csv(path, columns, rows):
    """
    Write `rows` (dicts) with a header; missing and None values are
    left empty.
    """
    with open(path, "w", newline="", encoding="utf-8") as file_:
        writer = csv.DictWriter(file_, fieldnames=list(columns), extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as file_:
        return list(csv.DictReader(file_))


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as file_:
        json.dump(payload, file_, indent=2, sort_keys=True)
        file_.write("\n")


def task_to_dict(task):
    payload = task._asdict()
    payload["overrides"] = [{"target": item.target, "multiplier": item.multiplier}
                            for item in task.overrides]
    return payload


def _versions():
    from vbpsim import __version__
    return {"vbpsim": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version()}


def export_result(result, directory, checkpoints=False, config_echo=None):
    """
    Write the files of one finished task into `directory`.

    Parameters
    ----------
    result: vbpsim.src.workflow.RunResult
    directory: pathlib.Path
    checkpoints: bool
        also write policy checkpoints of learning agents
    config_echo: dict
        configuration values stored in run_meta.json
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    marker = directory / FAILED_MARKER
    if marker.exists():
        marker.unlink()

    write_csv(directory / "training_stats.csv", TRAINING_COLUMNS, result.training_stats)
    write_csv(directory / "final_strategy.csv", FINAL_STRATEGY_COLUMNS, result.final_strategy)
    write_csv(directory / "evaluation.csv", EVALUATION_COLUMNS, result.evaluation)
    if result.trajectory is not None:
        write_csv(directory / "trajectory.csv", TRAJECTORY_COLUMNS, result.trajectory)
    if result.task.algorithm == "llm":
        write_json(directory / "transcripts.json", {"drug_id": result.scenario.drug_id,
                                                    "records": result.transcripts})

    checkpoint_paths = []
    if checkpoints and result.population is not None:
        checkpoint_paths = [Path(path).name for path in result.population.save_checkpoints(directory)]

    write_json(directory / "run_meta.json",
               {"task": task_to_dict(result.task),
                "scenario": scenario_to_dict(result.scenario),
                "config": config_echo or {},
                "versions": _versions(),
                "wall_time": result.wall_time,
                "constraint_stats": result.constraint_stats,
                "checkpoints": checkpoint_paths})


def write_failure(directory, task, error):
    """
    Leave a FAILED marker holding the task label and the error next to
    any partial output.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / FAILED_MARKER, "w", encoding="utf-8") as file_:
        if task is not None:
            file_.write(task_label(task) + "\n")
        file_.write("{}: {}\n".format(type(error).__name__, error))
    LOGGER.debug("wrote failure marker for {}", directory)


def find_runs(run_dir):
    """
    Task directories below `run_dir` that hold a final strategy, sorted.
    """
    return sorted(path.parent for path in Path(run_dir).glob("**/final_strategy.csv"))


def read_run(directory):
    """
    Load the run_meta.json and final_strategy.csv of one task directory.

    Returns
    -------
    dict
        metadata
    list[dict]
        final strategy rows with numeric fields converted
    """
    directory = Path(directory)
    with open(directory / "run_meta.json", encoding="utf-8") as file_:
        meta = json.load(file_)
    rows = []
    for row in read_csv(directory / "final_strategy.csv"):
        rows.append({"firm_id": row["firm_id"],
                     "firm_type": row["firm_type"],
                     "cost": float(row["cost"]),
                     "final_price": float(row["final_price"]),
                     "won": bool(int(row["won"])),
                     "profit": float(row["profit"]),
                     "bid_ceiling_ratio": float(row["bid_ceiling_ratio"])})
    return meta, rows
