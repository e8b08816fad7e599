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
Command line interface: validate scenario files, run task sets, run
sensitivity sweeps and compute metrics of finished runs.
"""
import argparse
import sys
import time
from collections import defaultdict
from pathlib import Path
from vermouth.log_helpers import StyleAdapter, get_logger
import vbpsim
from .config_parser import RunConfig, config_to_dict, load_run_config
from .data_library import load_scenario_source, resolve_scenario_source
from .evaluation import (PROFIT_COLUMNS, METRIC_COLUMNS, SWEEP_COLUMNS, bid_ceiling_by_type,
                         compute_metrics, read_reference, sweep)
from .export import find_runs, read_run, write_csv
from .llm_agent import constraint_stats, training_records
from .logging import set_verbosity
from .scenario import (OVERRIDE_TARGETS, ScenarioFormatError, TaskSpecError, load_scenarios,
                       validate_scenario)
from .workflow import TaskRunner, build_task_set

LOGGER = StyleAdapter(get_logger(__name__))

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2

CONSTRAINT_COLUMNS = ("batch", "drug_id", "setting", "records", "below_cost",
                      "above_ceiling", "below_pct", "above_pct", "fallbacks")


def parse_multipliers(text):
    """
    Parse a comma separated list of positive numbers.
    """
    values = [token.strip() for token in text.split(",") if token.strip()]
    if not values:
        raise argparse.ArgumentTypeError("at least one multiplier is required")
    try:
        multipliers = [float(value) for value in values]
    except ValueError as error:
        raise argparse.ArgumentTypeError(str(error)) from error
    if any(value <= 0 for value in multipliers):
        raise argparse.ArgumentTypeError("multipliers must be positive")
    return multipliers


def _csv_list(text):
    return [token.strip() for token in text.split(",") if token.strip()]


def _load_config(args):
    config = load_run_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.out is not None:
        overrides["output"] = args.out
    if args.workers is not None:
        if args.workers < 1:
            raise argparse.ArgumentTypeError("--workers must be at least 1")
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    return config._replace(**overrides)


def cmd_validate(args):
    """
    Check every scenario of a file and list the warnings.
    """
    path = resolve_scenario_source(args.scenarios)
    scenarios = load_scenarios(path)
    n_warnings = 0
    for scenario in scenarios:
        warnings = validate_scenario(scenario)
        n_warnings += len(warnings)
        status = "ok" if not warnings else "{} warning(s)".format(len(warnings))
        print("{:<24} firms {:>3}  x {:>2}  {}".format(scenario.drug_id, len(scenario.firms),
                                                    scenario.x, status))
    print("{} scenario(s) valid, {} warning(s)".format(len(scenarios), n_warnings))
    return EXIT_OK


def _write_constraint_stats(output, outcomes):
    groups = defaultdict(list)
    for outcome in outcomes:
        if outcome.result is None or outcome.task.algorithm != "llm":
            continue
        groups[outcome.task.batch_id].append(outcome)
    for batch, items in groups.items():
        rows, everything = [], []
        for outcome in items:
            everything.extend(training_records(outcome.result.transcripts))
            row = {"batch": batch, "drug_id": outcome.task.scenario_ref,
                   "setting": outcome.task.setting}
            row.update(outcome.result.constraint_stats)
            rows.append(row)
        total = {"batch": batch, "drug_id": "ALL", "setting": "ALL"}
        total.update(constraint_stats(everything))
        rows.append(total)
        write_csv(Path(output, batch, "constraint_stats.csv"), CONSTRAINT_COLUMNS, rows)


def cmd_run(args):
    """
    Build the task set of the configuration, run it and summarise.
    """
    config = _load_config(args)
    LOGGER.info("loading scenarios from {}", config.scenarios, type="step")
    scenarios = load_scenario_source(config.scenarios, config.cwdir)
    tasks = build_task_set(scenarios, config.algorithms, config.episodes, config.timesteps,
                           config.seed, batch=config.batch, drugs=config.drugs,
                           sensitivity=config.sensitivity, eval_episodes=config.eval_episodes,
                           llm_episodes=config.llm_episodes)
    runner = TaskRunner({scenario.drug_id: scenario for scenario in scenarios},
                        config.settings, output=config.output, trajectory=config.trajectory,
                        checkpoints=config.checkpoints, eval_explore=config.eval_explore,
                        config_echo=config_to_dict(config))
    start = time.perf_counter()
    outcomes = runner.run_tasks(tasks, config.workers)
    wall_time = time.perf_counter() - start
    Path(config.output).mkdir(parents=True, exist_ok=True)
    _write_constraint_stats(config.output, outcomes)

    failed = [outcome for outcome in outcomes if outcome.error]
    print("{:<20} {:<10} {:<16} {:>8} {:>10}".format("drug", "algorithm", "setting",
                                                    "episodes", "status"))
    for outcome in outcomes:
        task = outcome.task
        print("{:<20} {:<10} {:<16} {:>8} {:>10}".format(task.scenario_ref, task.algorithm,
                                                        task.setting, task.episodes,
                                                        "FAILED" if outcome.error else "ok"))
    print("tasks {}  failed {}  episodes {}  wall time {:.1f} s".format(
        len(outcomes), len(failed), sum(outcome.task.episodes for outcome in outcomes), wall_time))
    return EXIT_DOMAIN if failed else EXIT_OK


def cmd_sweep(args):
    """
    Sweep one sensitivity target for every selected drug and algorithm.
    """
    config = _load_config(args)
    scenarios = load_scenario_source(config.scenarios, config.cwdir)
    by_id = {scenario.drug_id: scenario for scenario in scenarios}
    drugs = args.drugs or list(config.drugs) or list(by_id)
    unknown = [drug for drug in drugs if drug not in by_id]
    if unknown:
        raise TaskSpecError("Unknown drug(s): {}".format(", ".join(unknown)))
    algorithms = args.algorithms or list(config.algorithms)
    seeds = args.seeds or list(config.sweep_seeds)

    rows = []
    for drug in drugs:
        for algorithm in algorithms:
            LOGGER.info("sweeping {} of {} with {}", args.target, drug, algorithm, type="step")
            curve = sweep(by_id[drug], algorithm, args.target, args.multipliers, seeds,
                          config.episodes, config.timesteps, config.settings,
                          eval_episodes=config.eval_episodes, workers=config.workers,
                          output=Path(config.output, config.batch, "sweeps"))
            for row in curve:
                row.update({"drug_id": drug, "algorithm": algorithm})
                rows.append(row)
    path = Path(config.output, config.batch, "sweep_{}.csv".format(args.target))
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(path, ("drug_id", "algorithm") + SWEEP_COLUMNS, rows)
    print("wrote {} rows to {}".format(len(rows), path))
    return EXIT_OK


def cmd_metrics(args):
    """
    Metrics of every task directory below the run directory.
    """
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError("Run directory {} does not exist.".format(run_dir))
    runs = [read_run(directory) for directory in find_runs(run_dir)]
    if not runs:
        raise FileNotFoundError("No finished tasks found below {}.".format(run_dir))
    reference = read_reference(args.reference) if args.reference else None
    rows = compute_metrics(runs, reference)
    columns = ("drug_id", "algorithm", "setting")
    columns += (PROFIT_COLUMNS + METRIC_COLUMNS) if reference is not None else PROFIT_COLUMNS
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "metrics.csv", columns, rows)
    write_csv(out / "bid_ceiling.csv", ("algorithm", "firm_type", "mean_bid_ceiling_ratio",
                                        "n_firms"), bid_ceiling_by_type(runs))
    print("wrote metrics of {} task(s) to {}".format(len(runs), out / "metrics.csv"))
    return EXIT_OK


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared_group = shared.add_argument_group('Shared options')
    shared_group.add_argument('--config', dest='config', type=Path, default=None,
                              help='run configuration file')
    shared_group.add_argument('--out', dest='out', type=str, default=None,
                              help='output directory')
    shared_group.add_argument('--workers', dest='workers', type=int, default=None,
                              help='number of worker processes')
    shared_group.add_argument('--seed', dest='seed', type=int, default=None,
                              help='base seed')
    shared_group.add_argument('-v', '--verbose', dest='verbose', action='count', default=0,
                              help='enable debug logging output; can be given more than once')

    parser = argparse.ArgumentParser(prog='vbpsim',
                                     description='simulate volume-based drug procurement tenders',
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument('-V', '--version', action='version',
                        version='%(prog)s ' + vbpsim.__version__)
    subparsers = parser.add_subparsers(title='subcommands', dest='command')
    subparsers.required = True

    validate = subparsers.add_parser('validate', parents=[shared], help='check a scenario file')
    validate.add_argument('scenarios', help='scenario file or bundled library name')
    validate.set_defaults(func=cmd_validate)

    run = subparsers.add_parser('run', parents=[shared], help='run the task set of a configuration')
    run.set_defaults(func=cmd_run)

    sweep_parser = subparsers.add_parser('sweep', parents=[shared], help='run a sensitivity sweep')
    sweep_parser.add_argument('--target', dest='target', required=True, choices=OVERRIDE_TARGETS,
                              help='parameter to scale')
    sweep_parser.add_argument('--multipliers', dest='multipliers', required=True,
                              type=parse_multipliers, help='comma separated multipliers')
    sweep_parser.add_argument('--algorithms', dest='algorithms', type=_csv_list, default=None,
                              help='comma separated algorithms; default from the configuration')
    sweep_parser.add_argument('--drugs', dest='drugs', type=_csv_list, default=None,
                              help='comma separated drug ids; default all')
    sweep_parser.add_argument('--seeds', dest='seeds', type=lambda text: [int(t) for t in _csv_list(text)],
                              default=None, help='comma separated seeds; default sweep_seeds')
    sweep_parser.set_defaults(func=cmd_sweep)

    metrics = subparsers.add_parser('metrics', parents=[shared], help='metrics of a finished run')
    metrics.add_argument('run_dir', help='output directory of a run')
    metrics.add_argument('--reference', dest='reference', default=None,
                         help='CSV with drug_id, firm_id, actual_price, actual_winner')
    metrics.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    """
    Entry point; returns the exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return EXIT_OK if error.code in (0, None) else EXIT_IO

    set_verbosity(args.verbose)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as error:
        LOGGER.error("{}", error)
        return EXIT_IO
    except ScenarioFormatError as error:
        LOGGER.error("{}", error)
        return EXIT_DOMAIN
    except OSError as error:
        LOGGER.error("{}", error)
        return EXIT_IO
    except (ValueError, ArithmeticError, RuntimeError) as error:
        LOGGER.error("{}", error)
        return EXIT_DOMAIN


if __name__ == '__main__':
    sys.exit(main())
