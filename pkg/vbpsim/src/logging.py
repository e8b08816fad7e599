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
Package wide logging set-up. Console output uses a pretty format for
regular messages and a detailed one (including the emitting module) for
debug messages. Warnings and errors are additionally counted so that the
command line can summarise them at the end of a run.
"""
import logging
from vermouth.log_helpers import (StyleAdapter, BipolarFormatter,
                                  CountingHandler, TypeAdapter,)

PRETTY_FORMATTER = logging.Formatter(fmt='{levelname:} - {type} - {message}',
                                     style='{')
DETAILED_FORMATTER = logging.Formatter(fmt='{levelname:} - {type} - {name} - {message}',
                                       style='{')

# index with the number of -v/--verbose flags
LOGLEVELS = {0: logging.INFO,
             1: logging.DEBUG,
             2: 5}


def _configure_package_logger(name):
    """
    Attach the console and counting handlers to the logger `name`
    and return the typed logger together with the counting handler.
    """
    typed_logger = TypeAdapter(logging.getLogger(name))
    counter = CountingHandler()
    counter.setLevel(logging.WARNING)

    console = logging.StreamHandler()
    console.setFormatter(BipolarFormatter(DETAILED_FORMATTER,
                                          PRETTY_FORMATTER,
                                          logging.DEBUG,
                                          logger=typed_logger))
    typed_logger.addHandler(console)
    typed_logger.addHandler(counter)
    return typed_logger, counter


_TYPED_LOGGER, COUNTER = _configure_package_logger('vbpsim')
LOGGER = StyleAdapter(_TYPED_LOGGER)


def set_verbosity(verbosity):
    """
    Set the package log level from the number of verbosity flags given
    on the command line. Counts beyond the most verbose level are capped.

    Returns
    -------
    int
        the log level that was set
    """
    level = LOGLEVELS[min(int(verbosity or 0), max(LOGLEVELS))]
    LOGGER.setLevel(level)
    return level


def task_label(task):
    """
    Short label identifying a task in log messages, for example
    `demo/adefovir/ippo/p_max_x1.2`.
    """
    return "/".join([task.batch_id, task.scenario_ref, task.algorithm, task.setting])
