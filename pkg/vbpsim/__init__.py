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

import pbr.version

try:
    __version__ = pbr.version.VersionInfo('vbpsim').release_string()
except Exception:  # pylint: disable=broad-except
    # running from a source tree that was never installed
    __version__ = 'unknown'

# Find the data directory once.
try:
    from importlib.resources import files, as_file
    import atexit
    from contextlib import ExitStack
except ImportError:
    from pathlib import Path
    DATA_PATH = Path(__file__).parent / 'data'
    TEST_DATA = Path(__file__).parent / 'tests/test_data'
    del Path
else:
    ref_data = files('vbpsim') / 'data'
    ref_test = files('vbpsim') / 'tests'/ 'test_data'
    file_manager = ExitStack()
    atexit.register(file_manager.close)
    DATA_PATH = file_manager.enter_context(as_file(ref_data))
    TEST_DATA = file_manager.enter_context(as_file(ref_test))

    del files, as_file, atexit, ExitStack

del pbr

import functools
from .src.logging import LOGGER


def _numba_jit():
    """
    The jit decorator of numba in nopython mode, or an identity decorator
    when numba is not installed.
    """
    try:
        from numba import jit as numba_jit
    except ImportError:
        LOGGER.info("numba not found; advantage estimation runs in plain numpy.",
                    type="general")
        return lambda func: func
    return functools.partial(numba_jit, nopython=True, cache=True)


# the GAE kernel is jitted when numba is installed
jit = _numba_jit()

# high level API
from .src.scenario import load_scenarios, dump_scenarios, apply_overrides, sample_cost
from .src.market_env import ProcurementEnv, clear_market, decode_action, profit
from .src.workflow import run_task, build_task_set
from .src.evaluation import sweep
