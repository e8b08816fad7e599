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
Scenario libraries shipped in the data directory, and resolution of the
`scenarios` entry of a run configuration to a file.
"""
import os
from pathlib import Path
from vermouth.log_helpers import StyleAdapter, get_logger
from vbpsim import DATA_PATH
from .scenario import load_scenarios

LOGGER = StyleAdapter(get_logger(__name__))
LIBRARY_DIR = "scenarios"
LIBRARY_SUFFIX = ".json"


def available_libraries(data_path=DATA_PATH):
    """
    Names of the bundled scenario libraries.
    """
    directory = Path(data_path).joinpath(LIBRARY_DIR)
    return sorted(Path(file_).stem for file_ in os.listdir(directory)
                  if file_.endswith(LIBRARY_SUFFIX))


def _resolve_lib_file(name, data_path):
    path = Path(data_path).joinpath(LIBRARY_DIR, name + LIBRARY_SUFFIX)
    if path.is_file():
        return path
    return None


def resolve_scenario_source(source, cwdir=None, data_path=DATA_PATH):
    """
    Turn `source` into the path of a scenario file. Existing paths win,
    relative paths are looked up next to `cwdir` first, and anything else
    is taken as the name of a bundled library.

    Parameters
    ----------
    source: str
    cwdir: pathlib.Path
        directory of the configuration file
    data_path: pathlib.Path

    Returns
    -------
    pathlib.Path

    Raises
    ------
    IOError
        if neither a file nor a library of that name exists
    """
    candidates = [Path(source)]
    if cwdir is not None and not Path(source).is_absolute():
        candidates.insert(0, Path(cwdir).joinpath(source))
    for candidate in candidates:
        if candidate.is_file():
            return candidate

    library = _resolve_lib_file(str(source), data_path)
    if library is not None:
        LOGGER.debug("using bundled scenario library {}", source)
        return library
    msg = "Cannot find scenario file or library '{}'. Bundled libraries are: {}."
    raise IOError(msg.format(source, ", ".join(available_libraries(data_path))))


def load_scenario_source(source, cwdir=None, data_path=DATA_PATH):
    """
    Load the scenarios behind a path or library name.
    """
    return load_scenarios(resolve_scenario_source(source, cwdir, data_path))
