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
from concurrent.futures import ProcessPoolExecutor
from tqdm import tqdm

class Processor:
    """
    An abstract base class for processors. Subclasses must implement a
    `run_task` method.
    """
    def run_tasks(self, tasks, workers=1):
        """
        Process every task in `tasks`, in a pool of `workers` processes
        when more than one is requested.

        Parameters
        ----------
        tasks: list[vbpsim.src.scenario.TaskSpec]
        workers: int

        Returns
        -------
        list
            the results of `run_task` in the order of `tasks`
        """
        tasks = list(tasks)
        if workers is None or workers <= 1 or len(tasks) <= 1:
            return [self.run_task(task) for task in tqdm(tasks)]

        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as executor:
            futures = [executor.submit(self.run_task, task) for task in tasks]
            for future in tqdm(futures):
                future.result()
            return [future.result() for future in futures]

    def run_task(self, task):
        """
        Process a single task. Must be implemented by subclasses.

        Parameters
        ----------
        task: vbpsim.src.scenario.TaskSpec
            The task to process.

        Returns
        -------
        object
            Whatever the subclass reports for the task.
        """
        raise NotImplementedError
