# Copyright The PyTorch Lightning team.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
CSV logger
----------

Writes the resolved configuration of a run to ``hparams.yaml`` and its summary
numbers to ``metrics.csv`` as ``step,metric,value`` rows, closed by a
``status`` row when the run ends.
"""
import os
from typing import Any, Dict, List, Mapping, Optional, Tuple

from absl import logging
from mean_field_langevin import errors
from mean_field_langevin import serialize

from .base import ExperimentLogger
from .utilities import save_hparams_to_yaml

HPARAMS_FILE = "hparams.yaml"
METRICS_FILE = "metrics.csv"
METRICS_HEADER = ("step", "metric", "value")


class RunRecord:
    """Configuration and metric rows of one run, held until `save`."""

    def __init__(self, log_dir: str) -> None:
        if os.path.isdir(log_dir) and os.listdir(log_dir):
            logging.warning("Run log directory %s is not empty; overwriting.", log_dir)
        try:
            os.makedirs(log_dir, exist_ok=True)
        except OSError as error:
            raise errors.FileError(
                f"Cannot create run log directory {log_dir}: {error}"
            ) from error
        self.log_dir = log_dir
        self.hparams: Dict[str, Any] = {}
        self.rows: List[Tuple[int, str, Any]] = []

    def add(self, metrics: Mapping[str, Any], step: int) -> None:
        for name in sorted(metrics):
            self.rows.append((step, name, metrics[name]))

    def save(self) -> None:
        path = os.path.join(self.log_dir, HPARAMS_FILE)
        try:
            save_hparams_to_yaml(path, self.hparams)
        except OSError as error:
            raise errors.FileError(f"Cannot write {path}: {error}") from error
        serialize.write_rows(
            os.path.join(self.log_dir, METRICS_FILE), METRICS_HEADER, self.rows
        )


class CSVLogger(ExperimentLogger):
    r"""
    Log a run to the local file system in yaml and CSV format.

    Logs are saved to ``os.path.join(save_dir, name)``.

    Args:
        save_dir: Save directory
        name: Optional subdirectory; empty writes straight into save_dir.
        prefix: Group name put in front of every metric as ``prefix/metric``.
    """

    def __init__(self, save_dir: str, name: Optional[str] = "", prefix: str = ""):
        self.log_dir = os.path.join(save_dir, name) if name else save_dir
        self._prefix = prefix
        self._record: Optional[RunRecord] = None

    @property
    def experiment(self) -> RunRecord:
        if self._record is None:
            self._record = RunRecord(self.log_dir)
        return self._record

    def _last_step(self) -> int:
        rows = self.experiment.rows
        return rows[-1][0] if rows else 0

    def log_hyperparams(self, params: Mapping[str, Any]) -> None:
        self.experiment.hparams.update(params)

    def log_metrics(self, metrics: Mapping[str, Any], step: Optional[int] = None) -> None:
        if self._prefix:
            metrics = {self._prefix: metrics}
        metrics = self._sanitize_params(self._flatten_dict(metrics))
        if step is None:
            step = self._last_step() + 1 if self.experiment.rows else 0
        self.experiment.add(metrics, step)

    def save(self) -> None:
        self.experiment.save()

    def finalize(self, status: str) -> None:
        self.experiment.add({"status": status}, self._last_step())
        self.save()
