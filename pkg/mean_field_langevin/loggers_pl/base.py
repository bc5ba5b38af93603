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
"""Run loggers: an abstract interface and a collection fanning out to several."""

from abc import ABC, abstractmethod
from typing import Any, Dict, Iterable, List, Mapping, Optional

import numpy as np


class ExperimentLogger(ABC):
    """Receives the resolved configuration and the summary numbers of a run."""

    @property
    @abstractmethod
    def experiment(self) -> Any:
        """The object doing the actual writing."""

    @staticmethod
    def _flatten_dict(params: Mapping[Any, Any], delimiter: str = "/") -> Dict[str, Any]:
        """``{'exit': {'mean': 2.0}} -> {'exit/mean': 2.0}``."""
        flat = {}
        for key, value in params.items():
            if isinstance(value, Mapping):
                nested = ExperimentLogger._flatten_dict(value, delimiter)
                for inner_key, inner_value in nested.items():
                    flat[f"{key}{delimiter}{inner_key}"] = inner_value
            else:
                flat[str(key)] = value
        return flat

    @staticmethod
    def _sanitize_params(params: Dict[str, Any]) -> Dict[str, Any]:
        """NumPy scalars become Python scalars; anything non-scalar a string."""
        clean = {}
        for key, value in params.items():
            if isinstance(value, np.generic):
                value = value.item()
            if value is not None and not isinstance(value, (bool, int, float, str)):
                value = str(value)
            clean[key] = value
        return clean

    @abstractmethod
    def log_hyperparams(self, params: Mapping[str, Any]) -> None:
        """Record the resolved configuration."""

    @abstractmethod
    def log_metrics(self, metrics: Mapping[str, Any], step: Optional[int] = None) -> None:
        """Record summary numbers at an optional step."""

    def save(self) -> None:
        """Flush to disk."""

    def finalize(self, status: str) -> None:
        """Called once at the end of a run with 'success' or 'failed'."""
        del status
        self.save()


class LoggerCollection(ExperimentLogger):
    """Forwards every call to each logger of `logger_iterable` in turn."""

    def __init__(self, logger_iterable: Iterable[ExperimentLogger]):
        self._loggers = list(logger_iterable)

    def __getitem__(self, index: int) -> ExperimentLogger:
        return self._loggers[index]

    def __len__(self) -> int:
        return len(self._loggers)

    @property
    def experiment(self) -> List[Any]:
        return [logger.experiment for logger in self._loggers]

    def log_hyperparams(self, params: Mapping[str, Any]) -> None:
        for logger in self._loggers:
            logger.log_hyperparams(params)

    def log_metrics(self, metrics: Mapping[str, Any], step: Optional[int] = None) -> None:
        for logger in self._loggers:
            logger.log_metrics(metrics, step)

    def save(self) -> None:
        for logger in self._loggers:
            logger.save()

    def finalize(self, status: str) -> None:
        for logger in self._loggers:
            logger.finalize(status)
