# Copyright 2020 DeepMind Technologies Limited.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Exceptions raised by the numerical routines and the command line.

Each class carries the process exit code used by `cli.run_experiment`.
"""

from typing import Any, Optional

CONFIG_EXIT_CODE = 2
NUMERICAL_EXIT_CODE = 3
IO_EXIT_CODE = 4
VERIFICATION_EXIT_CODE = 5


class MeanFieldError(Exception):
    """Root of every error raised by this package."""

    exit_code = NUMERICAL_EXIT_CODE


class ConfigError(MeanFieldError):
    """A configuration key is missing, malformed or fails model validation."""

    exit_code = CONFIG_EXIT_CODE

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class FileError(MeanFieldError):
    """A file could not be read or written, or has the wrong content."""

    exit_code = IO_EXIT_CODE


class QuadratureNonConvergence(MeanFieldError):
    """Adaptive refinement exhausted its panel budget before reaching tol."""


class NoConvergence(MeanFieldError):
    """Fixed-point iteration exceeded max_iter."""


class BracketNotFound(MeanFieldError):
    """Expanding bracket search for f^{-1} went past the search limit."""


class PredicateNotBracketed(MeanFieldError):
    """Bisection on sigma started from a bracket with equal predicate values."""


class InvalidDomain(MeanFieldError):
    """The metastable domain does not satisfy the modifier preconditions."""

    exit_code = CONFIG_EXIT_CODE


class InfeasibleBump(MeanFieldError):
    """No slope s in (0, 1) makes the transition band satisfy r2."""


class NumericalBlowup(MeanFieldError):
    """A particle left the box |x| <= 1e6 during integration."""

    def __init__(self, time: float, message: Optional[str] = None):
        super().__init__(
            message
            or f"Particle magnitude exceeded 1e6 at t={time:.6g}; reduce dt."
        )
        self.time = time


class VerificationFailed(MeanFieldError):
    """The modified drift does not pass the coercivity verification."""

    exit_code = VERIFICATION_EXIT_CODE

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class LengthMismatch(MeanFieldError, ValueError):
    """Two samples expected to have equal size do not."""

    exit_code = CONFIG_EXIT_CODE


class EmptyInput(MeanFieldError, ValueError):
    """A statistic was requested on an empty sample."""

    exit_code = CONFIG_EXIT_CODE


class BadRange(MeanFieldError, ValueError):
    """Histogram range or bin count is invalid."""

    exit_code = CONFIG_EXIT_CODE
