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

"""Confining potentials and model parameters.

Potentials are even polynomials evaluated by Horner's rule in y = x^2, so the
same functions accept Python floats, NumPy arrays and traced JAX arrays.
"""

import math
from typing import Tuple

import mean_field_langevin.mfl_types as tp

Array = tp.Array
ModelParams = tp.ModelParams
PotentialSpec = tp.PotentialSpec
ValidationReport = tp.ValidationReport

# x^4/4 - x^2/2.
DOUBLE_WELL_COEFFICIENTS = (-0.5, 0.25)
KNOWN_KINDS = (tp.DOUBLE_WELL, tp.EVEN_POLYNOMIAL)


def even_coefficients(spec: PotentialSpec) -> Tuple[float, ...]:
    """Coefficients of x^2, x^4, ... with trailing zeros removed."""
    if spec.kind == tp.DOUBLE_WELL:
        return DOUBLE_WELL_COEFFICIENTS
    coefficients = tuple(float(c) for c in spec.coefficients)
    while coefficients and coefficients[-1] == 0.0:
        coefficients = coefficients[:-1]
    return coefficients


def potential_value(spec: PotentialSpec, x: Array) -> Array:
    """Returns V(x)."""
    coefficients = even_coefficients(spec)
    if not coefficients:
        return 0.0 * x
    y = x * x
    acc = coefficients[-1]
    for c in reversed(coefficients[:-1]):
        acc = c + y * acc
    return y * acc


def potential_grad(spec: PotentialSpec, x: Array) -> Array:
    """Returns V'(x); for the double well this is x^3 - x."""
    coefficients = even_coefficients(spec)
    if not coefficients:
        return 0.0 * x
    # d/dx c_k x^(2k) = 2k c_k x^(2k-1) = x * (2k c_k) y^(k-1).
    derivative = [2.0 * (k + 1) * c for k, c in enumerate(coefficients)]
    y = x * x
    acc = derivative[-1]
    for c in reversed(derivative[:-1]):
        acc = c + y * acc
    return x * acc


def validate(params: ModelParams) -> ValidationReport:
    """Checks the structural conditions that make nu_m integrable.

    Args:
      params: model parameters to check.

    Returns:
      A report whose `failures` lists every violated condition; empty when ok.
    """
    failures = []
    if not _positive_finite(params.sigma):
        failures.append("sigma must be positive")
    if not _positive_finite(params.kappa):
        failures.append("kappa must be positive")
    spec = params.potential
    if spec.kind not in KNOWN_KINDS:
        failures.append(
            f"potential.kind must be one of {', '.join(KNOWN_KINDS)}, got {spec.kind!r}"
        )
        return ValidationReport(tuple(failures))
    if spec.kind == tp.EVEN_POLYNOMIAL:
        if any(float(c) != 0.0 for c in spec.odd_coefficients):
            failures.append("odd coefficients must vanish: V must be even")
        if not all(math.isfinite(float(c)) for c in spec.coefficients):
            failures.append("potential.coefficients must be finite")
            return ValidationReport(tuple(failures))
        coefficients = even_coefficients(spec)
        if len(coefficients) < 2:
            failures.append("degree must be at least 4")
        elif coefficients[-1] <= 0.0:
            failures.append("leading coefficient must be positive")
    return ValidationReport(tuple(failures))


def _positive_finite(value) -> bool:
    try:
        value = float(value)
    except (TypeError, ValueError):
        return False
    return math.isfinite(value) and value > 0.0
