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

"""Shared custom defined types used in more than one source file."""
import math
from typing import Any, Callable, Dict, Mapping, NamedTuple, Optional, Tuple

import numpy as np

Array = Any
RandomKey = Array
ConfigLike = Any
RealFn = Callable[[Any], Any]
QuantileFn = Callable[[Array], Array]
DensityFn = Callable[[Array], Array]

DOUBLE_WELL = "double_well"
EVEN_POLYNOMIAL = "even_polynomial"


class PotentialSpec(NamedTuple):
    """Confining potential V.

    For `even_polynomial`, coefficients[k] multiplies x^(2k+2), so (c1, c2)
    means c1 x^2 + c2 x^4. `double_well` ignores coefficients. Odd
    coefficients (x, x^3, ...) are accepted only so validation can reject them.
    """

    kind: str = DOUBLE_WELL
    coefficients: Tuple[float, ...] = ()
    odd_coefficients: Tuple[float, ...] = ()


class ModelParams(NamedTuple):
    sigma: float
    kappa: float = 1.0
    potential: PotentialSpec = PotentialSpec()


class ValidationReport(NamedTuple):
    failures: Tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


class NuMoments(NamedTuple):
    """Moments of the tilted measure nu_m.

    The normalisation is stored as a logarithm; `z` overflows or underflows
    for large tilts.
    """

    m: float
    log_z: float
    mean: float
    variance: float
    truncation_radius: float
    estimated_error: float
    num_panels: int

    @property
    def z(self) -> float:
        return math.exp(self.log_z)


class FixedPoint(NamedTuple):
    m: float
    f_prime_at_m: float

    @property
    def stable(self) -> bool:
        return self.f_prime_at_m < 1.0


class FixedPointReport(NamedTuple):
    sigma: float
    roots: Tuple[FixedPoint, ...]
    iterations_used: Mapping[float, int]
    tolerance: float

    @property
    def locations(self) -> np.ndarray:
        return np.array([root.m for root in self.roots])


class PhaseRow(NamedTuple):
    sigma: float
    m_plus: float
    m_minus: float
    status: str


class ModifierPlan(NamedTuple):
    a: float
    m_star: float
    # Smallest fixed point of f; there is none below it.
    m_minus: float
    epsilon: float
    a_prime: float
    a_double_prime: float
    kappa: float
    # "lower" is D = [a, inf); "upper" is D = (-inf, b] solved by reflection.
    side: str = "lower"


class RFunction(NamedTuple):
    """The increasing C^2 map r and its band parameters."""

    r: RealFn
    r_prime: RealFn
    r_inverse: RealFn
    slope_s: float
    ramp_width: float
    band: Tuple[float, float]


class ModifiedDrift(NamedTuple):
    plan: ModifierPlan
    r: RealFn
    r_prime: RealFn
    r_inverse: RealFn
    h_prime: RealFn
    h: RealFn
    slope_s: float
    # Tabulation on the knot grid; the simulator interpolates these in jit.
    knots: np.ndarray
    h_prime_knots: np.ndarray
    h_knots: np.ndarray


class CoercivityReport(NamedTuple):
    theta_grid: np.ndarray
    w_prime_values: np.ndarray
    eta_measured: float
    unique_critical_point: bool
    f_tilde_fixed_points: Tuple[float, ...]
    modified_fixed_points: Tuple[float, ...]
    w_prime_at_m_star: float
    r_properties: Dict[str, bool]

    @property
    def valid(self) -> bool:
        return (
            self.eta_measured > 0.0
            and self.unique_critical_point
            and len(self.f_tilde_fixed_points) == 1
            and all(self.r_properties.values())
        )


class InitSpec(NamedTuple):
    """Initial law of the particles: gaussian, point or from_file."""

    kind: str = "gaussian"
    mean: float = 1.0
    variance: float = 0.25
    x: float = 0.0
    path: Optional[str] = None


class SimConfig(NamedTuple):
    params: ModelParams
    n_particles: int
    dt: float
    horizon: float
    seed: int
    init: InitSpec = InitSpec()
    # None integrates the original system, otherwise the modified one.
    drift: Optional[ModifiedDrift] = None
    record_every: int = 100
    record_particles: bool = False
    # -1 negates every Gaussian draw of the stream (mirror runs).
    noise_sign: float = 1.0

    @property
    def drift_mode(self) -> str:
        return "original" if self.drift is None else "modified"

    @property
    def num_steps(self) -> int:
        return int(round(self.horizon / self.dt))


class TrajectoryRecord(NamedTuple):
    times: np.ndarray
    barycenter: np.ndarray
    moment4: np.ndarray
    snapshots: Optional[np.ndarray] = None


class ExitOutcome(NamedTuple):
    exit_time: float
    exited: bool
    replica_index: int
    seed_stream: int
    # Set when the replica blew up; exit_time is then the failure time.
    failure: Optional[str] = None


class ExitTimeReport(NamedTuple):
    n_total: int
    n_censored: int
    n_failed: int
    mean_exit: Optional[float]
    ks_distance: Optional[float]
    mean_ci_halfwidth: Optional[float]
    # Set when censored replicas were dropped: mean_exit is then biased low.
    censoring_caveat: bool


class RunManifest(NamedTuple):
    command: str
    config_digest: str
    seed: int
    tool_version: str
    output_paths: Tuple[str, ...]
