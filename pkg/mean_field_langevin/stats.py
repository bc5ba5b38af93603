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

"""Statistics of empirical measures and of exit-time ensembles."""

from typing import Optional, Sequence, Tuple

from mean_field_langevin import errors
from mean_field_langevin import quadrature
import mean_field_langevin.mfl_types as tp
import numpy as np
from scipy import stats as scipy_stats

Array = tp.Array
DensityFn = tp.DensityFn
QuantileFn = tp.QuantileFn
ExitOutcome = tp.ExitOutcome
ExitTimeReport = tp.ExitTimeReport

CONFIDENCE = 0.95


def _as_sample(sample: Array, name: str = "sample") -> np.ndarray:
    values = np.asarray(sample, dtype=np.float64).ravel()
    if values.size == 0:
        raise errors.EmptyInput(f"{name} is empty.")
    return values


def w2_empirical_1d(sample_a: Array, sample_b: Array) -> float:
    """Exact W2 between two equal-weight empirical measures on the line.

    In one dimension the optimal coupling pairs order statistics.
    """
    a = _as_sample(sample_a, "sample_a")
    b = _as_sample(sample_b, "sample_b")
    if a.size != b.size:
        raise errors.LengthMismatch(f"Sample sizes differ: {a.size} != {b.size}.")
    return float(np.sqrt(np.mean((np.sort(a) - np.sort(b)) ** 2)))


def w2_sample_vs_density(
    sample: Array, quantile_fn: QuantileFn, n_quantiles: Optional[int] = None
) -> float:
    """W2 between an empirical measure and a law given by its quantile function.

    W2^2 = int_0^1 |Q_emp(p) - Q(p)|^2 dp is evaluated at the midpoints of
    n_quantiles equal probability cells (default: the sample size).
    """
    values = np.sort(_as_sample(sample))
    n_quantiles = n_quantiles or values.size
    ranks = (np.arange(n_quantiles) + 0.5) / n_quantiles
    empirical = values[np.minimum((ranks * values.size).astype(np.int64), values.size - 1)]
    return float(np.sqrt(np.mean((empirical - quantile_fn(ranks)) ** 2)))


def ks_vs_unit_exponential(normalized_times: Array) -> float:
    """Sup distance between the empirical CDF and 1 - exp(-s).

    Both one-sided deviations are taken at every jump of the empirical CDF.
    """
    times = _as_sample(normalized_times, "normalized_times")
    if np.any(times <= 0.0):
        raise errors.BadRange("Normalised exit times must be positive.")
    return float(scipy_stats.kstest(times, "expon").statistic)


def exit_report(outcomes: Sequence[ExitOutcome]) -> ExitTimeReport:
    """Estimates t_N and compares tau_N / t_N with the unit exponential law.

    Censored and failed replicas are left out of the mean and the statistic.
    """
    exited = np.array([o.exit_time for o in outcomes if o.exited], dtype=np.float64)
    n_failed = sum(o.failure is not None for o in outcomes)
    n_censored = len(outcomes) - exited.size - n_failed
    mean_exit = ks_distance = halfwidth = None
    if exited.size and np.all(exited > 0.0):
        mean_exit = float(np.mean(exited))
        ks_distance = ks_vs_unit_exponential(exited / mean_exit)
        if exited.size > 1:
            z = scipy_stats.norm.ppf(0.5 + 0.5 * CONFIDENCE)
            halfwidth = float(z * np.std(exited, ddof=1) / np.sqrt(exited.size))
    elif exited.size:
        mean_exit = float(np.mean(exited))
    return ExitTimeReport(
        n_total=len(outcomes),
        n_censored=n_censored,
        n_failed=n_failed,
        mean_exit=mean_exit,
        ks_distance=ks_distance,
        mean_ci_halfwidth=halfwidth,
        censoring_caveat=n_censored > 0,
    )


def moment_k(sample: Array, k: float) -> float:
    """k-th absolute empirical moment."""
    return float(np.mean(np.abs(_as_sample(sample)) ** k))


def histogram(
    sample: Array, bins: int, value_range: Tuple[float, float]
) -> Tuple[np.ndarray, np.ndarray]:
    """Equal-width counts; bins are left-closed and the last is also right-closed.

    Returns:
      edges of shape (bins + 1,) and integer counts of shape (bins,).
    """
    values = _as_sample(sample)
    lo, hi = value_range
    if bins < 1 or not hi > lo:
        raise errors.BadRange(f"Need bins >= 1 and lo < hi, got {bins}, {value_range}.")
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return edges, counts


def bin_probabilities(
    edges: Array, density_fn: DensityFn, tol: float = 1e-12
) -> np.ndarray:
    """Mass of a density in each bin, by adaptive quadrature."""
    edges = np.asarray(edges, dtype=np.float64)
    return np.array(
        [
            quadrature.adaptive_simpson(density_fn, lo, hi, tol)[0][0]
            for lo, hi in zip(edges[:-1], edges[1:])
        ]
    )


def tv_distance(counts: Array, edges: Array, density_fn: DensityFn) -> float:
    """Half the l1 distance between binned frequencies and binned density mass."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0 or counts.sum() <= 0.0:
        raise errors.EmptyInput("Histogram has no mass.")
    if np.asarray(edges).size != counts.size + 1:
        raise errors.LengthMismatch("Need one more edge than counts.")
    frequencies = counts / counts.sum()
    return float(0.5 * np.sum(np.abs(frequencies - bin_probabilities(edges, density_fn))))
