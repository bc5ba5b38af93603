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

"""Integrals against the tilted measure nu_m.

nu_m(dx) is proportional to exp(-[V(x) + kappa |x - m|^2 / 2] / sigma^2) dx and
f(m) is its mean. All three integrals (mass, first and second moment about a
centre) are computed by one vectorised adaptive Simpson pass on a shared panel
set, on a window outside of which the weight is negligible.
"""

import functools
from typing import Callable, Tuple

from absl import logging
from mean_field_langevin import errors
from mean_field_langevin import potentials
import mean_field_langevin.mfl_types as tp
import numpy as np
from scipy import integrate

Array = tp.Array
ModelParams = tp.ModelParams
NuMoments = tp.NuMoments
QuantileFn = tp.QuantileFn

DEFAULT_TOL = 1e-10
INITIAL_PANELS = 128
MAX_PANELS = 2**18
# Endpoint log-weights must sit this far below the sampled maximum.
TAIL_LOG_RATIO = 36.0
# Trimming keeps every sample with log-weight above max - TRIM_LOG_RATIO.
TRIM_LOG_RATIO = 45.0
SAMPLE_POINTS = 1025
# Trimming stops once the kept region spans this many samples.
MIN_KEPT_SAMPLES = 64
MAX_TRIM_PASSES = 8
MAX_DOUBLINGS = 40

# Abscissae of the 5-point (two Simpson half panels) stencil on [0, 1].
_STENCIL = np.array([0.0, 0.25, 0.5, 0.75, 1.0])


def log_weight(params: ModelParams, m: float, x: Array) -> Array:
    """Returns -[V(x) + kappa |x - m|^2 / 2] / sigma^2."""
    energy = potentials.potential_value(params.potential, x)
    energy = energy + 0.5 * params.kappa * (x - m) ** 2
    return -energy / params.sigma**2


def relative_log_weight(
    params: ModelParams, m: float, anchor: float
) -> Callable[[Array], Array]:
    """Returns x -> log_weight(x) - log_weight(anchor), free of cancellation.

    The energy is re-expanded in powers of t = x - anchor, so at large tilts,
    where log_weight itself is of order m^(4/3), the difference keeps full
    relative precision near the mode.
    """
    even = potentials.even_coefficients(params.potential)
    coefficients = np.zeros(max(2 * len(even) + 1, 3))
    coefficients[2::2][: len(even)] = even
    # kappa |x - m|^2 / 2 without its constant term.
    coefficients[1] -= params.kappa * m
    coefficients[2] += 0.5 * params.kappa
    energy = np.polynomial.Polynomial(coefficients)
    about_anchor = energy(np.polynomial.Polynomial([anchor, 1.0]))
    about_anchor.coef[0] = 0.0
    scale = -1.0 / params.sigma**2

    def relative(x):
        return scale * about_anchor(np.asarray(x, dtype=np.float64) - anchor)

    return relative


def adaptive_simpson(
    integrand: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    tol: float,
    initial_panels: int = INITIAL_PANELS,
    max_panels: int = MAX_PANELS,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Adaptive Simpson quadrature of one or several integrands at once.

    Every panel whose Richardson error estimate |S2 - S1| / 15 exceeds its
    share tol * h / (hi - lo) for any integrand is halved; accepted panels
    contribute the extrapolated value S2 + (S2 - S1) / 15.

    Args:
      integrand: maps a 1-D array of abscissae to an array of shape
        (num_integrands, len(x)) or (len(x),).
      lo: left end of the interval.
      hi: right end of the interval.
      tol: absolute tolerance on each integral.
      initial_panels: number of uniform panels before refinement.
      max_panels: budget on accepted plus pending panels.

    Returns:
      values: integral estimates, one per integrand.
      error_bounds: summed error estimates, one per integrand.
      num_panels: number of accepted panels.
    """
    if not hi > lo:
        raise errors.BadRange(f"Empty integration interval [{lo}, {hi}].")
    edges = np.linspace(lo, hi, initial_panels + 1)
    left, right = edges[:-1], edges[1:]
    length = hi - lo
    eps = np.finfo(np.float64).eps
    values = None
    error_bounds = None
    num_accepted = 0
    while left.size:
        if num_accepted + left.size > max_panels:
            raise errors.QuadratureNonConvergence(
                f"Adaptive Simpson on [{lo:.6g}, {hi:.6g}] needs more than "
                f"{max_panels} panels for tol={tol:.3g}."
            )
        width = right - left
        nodes = left[:, None] + width[:, None] * _STENCIL[None, :]
        f = np.atleast_2d(integrand(nodes.ravel()))
        f = f.reshape(f.shape[0], left.size, _STENCIL.size)
        coarse = width / 6.0 * (f[..., 0] + 4.0 * f[..., 2] + f[..., 4])
        fine = width / 12.0 * (
            f[..., 0] + 4.0 * f[..., 1] + 2.0 * f[..., 2] + 4.0 * f[..., 3] + f[..., 4]
        )
        difference = fine - coarse
        panel_error = np.abs(difference) / 15.0
        allowed = np.maximum(tol * width / length, 64.0 * eps * np.abs(fine))
        accept = np.all(panel_error <= allowed, axis=0)
        if values is None:
            values = np.zeros(f.shape[0])
            error_bounds = np.zeros(f.shape[0])
        values += np.sum((fine + difference / 15.0)[:, accept], axis=1)
        error_bounds += np.sum(panel_error[:, accept], axis=1)
        num_accepted += int(np.sum(accept))
        refine = ~accept
        middle = 0.5 * (left[refine] + right[refine])
        left, right = (
            np.concatenate([left[refine], middle]),
            np.concatenate([middle, right[refine]]),
        )
    return values, error_bounds, num_accepted


@functools.lru_cache(maxsize=None)
def integration_window(params: ModelParams, m: float) -> Tuple[float, float]:
    """Interval outside of which the weight of nu_m is negligible."""
    centre = m / (1.0 + params.kappa)
    half_width = 8.0 * params.sigma + 4.0
    for _ in range(MAX_DOUBLINGS):
        x = np.linspace(centre - half_width, centre + half_width, SAMPLE_POINTS)
        logw = log_weight(params, m, x)
        if max(logw[0], logw[-1]) < np.max(logw) - TAIL_LOG_RATIO:
            break
        half_width *= 2.0
    else:
        raise errors.QuadratureNonConvergence(
            f"Tails of nu_m at m={m} are not negligible on any window."
        )
    lo, hi = centre - half_width, centre + half_width
    # Zoom in until the peak is resolved; at least two passes.
    for trim_pass in range(MAX_TRIM_PASSES):
        x = np.linspace(lo, hi, SAMPLE_POINTS)
        logw = log_weight(params, m, x)
        (kept,) = np.nonzero(logw >= np.max(logw) - TRIM_LOG_RATIO)
        first = max(kept[0] - 2, 0)
        last = min(kept[-1] + 2, SAMPLE_POINTS - 1)
        lo, hi = float(x[first]), float(x[last])
        if trim_pass >= 1 and kept[-1] - kept[0] >= MIN_KEPT_SAMPLES:
            break
    return lo, hi


def nu_moments(params: ModelParams, m: float, tol: float = DEFAULT_TOL) -> NuMoments:
    """Normalisation, mean and variance of nu_m.

    Args:
      params: model parameters.
      m: tilt centre.
      tol: absolute tolerance on the mean.

    Returns:
      NuMoments with consistent log_z, mean and variance.
    """
    if not tol > 0.0:
        raise errors.BadRange(f"Quadrature tolerance must be positive, got {tol}.")
    return _nu_moments(params, float(m), float(tol))


@functools.lru_cache(maxsize=65536)
def _nu_moments(params: ModelParams, m: float, tol: float) -> NuMoments:
    lo, hi = integration_window(params, m)
    x = np.linspace(lo, hi, SAMPLE_POINTS)
    logw = log_weight(params, m, x)
    anchor = float(x[np.argmax(logw)])
    shift = float(log_weight(params, m, anchor))
    relative = relative_log_weight(params, m, anchor)
    w = np.exp(relative(x))
    mass_estimate = integrate.trapezoid(w, x)
    # Moments are taken about the sampled mean to avoid cancellation.
    centre = float(integrate.trapezoid(x * w, x) / mass_estimate)

    def integrand(y):
        weight = np.exp(relative(y))
        offset = y - centre
        return np.stack([weight, offset * weight, offset * offset * weight])

    panel_tol = 0.25 * tol * mass_estimate
    (mass, first, second), bounds, num_panels = adaptive_simpson(
        integrand, lo, hi, panel_tol
    )
    delta = first / mass
    mean = centre + delta
    variance = second / mass - delta * delta
    estimated_error = (bounds[1] + abs(delta) * bounds[0]) / mass
    return NuMoments(
        m=m,
        log_z=shift + float(np.log(mass)),
        mean=float(mean),
        variance=float(variance),
        truncation_radius=max(abs(lo), abs(hi)),
        estimated_error=float(estimated_error),
        num_panels=num_panels,
    )


def f_of_m(params: ModelParams, m: float, tol: float = DEFAULT_TOL) -> float:
    """Self-consistency map f(m), the mean of nu_m."""
    return nu_moments(params, m, tol).mean


def f_prime(params: ModelParams, m: float, tol: float = DEFAULT_TOL) -> float:
    """Derivative of f: kappa Var(nu_m) / sigma^2 > 0."""
    moments = nu_moments(params, m, tol)
    return params.kappa * moments.variance / params.sigma**2


def nu_density(
    params: ModelParams, m: float, x: Array, tol: float = DEFAULT_TOL
) -> Array:
    """Normalised density of nu_m at x."""
    moments = nu_moments(params, m, tol)
    return np.exp(log_weight(params, m, np.asarray(x, dtype=np.float64)) - moments.log_z)


def gibbs_density_1particle(
    params: ModelParams, x: Array, tol: float = DEFAULT_TOL
) -> Array:
    """Invariant density exp(-V(x) / sigma^2) / Z_1 of the one-particle system.

    With a single particle the interaction vanishes, so this is nu_0 with
    kappa = 0.
    """
    return nu_density(params._replace(kappa=0.0), 0.0, x, tol)


def nu_quantile_fn(
    params: ModelParams, m: float, tol: float = DEFAULT_TOL, n_grid: int = 8193
) -> QuantileFn:
    """Quantile function of nu_m from a cumulative-trapezoid CDF."""
    lo, hi = integration_window(params, m)
    x = np.linspace(lo, hi, n_grid)
    density = nu_density(params, m, x, tol)
    cdf = integrate.cumulative_trapezoid(density, x, initial=0.0)
    cdf /= cdf[-1]
    # Keep strictly increasing CDF values; the flat tails have no mass.
    cdf, index = np.unique(cdf, return_index=True)
    support = x[index]
    logging.debug("Quantile table for m=%s has %d nodes.", m, support.size)

    def quantile(p: Array) -> Array:
        return np.interp(np.asarray(p, dtype=np.float64), cdf, support)

    return quantile
