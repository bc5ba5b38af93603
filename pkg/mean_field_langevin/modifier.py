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

"""Modified drift that leaves a single stationary solution.

Outside a metastable domain D = [a, inf) the barycentre drift is changed by
h'(m) so that the modified self-consistency map has a unique fixed point m_*
while the dynamics inside D are untouched. The construction goes through an
increasing map r with r(z) = z on [a', inf), unit slope below kappa m_-,
r(kappa m_-) >= a'' and 0 < r' <= 1; then

  h'(y) = r^{-1}(kappa f^{-1}(y)) - kappa f^{-1}(y),
  w'(theta) = theta / kappa - f(r(theta) / kappa).

Domains (-inf, b] are handled by reflecting x -> -x. Plans for them are stored
in reflected coordinates, while the callables of a ModifiedDrift always act in
the original coordinates.
"""

import time
from typing import Optional, Tuple

from absl import logging
from mean_field_langevin import errors
from mean_field_langevin import fixedpoint
from mean_field_langevin import quadrature
import mean_field_langevin.mfl_types as tp
import numpy as np
from scipy import interpolate
from scipy import optimize

Array = tp.Array
ModelParams = tp.ModelParams
ModifierPlan = tp.ModifierPlan
ModifiedDrift = tp.ModifiedDrift
RFunction = tp.RFunction
CoercivityReport = tp.CoercivityReport
FixedPointReport = tp.FixedPointReport

LOWER = "lower"
UPPER = "upper"
EPSILON_SCAN_STEPS = 64
MARGIN = 0.9
NUM_KNOTS = 2048
KNOT_PAD_LEFT = 5.0
KNOT_PAD_RIGHT = 1.0
CRITICAL_POINT_EXCLUSION = 1e-6


def _side_sign(plan: ModifierPlan) -> float:
    return -1.0 if plan.side == UPPER else 1.0


def plan_domain(
    params: ModelParams,
    a: float,
    tol: float = fixedpoint.ROOT_TOL,
    side: str = LOWER,
    report: Optional[FixedPointReport] = None,
    quad_tol: float = quadrature.DEFAULT_TOL,
) -> ModifierPlan:
    """Computes m_-, m_*, epsilon, a' and a'' for the domain edge a.

    Args:
      params: model parameters.
      a: edge of D; the lower edge of [a, inf) or the upper edge of (-inf, a].
      tol: root tolerance used for the fixed points and f^{-1}.
      side: "lower" or "upper".
      report: precomputed fixed points at params, if available.
      quad_tol: quadrature tolerance for f.

    Returns:
      The plan, in reflected coordinates when side is "upper".
    """
    if side not in (LOWER, UPPER):
        raise errors.InvalidDomain(
            f"Only one-sided domains are supported (side lower or upper), got {side!r}."
        )
    report = report or fixedpoint.find_all_fixed_points(
        params, tol=tol, quad_tol=quad_tol
    )
    sign = -1.0 if side == UPPER else 1.0
    # The potential is even, so the reflected problem has the reflected roots.
    roots = sorted(sign * root.m for root in report.roots)
    stable = {sign * root.m: root.stable for root in report.roots}
    edge = sign * float(a)
    if any(abs(edge - m) <= 10.0 * tol for m in roots):
        raise errors.InvalidDomain(f"The domain edge {a} is a fixed point of f.")
    below = [m for m in roots if m < edge]
    above = [m for m in roots if m > edge]
    if not below:
        raise errors.InvalidDomain(f"No fixed point of f outside the domain edge {a}.")
    if len(above) != 1 or not stable[above[0]]:
        raise errors.InvalidDomain(
            f"D must contain exactly one fixed point, and it must be stable; "
            f"found {len(above)} beyond {a} at sigma={params.sigma}."
        )
    # f has no fixed point below m_-.
    m_minus, m_star = below[0], above[0]

    def g(m):
        return quadrature.f_of_m(params, m, quad_tol) - m

    step = (edge - m_minus) / EPSILON_SCAN_STEPS
    g_edge = g(edge)
    first_crossing = EPSILON_SCAN_STEPS
    for k in range(1, EPSILON_SCAN_STEPS):
        if g(edge - k * step) * g_edge <= 0.0:
            first_crossing = k
            break
    safe_gap = (first_crossing - 1) * step
    if safe_gap <= 0.0:
        raise errors.InvalidDomain(
            f"A fixed point lies within {step:.3g} of the domain edge {a}."
        )
    epsilon = 0.5 * safe_gap
    kappa = params.kappa
    a_prime = kappa * fixedpoint.f_inverse(params, edge, tol, quad_tol)
    a_double_prime = kappa * fixedpoint.f_inverse(params, edge - epsilon, tol, quad_tol)
    if not kappa * m_minus < a_double_prime < a_prime < kappa * m_star:
        raise errors.InvalidDomain(
            "Ordering kappa m_- < a'' < a' < kappa m_* fails: "
            f"{kappa * m_minus:.6g}, {a_double_prime:.6g}, {a_prime:.6g}, "
            f"{kappa * m_star:.6g}."
        )
    plan = ModifierPlan(
        a=edge,
        m_star=m_star,
        m_minus=m_minus,
        epsilon=epsilon,
        a_prime=a_prime,
        a_double_prime=a_double_prime,
        kappa=kappa,
        side=side,
    )
    logging.info("Modifier plan: %s", plan)
    return plan


def _smoothstep(t):
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _smoothstep_integral(t):
    # Antiderivative of the smoothstep vanishing at 0; equals 1/2 at 1.
    return t**4 * (2.5 + t * (-3.0 + t))


def build_r(plan: ModifierPlan) -> RFunction:
    """Builds r' = 1 - (1 - s) B with B a quintic-smoothstep bump.

    B vanishes outside (kappa m_-, a'), rises over a ramp of width delta at
    each end and is 1 in between. The slope s makes the band integral of r'
    equal to MARGIN (a' - a''), which gives r(kappa m_-) > a''.
    """
    z0 = plan.kappa * plan.m_minus
    z1 = plan.a_prime
    band_length = z1 - z0
    budget = MARGIN * (plan.a_prime - plan.a_double_prime)
    delta = min(0.25 * band_length, 0.5 * budget)
    if not (budget > 0.0 and band_length > delta > 0.0):
        raise errors.InfeasibleBump(
            f"Band ({z0:.6g}, {z1:.6g}) cannot absorb a deficit of {budget:.6g}."
        )
    slope_s = (budget - delta) / (band_length - delta)
    if not 0.0 < slope_s < 1.0:
        raise errors.InfeasibleBump(f"Slope s={slope_s:.6g} is outside (0, 1).")
    bump_mass = band_length - delta
    drop = 1.0 - slope_s

    def bump(z):
        up = _smoothstep(np.clip((z - z0) / delta, 0.0, 1.0))
        down = _smoothstep(np.clip((z1 - z) / delta, 0.0, 1.0))
        return np.minimum(up, down)

    def bump_tail(z):
        # Integral of the bump from z to z1.
        z = np.clip(z, z0, z1)
        left = bump_mass - delta * _smoothstep_integral((z - z0) / delta)
        middle = 0.5 * delta + (z1 - delta - z)
        right = delta * _smoothstep_integral((z1 - z) / delta)
        return np.where(z < z0 + delta, left, np.where(z <= z1 - delta, middle, right))

    def r(z):
        z = np.asarray(z, dtype=np.float64)
        return np.where(z >= z1, z, z + drop * bump_tail(z))

    def r_prime(z):
        return 1.0 - drop * bump(np.asarray(z, dtype=np.float64))

    r_at_z0 = z0 + drop * bump_mass

    def r_inverse(w):
        w = np.asarray(w, dtype=np.float64)
        scalar = w.ndim == 0
        w = np.atleast_1d(w)
        out = np.where(w >= z1, w, w - drop * bump_mass)
        for i in np.nonzero((w > r_at_z0) & (w < z1))[0]:
            target = w[i]
            out[i] = optimize.brentq(lambda z: r(z) - target, z0, z1, xtol=1e-15)
        return float(out[0]) if scalar else out

    return RFunction(
        r=r,
        r_prime=r_prime,
        r_inverse=r_inverse,
        slope_s=slope_s,
        ramp_width=delta,
        band=(z0, z1),
    )


def _h_prime_in_plan(
    params: ModelParams,
    plan: ModifierPlan,
    r_function: RFunction,
    y: float,
    tol: float,
    quad_tol: float,
) -> float:
    if y >= plan.a:
        return 0.0
    z0 = plan.kappa * plan.m_minus
    if y <= plan.m_minus:
        return float(z0 - r_function.r(z0))
    z = plan.kappa * fixedpoint.f_inverse(params, y, tol, quad_tol)
    if z >= plan.a_prime:
        return 0.0
    # r(z) >= z, so h' <= 0; clip root-finding noise.
    return min(float(r_function.r_inverse(z) - z), 0.0)


def build_modified_drift(
    params: ModelParams,
    plan: ModifierPlan,
    tol: float = fixedpoint.ROOT_TOL,
    quad_tol: float = quadrature.DEFAULT_TOL,
    num_knots: int = NUM_KNOTS,
) -> ModifiedDrift:
    """Builds r and tabulates h' and h on a knot grid.

    Args:
      params: model parameters.
      plan: output of plan_domain.
      tol: tolerance of f^{-1} inside h'.
      quad_tol: quadrature tolerance for f.
      num_knots: size of the tabulation grid on [m_- - 5, a + 1].

    Returns:
      The modified drift. Tables are in plan coordinates.
    """
    start_time = time.time()
    r_function = build_r(plan)
    sign = _side_sign(plan)
    knots = np.linspace(
        plan.m_minus - KNOT_PAD_LEFT, plan.a + KNOT_PAD_RIGHT, num_knots
    )
    h_prime_knots = np.array(
        [
            _h_prime_in_plan(params, plan, r_function, y, tol, quad_tol)
            for y in knots
        ]
    )
    # h' is nondecreasing; remove quadrature-level wiggles before integrating.
    h_prime_knots = np.maximum.accumulate(h_prime_knots)
    antiderivative = interpolate.PchipInterpolator(knots, h_prime_knots).antiderivative()
    offset = antiderivative(plan.a)
    h_knots = np.where(knots >= plan.a, 0.0, antiderivative(knots) - offset)
    slope_left = h_prime_knots[0]

    def h_in_plan(y):
        y = np.asarray(y, dtype=np.float64)
        inside = antiderivative(np.clip(y, knots[0], knots[-1])) - offset
        below = h_knots[0] + slope_left * (y - knots[0])
        return np.where(y >= plan.a, 0.0, np.where(y < knots[0], below, inside))

    def h_prime(y):
        y = np.asarray(y, dtype=np.float64)
        values = [
            sign * _h_prime_in_plan(params, plan, r_function, sign * v, tol, quad_tol)
            for v in np.atleast_1d(y)
        ]
        return float(values[0]) if y.ndim == 0 else np.array(values).reshape(y.shape)

    def h(y):
        return h_in_plan(sign * np.asarray(y, dtype=np.float64))

    def r(z):
        return sign * r_function.r(sign * np.asarray(z, dtype=np.float64))

    def r_prime(z):
        return r_function.r_prime(sign * np.asarray(z, dtype=np.float64))

    def r_inverse(w):
        return sign * r_function.r_inverse(sign * np.asarray(w, dtype=np.float64))

    logging.info(
        "Built modified drift (s=%.4g, ramp=%.4g) in %.2f seconds.",
        r_function.slope_s,
        r_function.ramp_width,
        time.time() - start_time,
    )
    return ModifiedDrift(
        plan=plan,
        r=r,
        r_prime=r_prime,
        r_inverse=r_inverse,
        h_prime=h_prime,
        h=h,
        slope_s=r_function.slope_s,
        knots=knots,
        h_prime_knots=h_prime_knots,
        h_knots=h_knots,
    )


def identity_drift(plan: ModifierPlan) -> ModifiedDrift:
    """Drift with r the identity and h = 0, i.e. no modification at all."""
    def identity(z):
        return np.asarray(z, dtype=np.float64) * 1.0

    def zero(y):
        return np.asarray(y, dtype=np.float64) * 0.0

    knots = np.array([plan.a - 1.0, plan.a])
    return ModifiedDrift(
        plan=plan,
        r=identity,
        r_prime=lambda z: np.ones_like(np.asarray(z, dtype=np.float64)),
        r_inverse=identity,
        h_prime=zero,
        h=zero,
        slope_s=1.0,
        knots=knots,
        h_prime_knots=np.zeros(2),
        h_knots=np.zeros(2),
    )


def h_prime(
    params: ModelParams,
    drift: ModifiedDrift,
    y: float,
    tol: float = fixedpoint.ROOT_TOL,
    quad_tol: float = quadrature.DEFAULT_TOL,
) -> float:
    """h'(y) = r^{-1}(kappa f^{-1}(y)) - kappa f^{-1}(y); exactly 0 on D."""
    plan = drift.plan
    sign = _side_sign(plan)
    y_plan = sign * float(y)
    if y_plan >= plan.a:
        return 0.0
    z0 = plan.kappa * plan.m_minus
    if y_plan <= plan.m_minus:
        return float(sign * (z0 - sign * drift.r(sign * z0)))
    z = plan.kappa * fixedpoint.f_inverse(params, y_plan, tol, quad_tol)
    if z >= plan.a_prime:
        return 0.0
    return float(sign * min(sign * drift.r_inverse(sign * z) - z, 0.0))


def h_value(drift: ModifiedDrift, y: Array) -> Array:
    """h(y), anchored at h(m_*) = 0."""
    return drift.h(y)


def w_prime(
    params: ModelParams,
    drift: ModifiedDrift,
    theta: float,
    tol: float = quadrature.DEFAULT_TOL,
) -> float:
    """w'(theta) = theta / kappa - f(r(theta) / kappa)."""
    kappa = params.kappa
    return theta / kappa - quadrature.f_of_m(params, float(drift.r(theta)) / kappa, tol)


def f_tilde(
    params: ModelParams,
    drift: ModifiedDrift,
    m: float,
    tol: float = quadrature.DEFAULT_TOL,
) -> float:
    """Modified self-consistency map f(r(kappa m) / kappa)."""
    kappa = params.kappa
    return quadrature.f_of_m(params, float(drift.r(kappa * m)) / kappa, tol)


def modified_mean(
    params: ModelParams,
    drift: ModifiedDrift,
    m: float,
    tol: float = quadrature.DEFAULT_TOL,
) -> float:
    """Mean of exp(-[V(x) + kappa |x - m|^2 / 2 + x h'(m)] / sigma^2).

    Completing the square shows this is f(m - h'(m) / kappa).
    """
    shift = float(drift.h_prime(m)) / params.kappa
    return quadrature.f_of_m(params, m - shift, tol)


def _sign_changes(values: np.ndarray) -> np.ndarray:
    signs = np.sign(values)
    nonzero = np.nonzero(signs)[0]
    signs = signs[nonzero]
    changes = np.nonzero(signs[:-1] != signs[1:])[0]
    return np.stack([nonzero[changes], nonzero[changes + 1]], axis=-1).reshape(-1, 2)


def _roots_on_grid(fn, grid: np.ndarray, values: np.ndarray) -> Tuple[float, ...]:
    roots = [float(grid[i]) for i in np.nonzero(values == 0.0)[0]]
    for i, j in _sign_changes(values):
        if j == i + 1:
            roots.append(float(optimize.brentq(fn, grid[i], grid[j], xtol=1e-13)))
    return tuple(sorted(roots))


def check_r_properties(drift: ModifiedDrift, num_points: int = 1000) -> dict:
    """Samples the four defining properties of r in plan coordinates."""
    plan = drift.plan
    sign = _side_sign(plan)
    def r(z):
        return sign * drift.r(sign * np.asarray(z))

    def r_prime(z):
        return drift.r_prime(sign * np.asarray(z))

    z0 = plan.kappa * plan.m_minus
    above = np.linspace(plan.a_prime, plan.a_prime + 10.0, num_points)
    below = np.linspace(z0 - 10.0, z0, num_points)
    everywhere = np.linspace(z0 - 1.0, plan.a_prime + 1.0, num_points)
    r_z0 = float(r(z0))
    unit_slope = np.abs(r(below) - (r_z0 + below - z0)) <= 1e-12 * (1.0 + np.abs(below))
    slopes = r_prime(everywhere)
    return {
        "r1": bool(np.array_equal(r(above), above)),
        "r2": bool(r_z0 >= plan.a_double_prime),
        "r3": bool(np.all(unit_slope)),
        "r4": bool(np.all((slopes > 0.0) & (slopes <= 1.0))),
    }


def verify_modifier(
    params: ModelParams,
    drift: ModifiedDrift,
    grid_n: int = 400,
    half_width: float = 20.0,
    tol: float = quadrature.DEFAULT_TOL,
    raise_on_failure: bool = True,
) -> CoercivityReport:
    """Checks coercivity of w' around kappa m_* and uniqueness of fixed points.

    Args:
      params: model parameters.
      drift: the modified drift.
      grid_n: number of theta values.
      half_width: theta covers [kappa m_* - half_width, kappa m_* + half_width].
      tol: quadrature tolerance for f.
      raise_on_failure: raise VerificationFailed when the report is invalid.

    Returns:
      The coercivity report.
    """
    kappa = params.kappa
    theta_star = _side_sign(drift.plan) * kappa * drift.plan.m_star
    theta_grid = np.linspace(theta_star - half_width, theta_star + half_width, grid_n)
    w_values = np.array([w_prime(params, drift, theta, tol) for theta in theta_grid])
    offsets = theta_grid - theta_star
    away = np.abs(offsets) >= CRITICAL_POINT_EXCLUSION
    eta = float(np.min(w_values[away] / offsets[away]))
    unique_critical_point = len(_sign_changes(w_values)) == 1

    m_grid = theta_grid / kappa
    def f_tilde_fn(m):
        return f_tilde(params, drift, m, tol) - m

    # f~(m) - m = -w'(kappa m), so the scan values are reused.
    f_tilde_points = _roots_on_grid(f_tilde_fn, m_grid, -w_values)
    def modified_fn(m):
        return modified_mean(params, drift, m, tol) - m

    modified_values = np.array([modified_fn(m) for m in m_grid])
    modified_points = _roots_on_grid(modified_fn, m_grid, modified_values)

    report = CoercivityReport(
        theta_grid=theta_grid,
        w_prime_values=w_values,
        eta_measured=eta,
        unique_critical_point=unique_critical_point,
        f_tilde_fixed_points=f_tilde_points,
        modified_fixed_points=modified_points,
        w_prime_at_m_star=w_prime(params, drift, theta_star, tol),
        r_properties=check_r_properties(drift),
    )
    logging.info(
        "Coercivity: eta=%.4g, unique=%s, f~ fixed points=%s",
        eta,
        unique_critical_point,
        f_tilde_points,
    )
    if raise_on_failure and not report.valid:
        raise errors.VerificationFailed(
            f"Modified drift fails verification (eta={eta:.4g}, "
            f"sign changes of w'={len(_sign_changes(w_values))}).",
            report,
        )
    return report
