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

"""Fixed points of the self-consistency map f and the phase diagram."""

from concurrent import futures
import time
from typing import List, Optional, Sequence, Tuple

from absl import logging
from mean_field_langevin import errors
from mean_field_langevin import quadrature
import mean_field_langevin.mfl_types as tp
import numpy as np
from scipy import optimize
import tqdm

ModelParams = tp.ModelParams
FixedPoint = tp.FixedPoint
FixedPointReport = tp.FixedPointReport
PhaseRow = tp.PhaseRow

ITERATION_TOL = 1e-5
ROOT_TOL = 1e-10
DEFAULT_M_MAX = 5.0
DEFAULT_GRID_N = 128
MIN_GRID_N = 64
BRACKET_LIMIT = 1e6
# Below this the origin is indistinguishable from a nonzero fixed point.
ORIGIN_OFFSET = 1e-4


def iterate_to_fixed_point(
    params: ModelParams,
    m0: float,
    tol: float = ITERATION_TOL,
    max_iter: int = 10000,
    quad_tol: float = quadrature.DEFAULT_TOL,
) -> Tuple[float, int]:
    """Plain iteration m <- f(m) until two iterates differ by less than tol.

    Args:
      params: model parameters.
      m0: starting point.
      tol: stopping threshold on |m_k - m_{k-1}|.
      max_iter: maximum number of applications of f.
      quad_tol: quadrature tolerance for f.

    Returns:
      The first iterate m_k satisfying the stopping rule and k.
    """
    m = float(m0)
    for iteration in range(1, max_iter + 1):
        m_next = quadrature.f_of_m(params, m, quad_tol)
        if abs(m_next - m) < tol:
            return m_next, iteration
        m = m_next
    raise errors.NoConvergence(
        f"Iteration of f from m0={m0} did not settle within {max_iter} steps "
        f"at sigma={params.sigma} (f' is close to 1 near the critical temperature)."
    )


def _excess(params: ModelParams, quad_tol: float):
    def g(m):
        return quadrature.f_of_m(params, m, quad_tol) - m

    return g


def find_all_fixed_points(
    params: ModelParams,
    m_max: float = DEFAULT_M_MAX,
    grid_n: int = DEFAULT_GRID_N,
    tol: float = ROOT_TOL,
    quad_tol: float = quadrature.DEFAULT_TOL,
) -> FixedPointReport:
    """Scans g(m) = f(m) - m for sign changes and solves each bracket.

    Args:
      params: model parameters.
      m_max: the scan covers [-m_max, m_max].
      grid_n: number of scan points, at least 64.
      tol: target |g| at every returned root; roots closer than 10 tol merge.
      quad_tol: quadrature tolerance for f.

    Returns:
      A report with the sorted roots and their stability.
    """
    if grid_n < MIN_GRID_N:
        raise errors.ConfigError(
            f"grid_n must be at least {MIN_GRID_N}, got {grid_n}", "fixedpoint.grid_n"
        )
    g = _excess(params, quad_tol)
    grid = np.linspace(-m_max, m_max, grid_n)
    values = np.array([g(m) for m in grid])
    if not (values[0] > 0.0 and values[-1] < 0.0):
        logging.warning(
            "g(m) = f(m) - m has signs (%+.3g, %+.3g) at m = -/+%g; expected (+, -). "
            "Roots beyond the scan window may be missed.",
            values[0],
            values[-1],
            m_max,
        )
    locations = []
    iterations_used = {}
    xtol = min(tol, 1e-12)
    for i in range(grid_n):
        if values[i] == 0.0:
            locations.append(float(grid[i]))
            iterations_used[float(grid[i])] = 0
        elif i + 1 < grid_n and values[i] * values[i + 1] < 0.0:
            root, result = optimize.brentq(
                g, grid[i], grid[i + 1], xtol=xtol, full_output=True
            )
            locations.append(float(root))
            iterations_used[float(grid[i])] = result.iterations
    deduplicated: List[float] = []
    for m in sorted(locations):
        if not deduplicated or m - deduplicated[-1] > 10.0 * tol:
            deduplicated.append(m)
    roots = tuple(
        FixedPoint(m=m, f_prime_at_m=quadrature.f_prime(params, m, quad_tol))
        for m in deduplicated
    )
    return FixedPointReport(
        sigma=params.sigma, roots=roots, iterations_used=iterations_used, tolerance=tol
    )


def f_inverse(
    params: ModelParams,
    y: float,
    tol: float = 1e-12,
    quad_tol: float = quadrature.DEFAULT_TOL,
) -> float:
    """Solves f(m) = y by an expanding bracket and Brent's method.

    f is a strictly increasing bijection of the real line, so the bracket
    search always terminates for reasonable parameters.
    """

    def h(m):
        return quadrature.f_of_m(params, m, quad_tol) - y

    start = float(y)
    h_start = h(start)
    if h_start == 0.0:
        return start
    direction = 1.0 if h_start < 0.0 else -1.0
    step = 1.0
    inner = start
    outer = start + direction * step
    while h(outer) * h_start > 0.0:
        inner = outer
        step *= 2.0
        outer = start + direction * step
        if abs(outer) > BRACKET_LIMIT:
            raise errors.BracketNotFound(
                f"No bracket for f^-1({y}) within |m| <= {BRACKET_LIMIT:g}."
            )
    lo, hi = min(inner, outer), max(inner, outer)
    return float(optimize.brentq(h, lo, hi, xtol=1e-2 * tol))


def has_nonzero_fixed_point(
    params: ModelParams,
    m_max: float = DEFAULT_M_MAX,
    grid_n: int = DEFAULT_GRID_N,
    quad_tol: float = quadrature.DEFAULT_TOL,
) -> bool:
    """True when the largest fixed point exceeds 1e-4."""
    g = _excess(params, quad_tol)
    if g(ORIGIN_OFFSET) >= 0.0:
        return True
    grid = np.linspace(ORIGIN_OFFSET, m_max, grid_n)
    values = np.array([g(m) for m in grid])
    return bool(np.any(values[:-1] * values[1:] <= 0.0))


def critical_sigma(
    params_template: ModelParams,
    sigma_lo: float = 0.5,
    sigma_hi: float = 0.8,
    tol: float = 1e-3,
    m_max: float = DEFAULT_M_MAX,
    grid_n: int = DEFAULT_GRID_N,
    quad_tol: float = quadrature.DEFAULT_TOL,
) -> float:
    """Bisects sigma on the existence of a nonzero fixed point."""

    def predicate(sigma):
        return has_nonzero_fixed_point(
            params_template._replace(sigma=sigma), m_max, grid_n, quad_tol
        )

    if not predicate(sigma_lo) or predicate(sigma_hi):
        raise errors.PredicateNotBracketed(
            f"Need three fixed points at sigma={sigma_lo} and one at sigma={sigma_hi}."
        )
    lo, hi = float(sigma_lo), float(sigma_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            lo = mid
        else:
            hi = mid
        logging.info("critical_sigma bracket [%.6f, %.6f]", lo, hi)
    return 0.5 * (lo + hi)


def _phase_row(
    params: ModelParams, tol: float, max_iter: int, quad_tol: float
) -> PhaseRow:
    try:
        m_plus, _ = iterate_to_fixed_point(params, 1.0, tol, max_iter, quad_tol)
        m_minus, _ = iterate_to_fixed_point(params, -1.0, tol, max_iter, quad_tol)
    except errors.NoConvergence as error:
        logging.warning("sigma=%g: %s", params.sigma, error)
        return PhaseRow(params.sigma, float("nan"), float("nan"), "no_convergence")
    return PhaseRow(params.sigma, m_plus, m_minus, "ok")


def phase_diagram(
    params_template: ModelParams,
    sigma_grid: Sequence[float],
    tol: float = ITERATION_TOL,
    max_iter: int = 10000,
    threads: int = 1,
    quad_tol: float = quadrature.DEFAULT_TOL,
    progress_bar: bool = False,
) -> List[PhaseRow]:
    """Branches m_+(sigma), m_-(sigma) by iterating f from +1 and -1.

    Args:
      params_template: model parameters; sigma is replaced row by row.
      sigma_grid: increasing temperatures.
      tol: stopping threshold of the iteration.
      max_iter: iteration budget per branch.
      threads: worker threads evaluating rows.
      quad_tol: quadrature tolerance for f.
      progress_bar: show a tqdm bar.

    Returns:
      One row per sigma, in grid order; rows that stall carry a status flag.
    """
    sigma_grid = [float(s) for s in sigma_grid]
    if any(b <= a for a, b in zip(sigma_grid, sigma_grid[1:])):
        raise errors.ConfigError("sigma grid must be strictly increasing", "sigma_grid")
    start_time = time.time()
    logging.info("Phase diagram on %d temperatures.", len(sigma_grid))
    with futures.ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        jobs = [
            executor.submit(
                _phase_row,
                params_template._replace(sigma=sigma),
                tol,
                max_iter,
                quad_tol,
            )
            for sigma in sigma_grid
        ]
        rows = [
            job.result()
            for job in tqdm.tqdm(jobs, disable=not progress_bar, desc="phase diagram")
        ]
    logging.info("Phase diagram took %.2f seconds.", time.time() - start_time)
    return rows


def stable_branches(
    params: ModelParams,
    report: Optional[FixedPointReport] = None,
    quad_tol: float = quadrature.DEFAULT_TOL,
) -> Tuple[float, float]:
    """Smallest and largest stable fixed points (m_-, m_+); both 0 above sigma_c."""
    report = report or find_all_fixed_points(params, quad_tol=quad_tol)
    stable = [root.m for root in report.roots if root.stable]
    if not stable:
        raise errors.InvalidDomain(f"No stable fixed point at sigma={params.sigma}.")
    return min(stable), max(stable)
