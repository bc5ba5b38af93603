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

"""Tests for mean_field_langevin.fixedpoint."""

from absl.testing import absltest
from absl.testing import parameterized
from mean_field_langevin import errors
from mean_field_langevin import fixedpoint
from mean_field_langevin import quadrature
import mean_field_langevin.mfl_types as tp
import numpy as np
from scipy import special

# f'(0) = 1 for the double well at sigma = 2 Gamma(3/4) / Gamma(1/4).
SIGMA_C = 2.0 * special.gamma(0.75) / special.gamma(0.25)


class FixedPointTest(parameterized.TestCase):
    @parameterized.parameters(0.1, 0.3, 0.5, 0.6)
    def test_three_roots_below_critical(self, sigma):
        params = tp.ModelParams(sigma=sigma)
        report = fixedpoint.find_all_fixed_points(params)
        self.assertLen(report.roots, 3)
        m_minus, origin, m_plus = report.roots
        self.assertLess(abs(origin.m), 1e-8)
        self.assertGreater(origin.f_prime_at_m, 1.0)
        self.assertFalse(origin.stable)
        self.assertTrue(m_plus.stable and m_minus.stable)
        self.assertLess(m_plus.f_prime_at_m, 1.0)
        self.assertAlmostEqual(m_plus.m, -m_minus.m, delta=1e-8)
        for root in report.roots:
            self.assertLess(
                abs(quadrature.f_of_m(params, root.m) - root.m), 1e-9
            )

    @parameterized.parameters(0.7, 0.8, 1.0)
    def test_one_root_above_critical(self, sigma):
        report = fixedpoint.find_all_fixed_points(tp.ModelParams(sigma=sigma))
        self.assertLen(report.roots, 1)
        self.assertLess(abs(report.roots[0].m), 1e-4)
        self.assertTrue(report.roots[0].stable)

    def test_grid_too_coarse(self):
        with self.assertRaises(errors.ConfigError):
            fixedpoint.find_all_fixed_points(tp.ModelParams(sigma=0.5), grid_n=10)

    def test_iteration_reaches_stable_branch(self):
        params = tp.ModelParams(sigma=0.5)
        m, iterations = fixedpoint.iterate_to_fixed_point(params, 1.0)
        _, m_plus = fixedpoint.stable_branches(params)
        self.assertGreater(iterations, 0)
        self.assertAlmostEqual(m, m_plus, delta=1e-4)

    def test_iteration_budget(self):
        with self.assertRaises(errors.NoConvergence):
            fixedpoint.iterate_to_fixed_point(tp.ModelParams(sigma=0.8), 1.0, max_iter=2)

    @parameterized.parameters(-1.2, 0.0, 0.3, 0.99, 2.0)
    def test_f_inverse(self, y):
        params = tp.ModelParams(sigma=0.5)
        m = fixedpoint.f_inverse(params, y)
        self.assertAlmostEqual(quadrature.f_of_m(params, m), y, delta=1e-9)

    def test_f_inverse_inverts_f(self):
        params = tp.ModelParams(sigma=0.5)
        for m in np.linspace(-3.0, 3.0, 41):
            y = quadrature.f_of_m(params, m)
            self.assertAlmostEqual(fixedpoint.f_inverse(params, y), m, delta=1e-7)

    def test_f_inverse_at_large_values(self):
        params = tp.ModelParams(sigma=0.5)
        m = fixedpoint.f_inverse(params, 10.0)
        self.assertAlmostEqual(m, 1000.0, delta=1.0)
        self.assertAlmostEqual(quadrature.f_of_m(params, m), 10.0, delta=1e-8)

    def test_f_inverse_without_bracket(self):
        with self.assertRaises(errors.BracketNotFound):
            fixedpoint.f_inverse(tp.ModelParams(sigma=0.5), 150.0)

    def test_cold_phase_diagram_row(self):
        (row,) = fixedpoint.phase_diagram(tp.ModelParams(sigma=0.5), [0.1])
        self.assertEqual(row.status, "ok")
        self.assertBetween(row.m_plus, 0.9, 1.1)
        self.assertAlmostEqual(row.m_minus, -row.m_plus, delta=1e-6)

    def test_critical_sigma(self):
        sigma_c = fixedpoint.critical_sigma(tp.ModelParams(sigma=0.5))
        self.assertAlmostEqual(sigma_c, SIGMA_C, delta=2e-3)
        self.assertBetween(sigma_c, 0.67, 0.69)

    def test_critical_sigma_needs_bracket(self):
        with self.assertRaises(errors.PredicateNotBracketed):
            fixedpoint.critical_sigma(tp.ModelParams(sigma=0.5), 0.8, 1.0)

    def test_phase_diagram(self):
        sigma_grid = [0.3, 0.5, 0.6, 0.8, 1.0]
        rows = fixedpoint.phase_diagram(
            tp.ModelParams(sigma=0.5), sigma_grid, threads=2
        )
        self.assertEqual([row.sigma for row in rows], sigma_grid)
        self.assertTrue(all(row.status == "ok" for row in rows))
        m_plus = np.array([row.m_plus for row in rows])
        m_minus = np.array([row.m_minus for row in rows])
        np.testing.assert_allclose(m_plus, -m_minus, atol=1e-6)
        self.assertTrue(np.all(m_plus[:3] > 0.1))
        self.assertTrue(np.all(np.abs(m_plus[3:]) < 1e-4))
        self.assertTrue(np.all(np.diff(m_plus) <= 0.0))

    def test_phase_diagram_grid_order(self):
        with self.assertRaises(errors.ConfigError):
            fixedpoint.phase_diagram(tp.ModelParams(sigma=0.5), [0.5, 0.5, 0.6])

    def test_stable_branches_above_critical(self):
        m_minus, m_plus = fixedpoint.stable_branches(tp.ModelParams(sigma=0.9))
        self.assertLess(abs(m_minus), 1e-8)
        self.assertLess(abs(m_plus), 1e-8)


if __name__ == "__main__":
    absltest.main()
