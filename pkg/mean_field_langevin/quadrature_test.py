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

"""Tests for mean_field_langevin.quadrature."""

from absl.testing import absltest
from absl.testing import parameterized
from mean_field_langevin import errors
from mean_field_langevin import quadrature
import mean_field_langevin.mfl_types as tp
import numpy as np
from scipy import integrate


def _assert_equal_vec(tester, v1, v2, **kwargs):
    tester.assertTrue(np.allclose(v1, v2, **kwargs))


def _reference_mean(params, m, lo=-8.0, hi=8.0, num_points=2_000_001):
    """Fixed-step composite Simpson on a uniform grid."""
    x = np.linspace(lo, hi, num_points)
    logw = quadrature.log_weight(params, m, x)
    w = np.exp(logw - np.max(logw))
    return integrate.simpson(x * w, x=x) / integrate.simpson(w, x=x)


class AdaptiveSimpsonTest(parameterized.TestCase):
    def test_cubic_is_exact(self):
        values, bounds, _ = quadrature.adaptive_simpson(
            lambda x: x**3 - 2.0 * x, -1.0, 2.0, 1e-12
        )
        _assert_equal_vec(self, values[0], 3.75 - 3.0, atol=1e-13)
        self.assertLess(bounds[0], 1e-12)

    def test_several_integrands(self):
        values, _, _ = quadrature.adaptive_simpson(
            lambda x: np.stack([np.exp(x), np.cos(x)]), 0.0, 1.0, 1e-12
        )
        _assert_equal_vec(self, values, [np.e - 1.0, np.sin(1.0)], atol=1e-11)

    def test_refines_near_peak(self):
        values, _, num_panels = quadrature.adaptive_simpson(
            lambda x: np.exp(-1e4 * x**2), -1.0, 1.0, 1e-12
        )
        _assert_equal_vec(self, values[0], np.sqrt(np.pi / 1e4), atol=1e-11)
        self.assertGreater(num_panels, quadrature.INITIAL_PANELS)

    def test_empty_interval(self):
        with self.assertRaises(errors.BadRange):
            quadrature.adaptive_simpson(np.exp, 1.0, 1.0, 1e-8)

    def test_panel_budget(self):
        with self.assertRaises(errors.QuadratureNonConvergence):
            quadrature.adaptive_simpson(
                lambda x: np.sin(1000.0 * x), 0.0, 10.0, 1e-12, max_panels=256
            )


class NuMomentsTest(parameterized.TestCase):
    def setUp(self):
        super().setUp()
        self.params = tp.ModelParams(sigma=0.5)

    def test_reference_simpson(self):
        self.assertAlmostEqual(
            quadrature.f_of_m(self.params, 1.0),
            _reference_mean(self.params, 1.0),
            delta=1e-8,
        )

    def test_symmetric_tilt(self):
        self.assertLess(abs(quadrature.f_of_m(self.params, 0.0)), 1e-12)

    @parameterized.parameters(0.1, 0.7, 1.5, 3.0)
    def test_f_is_odd(self, m):
        self.assertAlmostEqual(
            quadrature.f_of_m(self.params, -m),
            -quadrature.f_of_m(self.params, m),
            delta=1e-10,
        )

    @parameterized.parameters((0.5, -0.4), (0.5, 0.9), (0.8, 0.3), (0.3, 1.2))
    def test_f_prime_matches_finite_differences(self, sigma, m):
        params = tp.ModelParams(sigma=sigma)
        step = 1e-4
        finite_difference = (
            quadrature.f_of_m(params, m + step, 1e-12)
            - quadrature.f_of_m(params, m - step, 1e-12)
        ) / (2.0 * step)
        self.assertAlmostEqual(
            quadrature.f_prime(params, m, 1e-12), finite_difference, delta=1e-5
        )

    def test_f_prime_at_origin(self):
        self.assertGreater(quadrature.f_prime(self.params, 0.0), 1.0)
        self.assertLess(quadrature.f_prime(tp.ModelParams(sigma=0.8), 0.0), 1.0)

    def test_f_is_increasing(self):
        m = np.linspace(-3.0, 3.0, 25)
        f = np.array([quadrature.f_of_m(self.params, x) for x in m])
        self.assertTrue(np.all(np.diff(f) > 0.0))

    def test_large_tilt(self):
        moments = quadrature.nu_moments(self.params, 50.0)
        self.assertTrue(np.isfinite(moments.log_z))
        self.assertGreater(moments.mean, quadrature.f_of_m(self.params, 1.0))
        self.assertGreater(moments.variance, 0.0)

    @parameterized.parameters(1e3, -1e3, 1e4)
    def test_very_large_tilt(self, m):
        # The mode solves x^3 = m for the double well with kappa = 1.
        mode = np.sign(m) * np.cbrt(abs(m))
        moments = quadrature.nu_moments(self.params, m)
        self.assertAlmostEqual(moments.mean, mode, delta=1e-3)
        self.assertBetween(moments.variance, 0.0, 1e-3)
        self.assertLess(moments.estimated_error, 1e-8)

    def test_very_large_tilt_is_odd(self):
        self.assertAlmostEqual(
            quadrature.f_of_m(self.params, -1e3),
            -quadrature.f_of_m(self.params, 1e3),
            delta=1e-8,
        )

    def test_mean_is_sublinear(self):
        self.assertLess(quadrature.f_of_m(self.params, 50.0) / 50.0, 0.1)
        m = np.concatenate([np.linspace(-50.0, -10.0, 9), np.linspace(10.0, 50.0, 9)])
        ratios = [abs(quadrature.f_of_m(self.params, v)) / (1.0 + abs(v)) for v in m]
        self.assertLess(max(ratios), 1.0)

    @parameterized.parameters((0.7, 1.0), (3.0, 2.5), (1e3, 10.0))
    def test_relative_log_weight(self, m, anchor):
        x = anchor + np.linspace(-0.2, 0.2, 9)
        expected = quadrature.log_weight(self.params, m, x) - quadrature.log_weight(
            self.params, m, anchor
        )
        relative = quadrature.relative_log_weight(self.params, m, anchor)
        _assert_equal_vec(self, relative(x), expected, rtol=1e-9, atol=1e-8)
        self.assertEqual(float(relative(anchor)), 0.0)

    def test_log_z(self):
        moments = quadrature.nu_moments(self.params, 0.7)
        x = np.linspace(-8.0, 8.0, 400_001)
        z = integrate.simpson(
            np.exp(quadrature.log_weight(self.params, 0.7, x)), x=x
        )
        self.assertAlmostEqual(moments.log_z, np.log(z), delta=1e-8)

    def test_bad_tolerance(self):
        with self.assertRaises(errors.BadRange):
            quadrature.nu_moments(self.params, 0.0, tol=0.0)

    def test_window_contains_mass(self):
        lo, hi = quadrature.integration_window(self.params, 1.0)
        self.assertLess(lo, -1.0)
        self.assertGreater(hi, 1.5)
        logw = quadrature.log_weight(self.params, 1.0, np.array([lo, hi]))
        peak = quadrature.log_weight(self.params, 1.0, 1.0)
        self.assertTrue(np.all(logw < peak - 30.0))


class DensitiesTest(parameterized.TestCase):
    def setUp(self):
        super().setUp()
        self.params = tp.ModelParams(sigma=0.5)

    def test_nu_density_is_normalised(self):
        x = np.linspace(-4.0, 4.0, 80_001)
        density = quadrature.nu_density(self.params, 0.9, x)
        self.assertAlmostEqual(integrate.trapezoid(density, x), 1.0, delta=1e-8)
        self.assertAlmostEqual(
            integrate.trapezoid(x * density, x),
            quadrature.f_of_m(self.params, 0.9),
            delta=1e-8,
        )

    def test_gibbs_density_1particle(self):
        x = np.linspace(-4.0, 4.0, 80_001)
        unnormalised = np.exp(-(x**4 / 4 - x**2 / 2) / 0.25)
        expected = unnormalised / integrate.trapezoid(unnormalised, x)
        _assert_equal_vec(
            self,
            quadrature.gibbs_density_1particle(self.params, x),
            expected,
            atol=1e-7,
        )

    def test_quantile_fn(self):
        quantile = quadrature.nu_quantile_fn(self.params, 0.0)
        p = np.linspace(0.01, 0.99, 99)
        q = quantile(p)
        self.assertTrue(np.all(np.diff(q) > 0.0))
        self.assertLess(abs(float(quantile(np.array([0.5]))[0])), 1e-3)
        _assert_equal_vec(self, q, -q[::-1], atol=1e-3)


if __name__ == "__main__":
    absltest.main()
