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

"""Tests for mean_field_langevin.modifier."""

from absl.testing import absltest
from absl.testing import parameterized
from mean_field_langevin import errors
from mean_field_langevin import fixedpoint
from mean_field_langevin import modifier
from mean_field_langevin import quadrature
import mean_field_langevin.mfl_types as tp
import numpy as np


def _assert_equal_vec(tester, v1, v2, **kwargs):
    tester.assertTrue(np.allclose(v1, v2, **kwargs))


PARAMS = tp.ModelParams(sigma=0.5)
DOMAIN_A = 0.1


class PlanTest(parameterized.TestCase):
    def test_plan_ordering(self):
        plan = modifier.plan_domain(PARAMS, DOMAIN_A)
        m_minus, m_plus = fixedpoint.stable_branches(PARAMS)
        self.assertAlmostEqual(plan.m_star, m_plus, delta=1e-8)
        self.assertAlmostEqual(plan.m_minus, m_minus, delta=1e-8)
        # The origin is a fixed point, so the safe gap stops above it.
        self.assertLess(plan.epsilon, DOMAIN_A)
        self.assertGreater(plan.epsilon, 0.0)
        self.assertLess(plan.kappa * plan.m_minus, plan.a_double_prime)
        self.assertLess(plan.a_double_prime, plan.a_prime)
        self.assertLess(plan.a_prime, plan.kappa * plan.m_star)
        self.assertAlmostEqual(
            quadrature.f_of_m(PARAMS, plan.a_prime / plan.kappa), DOMAIN_A, delta=1e-9
        )

    def test_no_domain_above_critical(self):
        with self.assertRaises(errors.InvalidDomain):
            modifier.plan_domain(tp.ModelParams(sigma=0.8), DOMAIN_A)

    def test_domain_without_fixed_point(self):
        with self.assertRaises(errors.InvalidDomain):
            modifier.plan_domain(PARAMS, 1.5)

    def test_two_sided_domain(self):
        with self.assertRaises(errors.InvalidDomain):
            modifier.plan_domain(PARAMS, DOMAIN_A, side="both")


class ModifiedDriftTest(parameterized.TestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.plan = modifier.plan_domain(PARAMS, DOMAIN_A)
        cls.drift = modifier.build_modified_drift(PARAMS, cls.plan)

    def test_r_properties(self):
        properties = modifier.check_r_properties(self.drift)
        self.assertEqual(properties, {"r1": True, "r2": True, "r3": True, "r4": True})
        self.assertBetween(self.drift.slope_s, 0.0, 1.0)

    def test_r_inverse(self):
        z = np.linspace(self.plan.kappa * self.plan.m_minus - 2.0, self.plan.a_prime + 2.0, 201)
        _assert_equal_vec(self, self.drift.r_inverse(self.drift.r(z)), z, atol=1e-10)

    def test_build_r_rejects_empty_budget(self):
        plan = self.plan._replace(a_double_prime=self.plan.a_prime)
        with self.assertRaises(errors.InfeasibleBump):
            modifier.build_r(plan)

    def test_h_prime_vanishes_on_domain(self):
        for y in np.linspace(DOMAIN_A, 5.0, 50):
            self.assertEqual(modifier.h_prime(PARAMS, self.drift, y), 0.0)
            self.assertEqual(float(self.drift.h_prime(y)), 0.0)
        on_domain = self.drift.knots >= DOMAIN_A
        self.assertTrue(np.all(self.drift.h_prime_knots[on_domain] == 0.0))
        self.assertTrue(np.all(self.drift.h_knots[on_domain] == 0.0))

    def test_h_prime_is_nonpositive_and_nondecreasing(self):
        values = self.drift.h_prime_knots
        self.assertTrue(np.all(values <= 0.0))
        self.assertTrue(np.all(np.diff(values) >= 0.0))
        self.assertLess(values[0], 0.0)

    def test_h_is_convex(self):
        y = np.linspace(self.plan.m_minus - 3.0, DOMAIN_A + 1.0, 2001)
        h = modifier.h_value(self.drift, y)
        self.assertTrue(np.all(np.diff(h, 2) >= -1e-9))

    def test_public_h_prime_matches_table(self):
        y = self.drift.knots[::97]
        expected = np.array([modifier.h_prime(PARAMS, self.drift, v) for v in y])
        _assert_equal_vec(self, self.drift.h_prime(y), expected, atol=1e-12)

    def test_w_prime_vanishes_at_m_star(self):
        theta_star = PARAMS.kappa * self.plan.m_star
        self.assertLess(abs(modifier.w_prime(PARAMS, self.drift, theta_star)), 1e-6)

    def test_h_prime_is_constant_below_m_minus(self):
        z0 = self.plan.kappa * self.plan.m_minus
        expected = float(z0 - self.drift.r(z0))
        self.assertLess(expected, 0.0)
        for y in np.linspace(self.plan.m_minus - 10.0, self.plan.m_minus, 11):
            self.assertEqual(modifier.h_prime(PARAMS, self.drift, y), expected)
        below = self.drift.knots <= self.plan.m_minus
        _assert_equal_vec(self, self.drift.h_prime_knots[below], expected, atol=1e-14)

    @parameterized.parameters(1e3, -1e3)
    def test_w_prime_grows_like_theta_over_kappa(self, theta):
        ratio = modifier.w_prime(PARAMS, self.drift, theta) / theta
        self.assertAlmostEqual(ratio, 1.0 / PARAMS.kappa, delta=0.2 / PARAMS.kappa)

    def test_f_tilde_agrees_with_f_on_domain(self):
        for m in np.linspace(self.plan.a_prime / PARAMS.kappa, 3.0, 11):
            self.assertAlmostEqual(
                modifier.f_tilde(PARAMS, self.drift, m),
                quadrature.f_of_m(PARAMS, m),
                delta=1e-9,
            )

    def test_verify_modifier(self):
        report = modifier.verify_modifier(PARAMS, self.drift)
        self.assertTrue(report.valid)
        self.assertGreater(report.eta_measured, 0.0)
        self.assertTrue(report.unique_critical_point)
        self.assertLen(report.f_tilde_fixed_points, 1)
        self.assertAlmostEqual(
            report.f_tilde_fixed_points[0], self.plan.m_star, delta=1e-6
        )
        self.assertLen(report.modified_fixed_points, 1)
        self.assertAlmostEqual(
            report.modified_fixed_points[0], self.plan.m_star, delta=1e-6
        )
        self.assertLess(abs(report.w_prime_at_m_star), 1e-6)

    def test_identity_drift_is_not_coercive(self):
        drift = modifier.identity_drift(self.plan)
        self.assertEqual(float(drift.h_prime(-1.0)), 0.0)
        self.assertAlmostEqual(
            modifier.modified_mean(PARAMS, drift, 0.4), quadrature.f_of_m(PARAMS, 0.4)
        )
        with self.assertRaises(errors.VerificationFailed) as context:
            modifier.verify_modifier(PARAMS, drift, grid_n=100, half_width=4.0)
        self.assertFalse(context.exception.report.valid)
        self.assertLen(context.exception.report.f_tilde_fixed_points, 3)


class ReflectedDomainTest(parameterized.TestCase):
    def test_upper_domain_mirrors_lower(self):
        lower = modifier.build_modified_drift(
            PARAMS, modifier.plan_domain(PARAMS, DOMAIN_A)
        )
        upper_plan = modifier.plan_domain(PARAMS, -DOMAIN_A, side=modifier.UPPER)
        upper = modifier.build_modified_drift(PARAMS, upper_plan)
        self.assertEqual(upper_plan.side, modifier.UPPER)
        y = np.linspace(-3.0, 3.0, 13)
        _assert_equal_vec(self, upper.h_prime(y), -lower.h_prime(-y), atol=1e-12)
        _assert_equal_vec(self, upper.h(y), lower.h(-y), atol=1e-12)
        self.assertTrue(np.all(upper.h_prime(y[y <= -DOMAIN_A]) == 0.0))
        self.assertTrue(all(modifier.check_r_properties(upper).values()))


if __name__ == "__main__":
    absltest.main()
