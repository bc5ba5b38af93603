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

"""Tests for mean_field_langevin.potentials."""

from absl.testing import absltest
from absl.testing import parameterized
import jax.numpy as jnp
from mean_field_langevin import potentials
import mean_field_langevin.mfl_types as tp
import numpy as np


def _assert_equal_vec(tester, v1, v2, **kwargs):
    tester.assertTrue(np.allclose(v1, v2, **kwargs))


DOUBLE_WELL = tp.PotentialSpec(kind=tp.DOUBLE_WELL)
QUARTIC = tp.PotentialSpec(kind=tp.EVEN_POLYNOMIAL, coefficients=(-0.5, 0.25))


class PotentialsTest(parameterized.TestCase):
    def test_double_well_values(self):
        x = np.array([-2.0, -1.0, 0.0, 0.5, 1.0, 2.0])
        _assert_equal_vec(
            self, potentials.potential_value(DOUBLE_WELL, x), x**4 / 4 - x**2 / 2
        )
        _assert_equal_vec(self, potentials.potential_grad(DOUBLE_WELL, x), x**3 - x)

    def test_even_polynomial_matches_double_well(self):
        x = np.linspace(-3.0, 3.0, 61)
        _assert_equal_vec(
            self,
            potentials.potential_value(QUARTIC, x),
            potentials.potential_value(DOUBLE_WELL, x),
            atol=1e-14,
        )
        _assert_equal_vec(
            self,
            potentials.potential_grad(QUARTIC, x),
            potentials.potential_grad(DOUBLE_WELL, x),
            atol=1e-14,
        )

    def test_gradient_matches_finite_differences(self):
        spec = tp.PotentialSpec(
            kind=tp.EVEN_POLYNOMIAL, coefficients=(0.3, -0.2, 0.05)
        )
        x = np.linspace(-2.0, 2.0, 41)
        step = 1e-6
        finite_difference = (
            potentials.potential_value(spec, x + step)
            - potentials.potential_value(spec, x - step)
        ) / (2.0 * step)
        _assert_equal_vec(
            self, potentials.potential_grad(spec, x), finite_difference, atol=1e-7
        )

    def test_jax_inputs(self):
        x = jnp.linspace(-1.5, 1.5, 7)
        _assert_equal_vec(
            self,
            np.asarray(potentials.potential_grad(DOUBLE_WELL, x)),
            np.asarray(x) ** 3 - np.asarray(x),
        )

    def test_trailing_zeros_are_dropped(self):
        spec = tp.PotentialSpec(
            kind=tp.EVEN_POLYNOMIAL, coefficients=(-0.5, 0.25, 0.0, 0.0)
        )
        self.assertEqual(potentials.even_coefficients(spec), (-0.5, 0.25))
        self.assertTrue(potentials.validate(tp.ModelParams(0.5, 1.0, spec)).ok)

    def test_valid_models(self):
        self.assertTrue(potentials.validate(tp.ModelParams(0.5)).ok)
        self.assertTrue(potentials.validate(tp.ModelParams(0.5, 1.0, QUARTIC)).ok)

    @parameterized.named_parameters(
        ("zero_sigma", tp.ModelParams(0.0), "sigma must be positive"),
        ("negative_kappa", tp.ModelParams(0.5, -1.0), "kappa must be positive"),
        (
            "odd_term",
            tp.ModelParams(
                0.5,
                1.0,
                tp.PotentialSpec(
                    kind=tp.EVEN_POLYNOMIAL,
                    coefficients=(-0.5, 0.25),
                    odd_coefficients=(0.1,),
                ),
            ),
            "odd coefficients must vanish: V must be even",
        ),
        (
            "quadratic_only",
            tp.ModelParams(
                0.5, 1.0, tp.PotentialSpec(kind=tp.EVEN_POLYNOMIAL, coefficients=(1.0,))
            ),
            "degree must be at least 4",
        ),
        (
            "negative_leading",
            tp.ModelParams(
                0.5,
                1.0,
                tp.PotentialSpec(kind=tp.EVEN_POLYNOMIAL, coefficients=(0.5, -0.25)),
            ),
            "leading coefficient must be positive",
        ),
        (
            "non_finite",
            tp.ModelParams(
                0.5,
                1.0,
                tp.PotentialSpec(
                    kind=tp.EVEN_POLYNOMIAL, coefficients=(float("nan"), 0.25)
                ),
            ),
            "potential.coefficients must be finite",
        ),
    )
    def test_invalid_models(self, params, failure):
        report = potentials.validate(params)
        self.assertFalse(report.ok)
        self.assertIn(failure, report.failures)

    def test_unknown_kind(self):
        report = potentials.validate(
            tp.ModelParams(0.5, 1.0, tp.PotentialSpec(kind="morse"))
        )
        self.assertLen(report.failures, 1)
        self.assertIn("morse", report.failures[0])


if __name__ == "__main__":
    absltest.main()
