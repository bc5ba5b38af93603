# Copyright 2020 DeepMind Technologies Limited.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ============================================================================
"""Setup for pip package."""

import unittest
import setuptools

REQUIRED_PACKAGES = [
    "absl-py>=0.12.0",
    "chex>=0.1.84",
    "hydra-core>=1.1.1",
    "hydra-colorlog>=1.1.0",
    "jax>=0.4.14",
    "jaxlib>=0.4.14",
    "numpy>=1.19.5",
    "omegaconf>=2.1.2",
    "pytest>=6.2.4",
    "pyyaml>=6.0",
    "scipy>=1.7.0",
    "tqdm>=4.66.1",
]


def mfl_test_suite():
    test_loader = unittest.TestLoader()
    test_suite = test_loader.discover("mean_field_langevin", pattern="*_test.py")
    return test_suite


setuptools.setup(
    name="mean_field_langevin",
    version="1.0",
    description="Fixed points, particle simulation and exit times of "
    "mean-field Langevin systems",
    # Contained modules and scripts.
    packages=setuptools.find_packages(),
    package_data={"": ["config/**/*.yaml"]},
    install_requires=REQUIRED_PACKAGES,
    platforms=["any"],
    license="Apache 2.0",
    test_suite="setup.mfl_test_suite",
)
