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

"""Main entry point for the mean-field Langevin experiments.

Example: python main.py command=critical_sigma
         python main.py experiment=fast_convergence seed=3
"""

import os
import sys

import hydra

from mean_field_langevin import cli


@hydra.main(config_path="config", config_name="main")
def main(config):
    os.environ["XLA_PYTHON_CLIENT_PREALLOCATE"] = "false"
    sys.exit(cli.run_experiment(config))


if __name__ == "__main__":
    main()
