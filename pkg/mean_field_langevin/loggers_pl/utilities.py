# Copyright The PyTorch Lightning team.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Helpers shared by the loggers."""

import os
from typing import Any, Dict

from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import UnsupportedValueType, ValidationError
import yaml

from mean_field_langevin import errors


def save_hparams_to_yaml(config_yaml: str, hparams: Dict[str, Any]) -> None:
    """Writes hparams as YAML, through OmegaConf when the values allow it.

    Args:
        config_yaml: path to new YAML file
        hparams: parameters to be saved
    """
    if not os.path.isdir(os.path.dirname(config_yaml)):
        raise errors.FileError(f"Missing folder: {os.path.dirname(config_yaml)}.")
    if isinstance(hparams, DictConfig):
        hparams = OmegaConf.to_container(hparams, resolve=True)
    with open(config_yaml, "w", encoding="utf-8") as fp:
        try:
            OmegaConf.save(OmegaConf.create(hparams), fp)
            return
        except (UnsupportedValueType, ValidationError):
            pass
    # Drop values that neither OmegaConf nor yaml can represent.
    hparams_allowed = {}
    for k, v in hparams.items():
        try:
            yaml.dump(v)
        except TypeError:
            continue
        hparams_allowed[k] = v
    with open(config_yaml, "w", encoding="utf-8") as fp:
        yaml.dump(hparams_allowed, fp)
