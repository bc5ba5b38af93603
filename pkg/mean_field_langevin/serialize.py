# Copyright 2021 DeepMind Technologies Limited.
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

"""Code for reading particle files and writing CSV and JSON artifacts.

Every number is written with nine significant digits so that identical
inputs give byte-identical files.
"""
import csv
import functools
import hashlib
import json
import math
import os
from typing import Any, Mapping, Sequence

from mean_field_langevin import errors
import mean_field_langevin.mfl_types as tp
import numpy as np

Array = tp.Array
ExitOutcome = tp.ExitOutcome
PhaseRow = tp.PhaseRow
RunManifest = tp.RunManifest
TrajectoryRecord = tp.TrajectoryRecord

FLOAT_FORMAT = "%.9g"


def _format(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def _is_numeric_row(line: str) -> bool:
    try:
        [float(field) for field in line.split(",")]
    except ValueError:
        return False
    return True


def load_particles(path: str) -> np.ndarray:
    """Reads initial positions from a one-column file or an `index,x` CSV.

    A single non-numeric first line is treated as a header.
    """
    try:
        with open(path, encoding="utf-8") as f:
            first_line = f.readline().strip()
        skip_rows = 0 if _is_numeric_row(first_line) else 1
        data = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=skip_rows)
    except (OSError, ValueError) as error:
        raise errors.FileError(f"Cannot read particles from {path}: {error}") from error
    if data.shape[1] not in (1, 2) or data.shape[0] == 0:
        raise errors.FileError(
            f"{path} must hold one column x or two columns index,x; "
            f"got shape {data.shape}."
        )
    particles = data[:, -1]
    if not np.all(np.isfinite(particles)):
        raise errors.FileError(f"{path} holds non-finite positions.")
    return particles


def _writer(fn):
    """Creates the parent directory and maps OSError to FileError."""

    @functools.wraps(fn)
    def wrapped(path, *args, **kwargs):
        try:
            parent = os.path.dirname(os.path.abspath(path))
            os.makedirs(parent, exist_ok=True)
            fn(path, *args, **kwargs)
        except OSError as error:
            raise errors.FileError(f"Cannot write {path}: {error}") from error
        return path

    return wrapped


@_writer
def write_rows(path: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Writes a CSV with a header line; floats get nine significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(value) for value in row])


@_writer
def write_columns(path: str, header: Sequence[str], columns: Sequence[Array]) -> str:
    """Writes equal-length numeric columns side by side."""
    table = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns])
    if table.shape[1] != len(header):
        raise errors.LengthMismatch(
            f"{len(header)} column names for {table.shape[1]} columns."
        )
    np.savetxt(
        path, table, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(header), comments=""
    )


def write_phase_diagram(path: str, rows: Sequence[PhaseRow]) -> str:
    return write_rows(
        path,
        ("sigma", "m_plus", "m_minus", "status"),
        [(row.sigma, row.m_plus, row.m_minus, row.status) for row in rows],
    )


def write_trajectory(path: str, record: TrajectoryRecord) -> str:
    return write_columns(
        path, ("t", "xbar", "moment4"), (record.times, record.barycenter, record.moment4)
    )


def write_snapshot(path: str, particles: Array) -> str:
    """One particle configuration as `index,x`, readable by load_particles."""
    particles = np.asarray(particles, dtype=np.float64).ravel()
    return write_rows(
        path, ("index", "x"), [(i, float(x)) for i, x in enumerate(particles)]
    )


def write_histogram(path: str, edges: Array, counts: Array) -> str:
    edges = np.asarray(edges, dtype=np.float64)
    return write_rows(
        path,
        ("bin_left", "bin_right", "count"),
        [
            (float(lo), float(hi), int(count))
            for lo, hi, count in zip(edges[:-1], edges[1:], np.asarray(counts))
        ],
    )


def to_jsonable(value: Any) -> Any:
    """Recursively turns records and arrays into JSON values.

    Non-finite floats become null.
    """
    if hasattr(value, "_asdict"):
        return {k: to_jsonable(v) for k, v in value._asdict().items()}
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return float(FLOAT_FORMAT % value) if math.isfinite(value) else None
    if value is None or isinstance(value, str):
        return value
    if callable(value):
        return None
    return str(value)


def dumps(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), indent=2, sort_keys=True)


@_writer
def write_json(path: str, payload: Any) -> str:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(payload))
        f.write("\n")


def exit_ensemble_payload(outcomes: Sequence[ExitOutcome]) -> list:
    return [
        {
            "replica": o.replica_index,
            "exit_time": o.exit_time,
            "exited": o.exited,
            "seed_stream": o.seed_stream,
            "failure": o.failure,
        }
        for o in outcomes
    ]


def config_digest(resolved_config: Mapping[str, Any]) -> str:
    """sha256 of the canonical JSON form of a resolved configuration."""
    canonical = json.dumps(
        to_jsonable(resolved_config), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(path: str, manifest: RunManifest) -> str:
    return write_json(path, manifest)
