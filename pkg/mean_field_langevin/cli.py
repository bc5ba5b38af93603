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

"""Runs one command on a resolved configuration and writes its artifacts."""
import os
import socket
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Sequence

from absl import logging
from hydra.utils import instantiate
import mean_field_langevin
from mean_field_langevin import errors
from mean_field_langevin import fixedpoint
from mean_field_langevin import modifier
from mean_field_langevin import potentials
from mean_field_langevin import quadrature
from mean_field_langevin import serialize
from mean_field_langevin import simulate
from mean_field_langevin import stats
from mean_field_langevin.loggers_pl import LoggerCollection
import mean_field_langevin.mfl_types as tp
import numpy as np
from omegaconf import OmegaConf
from omegaconf.errors import MissingMandatoryValue, OmegaConfBaseException

ConfigLike = tp.ConfigLike
InitSpec = tp.InitSpec
ModelParams = tp.ModelParams
ModifiedDrift = tp.ModifiedDrift
PotentialSpec = tp.PotentialSpec
RunManifest = tp.RunManifest
SimConfig = tp.SimConfig

MANIFEST_FILE = "manifest.json"
INIT_SENTINELS = ("m_plus", "m_minus")
DRIFT_MODES = ("original", "modified")
INSUFFICIENT_SAMPLING = "insufficient sampling"

_REQUIRED = object()


def _select(config: ConfigLike, key: str, kind: type = float, default: Any = _REQUIRED):
    """Reads a dotted key and checks its type; failures name the key."""
    try:
        value = OmegaConf.select(config, key, default=_REQUIRED, throw_on_missing=True)
    except MissingMandatoryValue as error:
        raise errors.ConfigError("value is missing", key) from error
    if value is _REQUIRED:
        if default is _REQUIRED:
            raise errors.ConfigError("key is missing", key)
        return default
    if value is None and default is None:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise errors.ConfigError(f"expected true/false, got {value!r}", key)
        return value
    if kind is str:
        if not isinstance(value, str):
            raise errors.ConfigError(f"expected a string, got {value!r}", key)
        return value
    if kind is list:
        if isinstance(value, str) or not hasattr(value, "__iter__"):
            raise errors.ConfigError(f"expected a list, got {value!r}", key)
        return list(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise errors.ConfigError(f"expected a number, got {value!r}", key)
    if kind is int:
        if float(value) != int(value):
            raise errors.ConfigError(f"expected an integer, got {value!r}", key)
        return int(value)
    return float(value)


def _select_floats(config: ConfigLike, key: str, default=()) -> tuple:
    values = _select(config, key, list, list(default))
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError) as error:
        raise errors.ConfigError(f"expected numbers, got {values!r}", key) from error


def _choice(config: ConfigLike, key: str, options: Sequence[str], default=_REQUIRED):
    value = _select(config, key, str, default)
    if value not in options:
        raise errors.ConfigError(f"must be one of {', '.join(options)}, got {value!r}", key)
    return value


def model_params(config: ConfigLike) -> ModelParams:
    """The model section as ModelParams; structural failures are config errors."""
    potential = PotentialSpec(
        kind=_select(config, "model.potential.kind", str, tp.DOUBLE_WELL),
        coefficients=_select_floats(config, "model.potential.coefficients"),
        odd_coefficients=_select_floats(config, "model.potential.odd_coefficients"),
    )
    params = ModelParams(
        sigma=_select(config, "model.sigma"),
        kappa=_select(config, "model.kappa", float, 1.0),
        potential=potential,
    )
    report = potentials.validate(params)
    if not report.ok:
        raise errors.ConfigError("; ".join(report.failures), "model")
    return params


def _quad_tol(config: ConfigLike) -> float:
    tol = _select(config, "quadrature.tol", float, quadrature.DEFAULT_TOL)
    if tol <= 0.0:
        raise errors.ConfigError("must be positive", "quadrature.tol")
    return tol


def _threads(config: ConfigLike) -> int:
    return simulate.resolve_threads(_select(config, "threads", int, None))


def _progress(config: ConfigLike) -> bool:
    return _select(config, "progress_bars", bool, False)


def _stable_branch(params: ModelParams, which: str, quad_tol: float) -> float:
    m_minus, m_plus = fixedpoint.stable_branches(params, quad_tol=quad_tol)
    return m_plus if which == "m_plus" else m_minus


def init_spec(config: ConfigLike, params: ModelParams, section: str) -> InitSpec:
    """Initial law of a section; `x: m_plus` / `x: m_minus` pick a stable branch."""
    prefix = f"{section}.init"
    kind = _choice(config, f"{prefix}.kind", simulate.INIT_KINDS, "gaussian")
    x_value = OmegaConf.select(config, f"{prefix}.x", default=0.0)
    if x_value in INIT_SENTINELS:
        x = _stable_branch(params, x_value, _quad_tol(config))
        logging.info("Resolved %s.x=%s to %.9g.", prefix, x_value, x)
    else:
        x = _select(config, f"{prefix}.x", float, 0.0)
    return InitSpec(
        kind=kind,
        mean=_select(config, f"{prefix}.mean", float, 1.0),
        variance=_select(config, f"{prefix}.variance", float, 0.25),
        x=x,
        path=_select(config, f"{prefix}.path", str, None),
    )


def _modified_drift(
    config: ConfigLike, params: ModelParams, section: str, domain_key: str, side_key: str
) -> Optional[ModifiedDrift]:
    mode = _choice(config, f"{section}.drift", DRIFT_MODES, "original")
    if mode == "original":
        return None
    quad_tol = _quad_tol(config)
    plan = modifier.plan_domain(
        params,
        _select(config, domain_key),
        side=_choice(config, side_key, (modifier.LOWER, modifier.UPPER), modifier.LOWER),
        quad_tol=quad_tol,
    )
    return modifier.build_modified_drift(params, plan, quad_tol=quad_tol)


def sim_config(
    config: ConfigLike,
    params: ModelParams,
    drift: Optional[ModifiedDrift] = None,
    horizon: Optional[float] = None,
    section: str = "simulation",
) -> SimConfig:
    """SimConfig from the simulation section, with per-command overrides."""
    sim = SimConfig(
        params=params,
        n_particles=_select(config, "simulation.n_particles", int),
        dt=_select(config, "simulation.dt"),
        horizon=horizon if horizon is not None else _select(config, "simulation.horizon"),
        seed=_select(config, "seed", int, 0),
        init=init_spec(config, params, section),
        drift=drift,
        record_every=_select(config, "simulation.record_every", int, 100),
        record_particles=_select(config, "simulation.record_particles", bool, False),
        noise_sign=_select(config, "simulation.noise_sign", float, 1.0),
    )
    simulate.validate_sim_config(sim)
    return sim


def _out(out_dir: str, name: str) -> str:
    return os.path.join(out_dir, name)


def _planned_outputs(config: ConfigLike, command: str) -> List[str]:
    names = {
        "phase_diagram": ["phase_diagram.csv"],
        "fixed_points": ["fixed_points.json"],
        "critical_sigma": ["critical_sigma.json"],
        "simulate": ["trajectory.csv"],
        "exit_times": ["exit_times.json", "exit_report.json"],
        "modifier_check": ["coercivity.json", "w_prime.csv", "f_tilde.csv"],
        "gibbs_oracle": ["occupation.csv", "gibbs_oracle.json"],
        "f_curves": ["f_curves.csv"],
    }[command]
    if command == "simulate" and _select(
        config, "simulation.record_particles", bool, False
    ):
        names += ["snapshot_final.csv", "histogram.csv", "densities.csv", "w2.json"]
    return names


def cmd_phase_diagram(config, params, out_dir) -> Dict[str, float]:
    start = _select(config, "fixedpoint.sigma_grid.start")
    stop = _select(config, "fixedpoint.sigma_grid.stop")
    step = _select(config, "fixedpoint.sigma_grid.step")
    if step <= 0.0 or stop < start:
        raise errors.ConfigError("need step > 0 and start <= stop", "fixedpoint.sigma_grid")
    num = int(round((stop - start) / step)) + 1
    sigma_grid = start + step * np.arange(num)
    rows = fixedpoint.phase_diagram(
        params,
        sigma_grid,
        tol=_select(config, "fixedpoint.tol", float, fixedpoint.ITERATION_TOL),
        max_iter=_select(config, "fixedpoint.max_iter", int, 10000),
        threads=_threads(config),
        quad_tol=_quad_tol(config),
        progress_bar=_progress(config),
    )
    serialize.write_phase_diagram(_out(out_dir, "phase_diagram.csv"), rows)
    stalled = sum(row.status != "ok" for row in rows)
    print(f"phase diagram: {len(rows)} temperatures, {stalled} without convergence")
    return {"num_sigma": len(rows), "num_no_convergence": stalled}


def cmd_fixed_points(config, params, out_dir) -> Dict[str, float]:
    sigma = _select(config, "fixedpoint.sigma", float, params.sigma)
    params = params._replace(sigma=sigma)
    report = fixedpoint.find_all_fixed_points(
        params,
        m_max=_select(config, "fixedpoint.m_max", float, fixedpoint.DEFAULT_M_MAX),
        grid_n=_select(config, "fixedpoint.grid_n", int, fixedpoint.DEFAULT_GRID_N),
        quad_tol=_quad_tol(config),
    )
    payload = {
        "sigma": report.sigma,
        "tolerance": report.tolerance,
        "iterations_used": report.iterations_used,
        "roots": [
            {"m": root.m, "f_prime_at_m": root.f_prime_at_m, "stable": root.stable}
            for root in report.roots
        ],
    }
    serialize.write_json(_out(out_dir, "fixed_points.json"), payload)
    print(serialize.dumps(payload))
    return {"sigma": sigma, "num_roots": len(report.roots)}


def cmd_critical_sigma(config, params, out_dir) -> Dict[str, float]:
    sigma_lo = _select(config, "fixedpoint.critical.sigma_lo", float, 0.5)
    sigma_hi = _select(config, "fixedpoint.critical.sigma_hi", float, 0.8)
    tol = _select(config, "fixedpoint.critical.tol", float, 1e-3)
    sigma_c = fixedpoint.critical_sigma(
        params,
        sigma_lo,
        sigma_hi,
        tol,
        m_max=_select(config, "fixedpoint.m_max", float, fixedpoint.DEFAULT_M_MAX),
        grid_n=_select(config, "fixedpoint.grid_n", int, fixedpoint.DEFAULT_GRID_N),
        quad_tol=_quad_tol(config),
    )
    payload = {"sigma_c": sigma_c, "sigma_lo": sigma_lo, "sigma_hi": sigma_hi, "tol": tol}
    serialize.write_json(_out(out_dir, "critical_sigma.json"), payload)
    print(f"sigma_c = {sigma_c:.6g}")
    return {"sigma_c": sigma_c}


def _density_overlays(config, params, sample, out_dir) -> Dict[str, float]:
    quad_tol = _quad_tol(config)
    value_range = tuple(_select_floats(config, "stats.range"))
    if len(value_range) != 2:
        raise errors.ConfigError("expected [lo, hi]", "stats.range")
    edges, counts = stats.histogram(sample, _select(config, "stats.bins", int), value_range)
    serialize.write_histogram(_out(out_dir, "histogram.csv"), edges, counts)
    m_minus, m_plus = fixedpoint.stable_branches(params, quad_tol=quad_tol)
    x = np.linspace(value_range[0], value_range[1], 4 * len(counts) + 1)
    serialize.write_columns(
        _out(out_dir, "densities.csv"),
        ("x", "mu_plus", "mu_minus"),
        (
            x,
            quadrature.nu_density(params, m_plus, x, quad_tol),
            quadrature.nu_density(params, m_minus, x, quad_tol),
        ),
    )
    w2 = {
        "m_plus": m_plus,
        "m_minus": m_minus,
        "w2_mu_plus": stats.w2_sample_vs_density(
            sample, quadrature.nu_quantile_fn(params, m_plus, quad_tol)
        ),
        "w2_mu_minus": stats.w2_sample_vs_density(
            sample, quadrature.nu_quantile_fn(params, m_minus, quad_tol)
        ),
    }
    serialize.write_json(_out(out_dir, "w2.json"), w2)
    print(f"W2 to mu_+: {w2['w2_mu_plus']:.4g}, to mu_-: {w2['w2_mu_minus']:.4g}")
    return w2


def cmd_simulate(config, params, out_dir) -> Dict[str, float]:
    drift = _modified_drift(
        config, params, "simulation", "modifier.domain_a", "modifier.side"
    )
    sim = sim_config(config, params, drift)
    record = simulate.run_trajectory(
        sim,
        replica_index=_select(config, "simulation.replica", int, 0),
        progress_bar=_progress(config),
    )
    serialize.write_trajectory(_out(out_dir, "trajectory.csv"), record)
    metrics = {
        "final_xbar": float(record.barycenter[-1]),
        "final_moment4": float(record.moment4[-1]),
    }
    if record.snapshots is not None:
        final = record.snapshots[-1]
        serialize.write_snapshot(_out(out_dir, "snapshot_final.csv"), final)
        metrics.update(_density_overlays(config, params, final, out_dir))
    print(
        f"trajectory: {len(record.times)} records to t={record.times[-1]:g}, "
        f"final barycenter {record.barycenter[-1]:.6g}"
    )
    return metrics


def cmd_exit_times(config, params, out_dir) -> Dict[str, float]:
    domain_a = _select(config, "exit.domain_a")
    side = _choice(config, "exit.side", (modifier.LOWER, modifier.UPPER), modifier.LOWER)
    drift = _modified_drift(config, params, "exit", "exit.domain_a", "exit.side")
    threads = _threads(config)
    replica_batch = _select(config, "exit.replica_batch", int, 8)
    n_replicas = _select(config, "exit.replicas", int)
    if n_replicas < 1:
        raise errors.ConfigError("must be at least 1", "exit.replicas")
    horizon_value = OmegaConf.select(config, "exit.horizon", default="auto")
    if horizon_value == "auto":
        pilot = sim_config(
            config,
            params,
            drift,
            horizon=_select(config, "exit.pilot_horizon", float, 10.0),
            section="exit",
        )
        horizon = simulate.tune_horizon(
            pilot,
            domain_a,
            n_pilot=_select(config, "exit.n_pilot", int, 20),
            factor=_select(config, "exit.factor", float, 6.0),
            threads=threads,
            replica_batch=replica_batch,
            side=side,
        )
    else:
        horizon = _select(config, "exit.horizon")
    sim = sim_config(config, params, drift, horizon=horizon, section="exit")
    outcomes = simulate.run_exit_ensemble(
        sim,
        domain_a,
        n_replicas,
        threads=threads,
        replica_batch=replica_batch,
        side=side,
        progress_bar=_progress(config),
    )
    serialize.write_json(
        _out(out_dir, "exit_times.json"), serialize.exit_ensemble_payload(outcomes)
    )
    report = stats.exit_report(outcomes)
    payload = dict(report._asdict())
    payload.update(
        domain_a=domain_a, side=side, horizon=horizon, n_particles=sim.n_particles
    )
    serialize.write_json(_out(out_dir, "exit_report.json"), payload)
    print(serialize.dumps(payload))
    if report.n_failed == report.n_total:
        failure_time = min(o.exit_time for o in outcomes)
        raise errors.NumericalBlowup(
            failure_time, f"All {report.n_total} replicas blew up; reduce dt."
        )
    return {
        "mean_exit": report.mean_exit,
        "ks_distance": report.ks_distance,
        "n_censored": report.n_censored,
        "n_failed": report.n_failed,
        "horizon": horizon,
    }


def cmd_modifier_check(config, params, out_dir) -> Dict[str, float]:
    quad_tol = _quad_tol(config)
    plan = modifier.plan_domain(
        params,
        _select(config, "modifier.domain_a"),
        side=_choice(
            config, "modifier.side", (modifier.LOWER, modifier.UPPER), modifier.LOWER
        ),
        quad_tol=quad_tol,
    )
    drift = modifier.build_modified_drift(params, plan, quad_tol=quad_tol)
    report = modifier.verify_modifier(
        params,
        drift,
        grid_n=_select(config, "modifier.grid_n", int, 400),
        half_width=_select(config, "modifier.half_width", float, 20.0),
        tol=quad_tol,
        raise_on_failure=False,
    )
    serialize.write_columns(
        _out(out_dir, "w_prime.csv"),
        ("theta", "w_prime"),
        (report.theta_grid, report.w_prime_values),
    )
    m_grid = report.theta_grid / params.kappa
    serialize.write_columns(
        _out(out_dir, "f_tilde.csv"),
        ("m", "f", "f_tilde"),
        (
            m_grid,
            [quadrature.f_of_m(params, m, quad_tol) for m in m_grid],
            [modifier.f_tilde(params, drift, m, quad_tol) for m in m_grid],
        ),
    )
    payload = {
        "plan": plan,
        "slope_s": drift.slope_s,
        "valid": report.valid,
        "eta_measured": report.eta_measured,
        "unique_critical_point": report.unique_critical_point,
        "f_tilde_fixed_points": report.f_tilde_fixed_points,
        "modified_fixed_points": report.modified_fixed_points,
        "w_prime_at_m_star": report.w_prime_at_m_star,
        "r_properties": report.r_properties,
    }
    serialize.write_json(_out(out_dir, "coercivity.json"), payload)
    print(serialize.dumps(payload))
    if not report.valid:
        raise errors.VerificationFailed(
            f"Modified drift for a={plan.a} fails verification.", report
        )
    return {"eta_measured": report.eta_measured, "m_star": plan.m_star}


def cmd_gibbs_oracle(config, params, out_dir) -> Dict[str, float]:
    quad_tol = _quad_tol(config)
    dt = _select(config, "stats.gibbs_dt", float, 0.005)
    steps = _select(config, "stats.gibbs_steps", int)
    sim = sim_config(config, params, horizon=steps * dt)._replace(n_particles=1, dt=dt)
    simulate.validate_sim_config(sim)
    value_range = _select_floats(config, "stats.range")
    if len(value_range) != 2 or not value_range[1] > value_range[0]:
        raise errors.ConfigError("expected [lo, hi] with lo < hi", "stats.range")
    edges = np.linspace(value_range[0], value_range[1], _select(config, "stats.bins", int) + 1)
    counts = simulate.occupation_histogram(
        sim,
        edges,
        burn_in_steps=_select(config, "stats.burn_in_steps", int, 0),
        progress_bar=_progress(config),
    )
    serialize.write_histogram(_out(out_dir, "occupation.csv"), edges, counts)

    def density(x):
        return quadrature.gibbs_density_1particle(params, x, quad_tol)

    tv = stats.tv_distance(counts, edges, density)
    threshold = _select(config, "stats.tv_threshold", float, 0.03)
    status = "ok" if tv < threshold else INSUFFICIENT_SAMPLING
    payload = {"tv_distance": tv, "steps": steps, "dt": dt, "status": status}
    serialize.write_json(_out(out_dir, "gibbs_oracle.json"), payload)
    print(f"tv distance {tv:.4g} ({status})")
    if status != "ok":
        logging.warning("TV distance %.4g above %.4g: %s.", tv, threshold, status)
    return {"tv_distance": tv}


def cmd_f_curves(config, params, out_dir) -> Dict[str, float]:
    quad_tol = _quad_tol(config)
    sigmas = _select_floats(config, "fixedpoint.f_curves.sigmas", (1.0, 0.68, 0.1))
    m_grid = np.linspace(
        _select(config, "fixedpoint.f_curves.m_min", float, -2.0),
        _select(config, "fixedpoint.f_curves.m_max", float, 2.0),
        _select(config, "fixedpoint.f_curves.num", int, 401),
    )
    columns = [m_grid]
    for sigma in sigmas:
        at_sigma = params._replace(sigma=sigma)
        columns.append([quadrature.f_of_m(at_sigma, m, quad_tol) for m in m_grid])
    serialize.write_columns(
        _out(out_dir, "f_curves.csv"),
        ["m"] + [f"f_{sigma:g}" for sigma in sigmas],
        columns,
    )
    print(f"f curves for sigma in {', '.join(f'{s:g}' for s in sigmas)}")
    return {"num_curves": len(sigmas)}


COMMANDS: Dict[str, Callable[[ConfigLike, ModelParams, str], Dict[str, float]]] = {
    "phase_diagram": cmd_phase_diagram,
    "fixed_points": cmd_fixed_points,
    "critical_sigma": cmd_critical_sigma,
    "simulate": cmd_simulate,
    "exit_times": cmd_exit_times,
    "modifier_check": cmd_modifier_check,
    "gibbs_oracle": cmd_gibbs_oracle,
    "f_curves": cmd_f_curves,
}


def _make_logger(config: ConfigLike) -> LoggerCollection:
    logging_config = OmegaConf.select(config, "logging", default=None) or {}
    return LoggerCollection([instantiate(cfg) for cfg in logging_config.values()])


def run_experiment(config: ConfigLike) -> int:
    """Runs config.command and returns the process exit code.

    Args:
      config: resolved experiment configuration.
    Returns:
      0 on success, otherwise the exit code of the error that stopped the run.
    """
    logging.info("Starting up...")
    logging.info("Run path: %s", os.getcwd())
    logging.info("Hostname: %s", socket.gethostname())
    logger = None
    start_time = time.time()
    try:
        command = _choice(config, "command", tuple(COMMANDS))
        out_dir = _select(config, "out", str, "results")
        resolved = OmegaConf.to_container(config, resolve=True)
        params = model_params(config)
        manifest = RunManifest(
            command=command,
            config_digest=serialize.config_digest(resolved),
            seed=_select(config, "seed", int, 0),
            tool_version=mean_field_langevin.__version__,
            output_paths=tuple(
                _out(out_dir, name) for name in _planned_outputs(config, command)
            ),
        )
        serialize.write_manifest(_out(out_dir, MANIFEST_FILE), manifest)
        logger = _make_logger(config)
        logger.log_hyperparams(resolved)
        metrics = COMMANDS[command](config, params, out_dir)
        logging.info("%s took %.2f seconds.", command, time.time() - start_time)
        logger.log_metrics({k: v for k, v in metrics.items() if v is not None}, step=0)
        logger.finalize("success")
    except OmegaConfBaseException as error:
        key = getattr(error, "full_key", None)
        return _fail(errors.ConfigError(str(error), key), logger)
    except errors.MeanFieldError as error:
        return _fail(error, logger)
    return 0


def _fail(error: errors.MeanFieldError, logger: Optional[LoggerCollection]) -> int:
    logging.error("%s: %s", type(error).__name__, error)
    print(f"error ({type(error).__name__}): {error}", file=sys.stderr)
    if logger is not None:
        try:
            logger.finalize("failed")
        except errors.FileError as log_error:
            logging.warning("Run logs not written: %s", log_error)
    return error.exit_code
