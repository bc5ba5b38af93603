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

"""Euler-Maruyama integration of the interacting particle system.

Each particle follows

  dX_i = -[V'(X_i) + kappa (X_i - Xbar) + h'(Xbar)] dt + sqrt(2) sigma dB_i,

with h' = 0 for the original system. Randomness is counter based: replica k
of a run with seed s uses replica_key = fold_in(PRNGKey(s), k); its initial
law draws from fold_in(replica_key, 0) and step j >= 1 draws one standard
normal per particle, in particle order, from fold_in(replica_key, j).

The original and the modified systems run through the same compiled code:
the correction h' is read from a table of fixed size and is exactly zero on
the domain, so the two coincide bit for bit while the barycentre stays there.
"""

from concurrent import futures
import functools
import os
import time
from typing import List, NamedTuple, Optional, Sequence

from absl import logging
import chex
import jax
import jax.numpy as jnp
from mean_field_langevin import errors
from mean_field_langevin import potentials
from mean_field_langevin import serialize
import mean_field_langevin.mfl_types as tp
import numpy as np
import tqdm

Array = tp.Array
RandomKey = tp.RandomKey
ModelParams = tp.ModelParams
ModifiedDrift = tp.ModifiedDrift
SimConfig = tp.SimConfig
InitSpec = tp.InitSpec
TrajectoryRecord = tp.TrajectoryRecord
ExitOutcome = tp.ExitOutcome
PotentialSpec = tp.PotentialSpec

BLOWUP_THRESHOLD = 1e6
MAX_DOUBLE_WELL_DT = 0.05
TABLE_SIZE = 2048
INIT_KINDS = ("gaussian", "point", "from_file")
PILOT_SEED_OFFSET = 2**31
OCCUPATION_CHUNK = 100000
THREADS_ENV_VAR = "MFL_THREADS"


class Dynamics(NamedTuple):
    """Array-valued constants of one integration, traced by jit."""

    dt: Array
    sigma: Array
    kappa: Array
    noise_sign: Array
    knots: Array
    h_prime_table: Array
    # The correction vanishes where side_sign * xbar >= edge.
    edge: Array
    side_sign: Array


def resolve_threads(threads: Optional[int]) -> int:
    """`None` defers to $MFL_THREADS; 0 means one worker per CPU."""
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV_VAR, "0"))
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def replica_key(seed: int, replica_index: int) -> RandomKey:
    return jax.random.fold_in(jax.random.PRNGKey(seed), replica_index)


def seed_stream(key: RandomKey) -> int:
    """64-bit identifier of a replica stream."""
    words = np.asarray(key).astype(np.uint64)
    return int((words[0] << np.uint64(32)) | words[1])


def validate_sim_config(config: SimConfig) -> None:
    """Raises ConfigError naming the first offending key."""
    report = potentials.validate(config.params)
    if not report.ok:
        raise errors.ConfigError("; ".join(report.failures), "model")
    if config.n_particles < 1:
        raise errors.ConfigError("must be at least 1", "simulation.n_particles")
    if not config.dt > 0.0:
        raise errors.ConfigError("must be positive", "simulation.dt")
    if config.horizon < config.dt:
        raise errors.ConfigError("must be at least dt", "simulation.horizon")
    if (
        config.params.potential.kind == tp.DOUBLE_WELL
        and config.dt > MAX_DOUBLE_WELL_DT
    ):
        raise errors.ConfigError(
            f"must not exceed {MAX_DOUBLE_WELL_DT} for the double well",
            "simulation.dt",
        )
    if config.record_every < 1:
        raise errors.ConfigError("must be at least 1", "simulation.record_every")
    if config.noise_sign not in (1.0, -1.0):
        raise errors.ConfigError("must be +1 or -1", "simulation.noise_sign")
    if config.init.kind not in INIT_KINDS:
        raise errors.ConfigError(
            f"must be one of {', '.join(INIT_KINDS)}", "simulation.init.kind"
        )
    if config.init.kind == "gaussian" and config.init.variance < 0.0:
        raise errors.ConfigError("must be non-negative", "simulation.init.variance")


def make_dynamics(
    params: ModelParams,
    drift: Optional[ModifiedDrift],
    dt: float,
    noise_sign: float = 1.0,
) -> Dynamics:
    """Packs the constants of one integration, including the h' table."""
    if drift is None:
        knots = np.linspace(-1.0, 0.0, TABLE_SIZE)
        table = np.zeros(TABLE_SIZE)
        edge = -np.inf
        side_sign = 1.0
    else:
        knots = np.linspace(drift.knots[0], drift.knots[-1], TABLE_SIZE)
        table = np.interp(knots, drift.knots, drift.h_prime_knots)
        edge = drift.plan.a
        side_sign = -1.0 if drift.plan.side == "upper" else 1.0
    return Dynamics(
        dt=jnp.asarray(dt, dtype=jnp.float64),
        sigma=jnp.asarray(params.sigma, dtype=jnp.float64),
        kappa=jnp.asarray(params.kappa, dtype=jnp.float64),
        noise_sign=jnp.asarray(noise_sign, dtype=jnp.float64),
        knots=jnp.asarray(knots, dtype=jnp.float64),
        h_prime_table=jnp.asarray(table, dtype=jnp.float64),
        edge=jnp.asarray(edge, dtype=jnp.float64),
        side_sign=jnp.asarray(side_sign, dtype=jnp.float64),
    )


def _barycentre_correction(xbar: Array, dynamics: Dynamics) -> Array:
    u = dynamics.side_sign * xbar
    inside = jnp.interp(u, dynamics.knots, dynamics.h_prime_table)
    return dynamics.side_sign * jnp.where(u >= dynamics.edge, 0.0, inside)


def _euler_update(
    spec: PotentialSpec, x: Array, xi: Array, dynamics: Dynamics
) -> Array:
    xbar = jnp.mean(x)
    drift = (
        potentials.potential_grad(spec, x)
        + dynamics.kappa * (x - xbar)
        + _barycentre_correction(xbar, dynamics)
    )
    return x - dynamics.dt * drift + jnp.sqrt(2.0 * dynamics.dt) * dynamics.sigma * xi


def _out_of_bounds(x: Array) -> Array:
    # Written so that NaN also counts as a blow-up.
    return jnp.logical_not(jnp.all(jnp.abs(x) <= BLOWUP_THRESHOLD))


def _noise(key: RandomKey, step: Array, shape, dynamics: Dynamics) -> Array:
    step_key = jax.random.fold_in(key, step)
    return dynamics.noise_sign * jax.random.normal(step_key, shape, dtype=jnp.float64)


@functools.partial(jax.jit, static_argnames=("spec",))
def _em_step_jit(spec, x, xi, dynamics):
    return _euler_update(spec, x, xi, dynamics)


def em_step(
    params: ModelParams,
    drift: Optional[ModifiedDrift],
    particles: Array,
    dt: float,
    key: RandomKey,
    noise_sign: float = 1.0,
    time_now: float = 0.0,
) -> Array:
    """One Euler-Maruyama step of all particles.

    Args:
      params: model parameters.
      drift: None for the original system, else the modified drift.
      particles: array of shape (N,).
      dt: time step.
      key: random key for this step's N standard normals.
      noise_sign: -1 negates the draws.
      time_now: time before the step, used in the blow-up diagnostic.

    Returns:
      The particles after the step.
    """
    particles = jnp.asarray(particles, dtype=jnp.float64)
    chex.assert_rank(particles, 1)
    dynamics = make_dynamics(params, drift, dt, noise_sign)
    xi = dynamics.noise_sign * jax.random.normal(
        key, particles.shape, dtype=jnp.float64
    )
    new_particles = _em_step_jit(params.potential, particles, xi, dynamics)
    chex.assert_equal_shape([new_particles, particles])
    if bool(_out_of_bounds(new_particles)):
        raise errors.NumericalBlowup(time_now + dt)
    return new_particles


def init_particles(config: SimConfig, key: RandomKey) -> Array:
    """N i.i.d. draws from the initial law using the key of a replica."""
    init = config.init
    shape = (config.n_particles,)
    if init.kind == "point":
        return jnp.full(shape, init.x, dtype=jnp.float64)
    if init.kind == "gaussian":
        normals = jax.random.normal(
            jax.random.fold_in(key, 0), shape, dtype=jnp.float64
        )
        return init.mean + jnp.sqrt(init.variance) * (config.noise_sign * normals)
    if init.kind == "from_file":
        particles = serialize.load_particles(init.path)
        if particles.shape != shape:
            raise errors.FileError(
                f"{init.path} holds {particles.size} particles, expected "
                f"{config.n_particles}."
            )
        return jnp.asarray(particles, dtype=jnp.float64)
    raise errors.ConfigError(f"unknown init kind {init.kind!r}", "simulation.init.kind")


@functools.partial(jax.jit, static_argnames=("spec",))
def _integrate(spec, x, first_step, num_steps, key, dynamics):
    """Runs num_steps steps after first_step; returns x and the blow-up step."""

    def body(i, state):
        x, blowup = state
        step = first_step + i + 1
        x = _euler_update(spec, x, _noise(key, step, x.shape, dynamics), dynamics)
        blowup = jnp.where((blowup < 0) & _out_of_bounds(x), step, blowup)
        return x, blowup

    return jax.lax.fori_loop(0, num_steps, body, (x, jnp.asarray(-1, dtype=jnp.int64)))


def _record_steps(num_steps: int, record_every: int) -> List[int]:
    steps = list(range(0, num_steps + 1, record_every))
    if steps[-1] != num_steps:
        steps.append(num_steps)
    return steps


def run_trajectory(
    config: SimConfig, replica_index: int = 0, progress_bar: bool = False
) -> TrajectoryRecord:
    """Integrates to the horizon, recording every record_every steps.

    Args:
      config: the simulation configuration.
      replica_index: which replica stream of config.seed to use.
      progress_bar: show a tqdm bar over recording blocks.

    Returns:
      Times, barycentre and fourth moment at the recording steps, and the
      particles themselves when config.record_particles is set.
    """
    validate_sim_config(config)
    start_time = time.time()
    key = replica_key(config.seed, replica_index)
    dynamics = make_dynamics(config.params, config.drift, config.dt, config.noise_sign)
    x = init_particles(config, key)
    chex.assert_shape(x, (config.n_particles,))
    record_steps = _record_steps(config.num_steps, config.record_every)
    times, barycenter, moment4, snapshots = [], [], [], []

    def record(step, x):
        x_host = np.asarray(x)
        times.append(step * config.dt)
        barycenter.append(float(np.mean(x_host)))
        moment4.append(float(np.mean(x_host**4)))
        if config.record_particles:
            snapshots.append(x_host.copy())

    record(0, x)
    blocks = list(zip(record_steps[:-1], record_steps[1:]))
    for first, last in tqdm.tqdm(blocks, disable=not progress_bar, desc="trajectory"):
        x, blowup = _integrate(
            config.params.potential, x, first, last - first, key, dynamics
        )
        if int(blowup) >= 0:
            raise errors.NumericalBlowup(int(blowup) * config.dt)
        record(last, x)
    logging.info(
        "Trajectory (N=%d, %d steps, %s drift) took %.2f seconds.",
        config.n_particles,
        config.num_steps,
        config.drift_mode,
        time.time() - start_time,
    )
    return TrajectoryRecord(
        times=np.array(times),
        barycenter=np.array(barycenter),
        moment4=np.array(moment4),
        snapshots=np.stack(snapshots) if config.record_particles else None,
    )


def exit_step_limit(config: SimConfig) -> int:
    """Last step s whose time s * dt lies strictly before the horizon.

    An exit at that step or earlier is reported with exit_time < horizon; a
    replica still inside after it is censored at exactly the horizon.
    """
    limit = int(np.ceil(config.horizon / config.dt))
    while limit > 0 and float(limit) * config.dt >= config.horizon:
        limit -= 1
    while float(limit + 1) * config.dt < config.horizon:
        limit += 1
    return limit


def _exit_loop(spec, x0, key, num_steps, exit_edge, exit_sign, dynamics):
    def outside(x):
        return exit_sign * jnp.mean(x) < exit_sign * exit_edge

    def cond(state):
        step, _, exit_step, blowup = state
        return (step < num_steps) & (exit_step < 0) & (blowup < 0)

    def body(state):
        step, x, exit_step, blowup = state
        step = step + 1
        x = _euler_update(spec, x, _noise(key, step, x.shape, dynamics), dynamics)
        exit_step = jnp.where(outside(x), step, exit_step)
        blowup = jnp.where(_out_of_bounds(x), step, blowup)
        return step, x, exit_step, blowup

    zero = jnp.asarray(0, dtype=jnp.int64)
    initial_exit = jnp.where(outside(x0), zero, zero - 1)
    state = (zero, x0, initial_exit, zero - 1)
    _, _, exit_step, blowup = jax.lax.while_loop(cond, body, state)
    return exit_step, blowup


@functools.partial(jax.jit, static_argnames=("spec",))
def _exit_batch(spec, x0, keys, num_steps, exit_edge, exit_sign, dynamics):
    loop = functools.partial(_exit_loop, spec)
    return jax.vmap(loop, in_axes=(0, 0, None, None, None, None))(
        x0, keys, num_steps, exit_edge, exit_sign, dynamics
    )


def _exit_outcomes(
    config: SimConfig,
    domain_a: float,
    replica_indices: Sequence[int],
    batch_size: int,
    side: str,
) -> List[ExitOutcome]:
    """Runs one padded chunk of replicas."""
    indices = list(replica_indices)
    padded = indices + [indices[-1]] * (batch_size - len(indices))
    keys = jnp.stack([replica_key(config.seed, k) for k in padded])
    x0 = jnp.stack([init_particles(config, key) for key in keys])
    chex.assert_shape(x0, (batch_size, config.n_particles))
    dynamics = make_dynamics(config.params, config.drift, config.dt, config.noise_sign)
    exit_sign = -1.0 if side == "upper" else 1.0
    exit_steps, blowups = _exit_batch(
        config.params.potential,
        x0,
        keys,
        exit_step_limit(config),
        jnp.asarray(domain_a, dtype=jnp.float64),
        jnp.asarray(exit_sign, dtype=jnp.float64),
        dynamics,
    )
    exit_steps = np.asarray(exit_steps)
    blowups = np.asarray(blowups)
    outcomes = []
    for slot, k in enumerate(indices):
        stream = seed_stream(keys[slot])
        if blowups[slot] >= 0:
            outcomes.append(
                ExitOutcome(
                    exit_time=float(blowups[slot]) * config.dt,
                    exited=False,
                    replica_index=k,
                    seed_stream=stream,
                    failure="numerical_blowup",
                )
            )
        elif exit_steps[slot] >= 0:
            outcomes.append(
                ExitOutcome(float(exit_steps[slot]) * config.dt, True, k, stream)
            )
        else:
            outcomes.append(ExitOutcome(float(config.horizon), False, k, stream))
    return outcomes


def run_exit(
    config: SimConfig, domain_a: float, side: str = "lower", replica_index: int = 0
) -> ExitOutcome:
    """First step at which the barycentre leaves D = [domain_a, inf).

    With side "upper" the domain is (-inf, domain_a]. The exit is checked at
    the steps of exit_step_limit only; without an exit the outcome is censored
    at the horizon.
    """
    validate_sim_config(config)
    (outcome,) = _exit_outcomes(config, domain_a, [replica_index], 1, side)
    if outcome.failure is not None:
        raise errors.NumericalBlowup(outcome.exit_time)
    return outcome


def run_exit_ensemble(
    config: SimConfig,
    domain_a: float,
    n_replicas: int,
    threads: Optional[int] = 1,
    replica_batch: int = 8,
    side: str = "lower",
    progress_bar: bool = False,
) -> List[ExitOutcome]:
    """Exit outcomes of replicas 0..n_replicas-1, ordered by replica index.

    Replicas are vectorised in padded chunks of replica_batch and the chunks
    are spread over a thread pool. An outcome depends only on the config, the
    seed, the replica index and replica_batch.
    """
    validate_sim_config(config)
    if n_replicas < 1:
        raise errors.ConfigError("must be at least 1", "exit.replicas")
    if replica_batch < 1:
        raise errors.ConfigError("must be at least 1", "exit.replica_batch")
    start_time = time.time()
    chunks = [
        list(range(first, min(first + replica_batch, n_replicas)))
        for first in range(0, n_replicas, replica_batch)
    ]
    workers = resolve_threads(threads)
    logging.info(
        "Exit ensemble: %d replicas in %d chunks on %d threads.",
        n_replicas,
        len(chunks),
        workers,
    )
    outcomes = []
    with futures.ThreadPoolExecutor(max_workers=workers) as executor:
        jobs = [
            executor.submit(
                _exit_outcomes, config, domain_a, chunk, replica_batch, side
            )
            for chunk in chunks
        ]
        for job in tqdm.tqdm(
            futures.as_completed(jobs),
            total=len(jobs),
            disable=not progress_bar,
            desc="exit ensemble",
        ):
            outcomes.extend(job.result())
    outcomes.sort(key=lambda outcome: outcome.replica_index)
    n_failed = sum(outcome.failure is not None for outcome in outcomes)
    if n_failed:
        logging.warning("%d of %d replicas blew up.", n_failed, n_replicas)
    logging.info("Exit ensemble took %.2f seconds.", time.time() - start_time)
    return outcomes


def tune_horizon(
    config: SimConfig,
    domain_a: float,
    n_pilot: int = 20,
    factor: float = 6.0,
    threads: Optional[int] = 1,
    replica_batch: int = 8,
    side: str = "lower",
    max_doublings: int = 12,
) -> float:
    """Horizon giving little censoring, from a pilot ensemble.

    The pilot runs on a seed stream disjoint from config.seed and doubles its
    horizon until 90% of the pilot replicas exit. Under an exponential exit
    law, factor times the mean exit time censors about exp(-factor) of runs.
    """
    pilot = config._replace(seed=config.seed + PILOT_SEED_OFFSET)
    for _ in range(max_doublings):
        outcomes = run_exit_ensemble(
            pilot, domain_a, n_pilot, threads, replica_batch, side
        )
        exit_times = [o.exit_time for o in outcomes if o.exited]
        if len(exit_times) >= 0.9 * n_pilot:
            horizon = factor * float(np.mean(exit_times))
            logging.info("Pilot mean exit %.4g; horizon %.4g.", np.mean(exit_times), horizon)
            return max(horizon, config.dt)
        pilot = pilot._replace(horizon=2.0 * pilot.horizon)
    raise errors.NoConvergence(
        f"Fewer than 90% of pilot replicas exit before t={pilot.horizon:g}."
    )


@functools.partial(jax.jit, static_argnames=("spec", "num_bins"))
def _occupation(spec, x, first_step, num_steps, burn_in, key, dynamics, edges, num_bins):
    def body(i, state):
        x, counts, blowup = state
        step = first_step + i + 1
        x = _euler_update(spec, x, _noise(key, step, x.shape, dynamics), dynamics)
        index = jnp.searchsorted(edges, x, side="right") - 1
        # Bins are left-closed; the last one also holds its right edge.
        index = jnp.where(x == edges[-1], num_bins - 1, index)
        valid = (index >= 0) & (index < num_bins) & (step > burn_in)
        counts = counts.at[jnp.clip(index, 0, num_bins - 1)].add(
            valid.astype(jnp.int64)
        )
        blowup = jnp.where((blowup < 0) & _out_of_bounds(x), step, blowup)
        return x, counts, blowup

    counts = jnp.zeros(num_bins, dtype=jnp.int64)
    state = (x, counts, jnp.asarray(-1, dtype=jnp.int64))
    return jax.lax.fori_loop(0, num_steps, body, state)


def occupation_histogram(
    config: SimConfig,
    edges: Array,
    burn_in_steps: int = 0,
    progress_bar: bool = False,
) -> np.ndarray:
    """Counts of all particle positions over all steps after burn-in.

    Nothing but the counts is stored, so very long runs are cheap in memory.
    """
    validate_sim_config(config)
    edges = jnp.asarray(edges, dtype=jnp.float64)
    chex.assert_rank(edges, 1)
    num_bins = int(edges.shape[0]) - 1
    if num_bins < 1 or not bool(jnp.all(jnp.diff(edges) > 0.0)):
        raise errors.BadRange("Histogram edges must be strictly increasing.")
    key = replica_key(config.seed, 0)
    dynamics = make_dynamics(config.params, config.drift, config.dt, config.noise_sign)
    x = init_particles(config, key)
    counts = np.zeros(num_bins, dtype=np.int64)
    starts = range(0, config.num_steps, OCCUPATION_CHUNK)
    for first in tqdm.tqdm(starts, disable=not progress_bar, desc="occupation"):
        length = min(OCCUPATION_CHUNK, config.num_steps - first)
        x, chunk_counts, blowup = _occupation(
            config.params.potential,
            x,
            first,
            length,
            burn_in_steps,
            key,
            dynamics,
            edges,
            num_bins,
        )
        if int(blowup) >= 0:
            raise errors.NumericalBlowup(int(blowup) * config.dt)
        counts += np.asarray(chunk_counts)
    return counts
