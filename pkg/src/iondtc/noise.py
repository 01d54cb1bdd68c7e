"""Fluctuating drive-power noise and trajectory ensembles.

The fluctuation is piecewise-constant white noise: independent Gaussian
samples with standard deviation `sigma`, one per resample interval. A
single sample modulates every channel at once (common-mode), since the
underlying fluctuation is shared laser power: multiplicatively on the
spin-spin couplings and the transverse field, additively on the
longitudinal field.

Trajectories satisfy the protocol the drive loop consumes (`epsilon_at`,
`edges_between`, `modulated_spec`) and are deterministic functions of
(model seed, run index), which keeps ensemble members independent and
reproducible regardless of execution order.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .floquet import DriveSchedule, run_stroboscopic
from .ionchain import TWO_PI, CouplingMatrix
from .observables import ObservableSeries
from .spinsim import HamiltonianSpec, SpinState

DEFAULT_BZ_SCALE = TWO_PI * 8e3
DEFAULT_J_FACTOR = 2.0
DEFAULT_BY_FACTOR = 1.0

# default grid density: resampling 20x per drive period puts the noise
# cutoff an order of magnitude above the drive frequency, where results
# are insensitive to it (tests refine the grid and check)
RESAMPLES_PER_PERIOD = 20


@dataclass(frozen=True)
class NoiseModel:
    """Size, bandwidth, and per-channel couplings of the power fluctuation.

    `resample_interval` may be left unset; ensemble runs then derive it
    from the drive period. Direct trajectory sampling needs a concrete
    value.
    """

    sigma: float
    resample_interval: float | None = None
    bz_scale: float = DEFAULT_BZ_SCALE
    j_factor: float = DEFAULT_J_FACTOR
    by_factor: float = DEFAULT_BY_FACTOR
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be non-negative")
        if self.resample_interval is not None and self.resample_interval <= 0.0:
            raise ValueError("resample_interval must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def modulate_parameters(
    spec: HamiltonianSpec, eps: float, model: NoiseModel
) -> HamiltonianSpec:
    """One noise sample applied to a static generator; the input is kept.

    Couplings and transverse field scale as (1 + factor*eps); the
    longitudinal field shifts by eps times its coupling scale.
    """
    j_scale = 1.0 + model.j_factor * eps
    return HamiltonianSpec(
        couplings=CouplingMatrix(
            values=spec.couplings.values * j_scale,
            j0=spec.couplings.j0 * j_scale,
        ),
        b_y=spec.b_y * (1.0 + model.by_factor * eps),
        b_z=spec.b_z + eps * model.bz_scale,
        envelope=spec.envelope,
    )


@dataclass(frozen=True)
class NoiseTrajectory:
    """One realization of the fluctuation on [0, duration].

    Sample k rules the left-closed interval [k*dt, (k+1)*dt); queries past
    the grid end hold the last value, so a run never falls off the grid.
    """

    samples: np.ndarray
    interval: float
    duration: float
    model: NoiseModel
    run_index: int

    @property
    def start_times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.interval

    def epsilon_at(self, t: float) -> float:
        k = int(np.floor(t / self.interval))
        return float(self.samples[min(max(k, 0), self.samples.size - 1)])

    def edges_between(self, t0: float, t1: float) -> list[float]:
        """Resample times strictly inside (t0, t1), guarded so endpoints
        that land on grid lines (up to roundoff) are not duplicated."""
        guard = 1e-9 * self.interval
        edges = []
        k = int(np.floor(t0 / self.interval)) + 1
        while True:
            t = k * self.interval
            if t >= t1 - guard:
                return edges
            if t > t0 + guard:
                edges.append(t)
            k += 1

    def modulated_spec(self, spec: HamiltonianSpec, t: float) -> HamiltonianSpec:
        return modulate_parameters(spec, self.epsilon_at(t), self.model)


def sample_trajectory(
    model: NoiseModel, duration: float, run_index: int = 0
) -> NoiseTrajectory:
    """Draw one trajectory covering [0, duration].

    The stream is seeded by (model.seed, run_index), so a trajectory is a
    pure function of those two integers and the duration.
    """
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    if model.resample_interval is None:
        raise ValueError(
            "resample_interval is unset; set one on the model or let an "
            "ensemble run derive it from the drive period"
        )
    count = max(int(np.ceil(duration / model.resample_interval)), 1)
    rng = np.random.default_rng([model.seed, int(run_index)])
    samples = rng.normal(0.0, model.sigma, size=count)
    return NoiseTrajectory(
        samples=samples,
        interval=model.resample_interval,
        duration=float(duration),
        model=model,
        run_index=int(run_index),
    )


def ensemble_statistics(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over the leading (trajectory) axis."""
    stack = np.asarray(stack)
    n = stack.shape[0]
    mean = stack.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, stack.std(axis=0, ddof=1) / np.sqrt(n)


def ensemble_run(
    schedule: DriveSchedule,
    initial: SpinState,
    model: NoiseModel,
    n_trajectories: int,
    n_periods: int,
    run_indices=None,
    ramp_substep: float = 1e-6,
    tolerance: float = 1e-8,
) -> ObservableSeries:
    """Average stroboscopic observables over independent noise draws.

    A quiet model short-circuits to the noiseless path, so sigma = 0 is
    bit-identical to a plain run, not merely close. Trajectories are
    independent by construction; `run_indices` lets callers shard an
    ensemble across workers without changing its statistics.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be at least 1")
    if run_indices is None:
        run_indices = range(n_trajectories)
    run_indices = [int(i) for i in run_indices]
    if len(run_indices) != n_trajectories:
        raise ValueError("run_indices length must equal n_trajectories")

    if model.sigma == 0.0:
        return run_stroboscopic(
            initial, schedule, n_periods,
            ramp_substep=ramp_substep, tolerance=tolerance,
        )

    if model.resample_interval is None:
        model = dataclasses.replace(
            model, resample_interval=schedule.period_T / RESAMPLES_PER_PERIOD
        )
    duration = max(n_periods, 1) * schedule.period_T

    runs = []
    for run_index in run_indices:
        traj = sample_trajectory(model, duration, run_index)
        runs.append(
            run_stroboscopic(
                initial, schedule, n_periods,
                noise_trajectory=traj,
                ramp_substep=ramp_substep, tolerance=tolerance,
            )
        )

    mag_mean, mag_sem = ensemble_statistics(
        np.stack([r.magnetization for r in runs])
    )
    energy_mean, energy_sem = ensemble_statistics(
        np.stack([r.energy for r in runs])
    )
    site_mean, _ = ensemble_statistics(np.stack([r.site_x for r in runs]))
    first = runs[0]
    return ObservableSeries(
        periods=first.periods,
        times=first.times,
        t_j0=first.t_j0,
        site_x=site_mean,
        magnetization=mag_mean,
        energy=energy_mean,
        magnetization_sem=mag_sem,
        energy_sem=energy_sem,
        j0=first.j0,
    )
