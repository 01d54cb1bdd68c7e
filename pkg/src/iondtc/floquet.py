"""One drive period: global pi-pulse followed by shaped Ising evolution.

The pulse is instantaneous. In ideal mode it is the analytic product of
single-spin y-rotations (exactly pi when the Rabi profile is uniform); in
bb1 mode it is the four-rotation composite that cancels amplitude errors
to second order. The interaction segment runs for the full period with a
sinusoidal-ramp (Tukey) envelope whose peak is rescaled so the integrated
generator area equals the nominal duration * strength product.

Sub-stepping uses the exact mean of the envelope on every sub-interval, so
for a time dependence that commutes with itself the piecewise-constant
product is exact up to propagation tolerance.

Noise trajectories are consumed through a small protocol (epsilon_at,
edges_between, modulated_spec) so this module never depends on how the
samples were drawn.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .ionchain import CouplingMatrix
from .observables import (
    ObservableSeries,
    energy_density,
    magnetization_autocorrelator,
    site_magnetizations,
)
from .spinsim import HamiltonianSpec, SpinState, krylov_propagate

DEFAULT_TUKEY_RAMP = 10e-6
DEFAULT_RAMP_SUBSTEP = 1e-6


@dataclass(frozen=True)
class DriveSchedule:
    """Parameters of one Floquet period (drive frequency omega = 2*pi/T)."""

    couplings: CouplingMatrix
    period_T: float
    b_y: float
    b_z: float
    pulse_mode: str = "ideal"
    rabi_profile: np.ndarray | None = None
    tukey_ramp: float = DEFAULT_TUKEY_RAMP
    pulse_rabi: float = 0.0  # informational; pulses consume no segment time

    def __post_init__(self):
        if self.pulse_mode not in ("ideal", "bb1"):
            raise ValueError(f"pulse_mode must be 'ideal' or 'bb1', got {self.pulse_mode!r}")
        if self.tukey_ramp < 0.0:
            raise ValueError("tukey_ramp must be non-negative")
        if self.period_T <= 2.0 * self.tukey_ramp:
            raise ValueError(
                f"period {self.period_T} does not fit two tukey_ramp={self.tukey_ramp} ends"
            )
        profile = self.rabi_profile
        if profile is None:
            profile = np.ones(self.couplings.n_ions)
        profile = np.asarray(profile, dtype=float)
        if profile.shape != (self.couplings.n_ions,):
            raise ValueError("rabi_profile length does not match the ion count")
        if np.any(profile <= 0.0):
            raise ValueError("rabi_profile entries must be positive")
        profile.flags.writeable = False
        object.__setattr__(self, "rabi_profile", profile)

    @property
    def n_ions(self) -> int:
        return self.couplings.n_ions

    @property
    def omega(self) -> float:
        return 2.0 * np.pi / self.period_T


@dataclass(frozen=True)
class Bb1Spec:
    """Composite-pulse geometry: phi = arccos(theta / 4pi)."""

    theta: float
    phi: float = None

    def __post_init__(self):
        if not 0.0 <= self.theta <= 4.0 * np.pi:
            raise ValueError(f"theta must lie in [0, 4*pi], got {self.theta}")
        object.__setattr__(self, "phi", float(np.arccos(self.theta / (4.0 * np.pi))))


def _axis_rotation(phi: float, angle: float) -> np.ndarray:
    """exp(-i*(angle/2)*sigma_phi), sigma_phi = cos(phi) X + sin(phi) Y."""
    c, s = np.cos(angle / 2.0), np.sin(angle / 2.0)
    e = np.exp(-1j * phi)
    return np.array([[c, -1j * s * e], [-1j * s * e.conjugate(), c]])


def _apply_single_site(psi: np.ndarray, n: int, site: int, u: np.ndarray) -> np.ndarray:
    shape = (2 ** (n - 1 - site), 2, 2**site)
    v = psi.reshape(shape)
    out = np.empty_like(psi)
    o = out.reshape(shape)
    o[:, 0, :] = u[0, 0] * v[:, 0, :] + u[0, 1] * v[:, 1, :]
    o[:, 1, :] = u[1, 0] * v[:, 0, :] + u[1, 1] * v[:, 1, :]
    return out


@lru_cache(maxsize=8)
def _flip_signs(n: int) -> np.ndarray:
    """(-1)^popcount(k): sign picked up by the exact uniform pi-pulse."""
    idx = np.arange(2**n, dtype=np.uint32)
    pop = np.zeros(2**n, dtype=np.int64)
    for i in range(n):
        pop += (idx >> i) & 1
    signs = 1.0 - 2.0 * (pop & 1)
    signs.flags.writeable = False
    return signs


def bb1_unitary(state: SpinState, spec: Bb1Spec, rabi_profile=None) -> SpinState:
    """Composite rotation: R_y(theta), then pi, 2pi, pi corrections whose
    phases phi, 3*phi, phi are measured from the y drive axis (axis angles
    phi - pi/2 and 3*phi - pi/2 from x). Under a common amplitude error on
    all four sub-rotations this cancels the error through second order;
    per-site angles scale with the profile."""
    n = state.n
    profile = np.ones(n) if rabi_profile is None else np.asarray(rabi_profile, float)
    if profile.shape != (n,):
        raise ValueError("rabi_profile length does not match the state")
    half_pi = np.pi / 2.0
    psi = state.amplitudes
    for site, r in enumerate(profile):
        u = (
            _axis_rotation(spec.phi - half_pi, np.pi * r)
            @ _axis_rotation(3.0 * spec.phi - half_pi, 2.0 * np.pi * r)
            @ _axis_rotation(spec.phi - half_pi, np.pi * r)
            @ _axis_rotation(half_pi, spec.theta * r)
        )
        psi = _apply_single_site(psi, n, site, u)
    return SpinState(psi)


def global_pi_pulse(state: SpinState, schedule: DriveSchedule) -> SpinState:
    """The kick half of the period: exp(+i*(pi/2)*r_i*sigma_y_i) per site in
    ideal mode, the bb1 composite otherwise."""
    n = state.n
    profile = schedule.rabi_profile
    if schedule.pulse_mode == "bb1":
        return bb1_unitary(state, Bb1Spec(theta=np.pi), profile)
    if np.all(profile == 1.0):
        # uniform pi rotation in closed form: flip every bit, sign per spin-down
        psi = state.amplitudes[::-1] * _flip_signs(n)
        return SpinState(psi)
    psi = state.amplitudes
    for site, r in enumerate(profile):
        a = 0.5 * np.pi * r
        u = np.array([[np.cos(a), np.sin(a)], [-np.sin(a), np.cos(a)]], dtype=complex)
        psi = _apply_single_site(psi, n, site, u)
    return SpinState(psi)


def _envelope_integral(t: float, period: float, ramp: float) -> float:
    """Integral of the unit-peak envelope from 0 to t, in closed form."""
    if ramp == 0.0:
        return t

    def ramp_part(x):  # integral of sin^2(pi*s/(2*ramp)) from 0 to x
        return x / 2.0 - (ramp / (2.0 * np.pi)) * np.sin(np.pi * x / ramp)

    total = ramp_part(min(t, ramp))
    total += max(0.0, min(t, period - ramp) - ramp)
    if t > period - ramp:
        total += ramp / 2.0 - ramp_part(period - t)
    return total


def envelope_grid(period_T, tukey_ramp, substep=DEFAULT_RAMP_SUBSTEP, extra_edges=()):
    """Sub-interval edges and exact per-interval envelope means.

    Edges: fixed-size sub-steps inside the two ramps, a single span across
    the flat top, plus any extra (noise-resample) edges. Means include the
    peak rescale factor period/(period - ramp), so the discrete area always
    equals the nominal period exactly.
    """
    if period_T <= 2.0 * tukey_ramp and tukey_ramp > 0.0:
        raise ValueError("period does not fit the two envelope ramps")
    edges = {0.0, period_T}
    if tukey_ramp > 0.0:
        n_sub = max(1, int(np.ceil(tukey_ramp / substep - 1e-9)))
        for k in range(1, n_sub + 1):
            x = tukey_ramp * k / n_sub
            edges.add(x)
            edges.add(period_T - x)
    for t in extra_edges:
        if 0.0 < t < period_T:
            edges.add(float(t))
    edges = np.array(sorted(edges))
    # collapse near-duplicate edges so no interval degenerates
    keep = np.concatenate([[True], np.diff(edges) > 1e-12 * period_T])
    keep[-1] = True
    edges = edges[keep]

    peak = period_T / (period_T - tukey_ramp) if tukey_ramp > 0.0 else 1.0
    integrals = np.array(
        [_envelope_integral(t, period_T, tukey_ramp) for t in edges]
    )
    means = peak * np.diff(integrals) / np.diff(edges)
    return edges, means


def ising_segment(
    state: SpinState,
    schedule: DriveSchedule,
    noise_trajectory=None,
    t_start: float = 0.0,
    ramp_substep: float = DEFAULT_RAMP_SUBSTEP,
    tolerance: float = 1e-8,
) -> SpinState:
    """Shaped interaction evolution across one period.

    `t_start` anchors the segment on the trajectory's global time axis; the
    grid is the union of envelope sub-steps and noise resample edges, so
    every sub-interval sees constant parameters and its exact envelope mean.
    """
    static = HamiltonianSpec(schedule.couplings, schedule.b_y, schedule.b_z)
    extra = ()
    if noise_trajectory is not None:
        extra = [
            e - t_start
            for e in noise_trajectory.edges_between(t_start, t_start + schedule.period_T)
        ]
    edges, means = envelope_grid(
        schedule.period_T, schedule.tukey_ramp, ramp_substep, extra
    )
    current = state
    for a, b, mean in zip(edges[:-1], edges[1:], means):
        if noise_trajectory is not None:
            spec = noise_trajectory.modulated_spec(static, t_start + 0.5 * (a + b))
            spec = replace(spec, envelope=mean)
        else:
            spec = replace(static, envelope=mean)
        current = krylov_propagate(current, spec, b - a, tolerance=tolerance)
    return current


def floquet_period(
    state: SpinState,
    schedule: DriveSchedule,
    noise_trajectory=None,
    t_start: float = 0.0,
    ramp_substep: float = DEFAULT_RAMP_SUBSTEP,
    tolerance: float = 1e-8,
) -> SpinState:
    """Pulse first, then the interaction segment (the period unitary acts
    right-to-left). bb1 pulses pick up the power fluctuation at the period
    start; ideal pulses are noise-free by construction."""
    if schedule.pulse_mode == "bb1" and noise_trajectory is not None:
        scale = 1.0 + noise_trajectory.epsilon_at(t_start)
        pulsed = bb1_unitary(
            state, Bb1Spec(theta=np.pi), schedule.rabi_profile * scale
        )
    else:
        pulsed = global_pi_pulse(state, schedule)
    return ising_segment(
        pulsed,
        schedule,
        noise_trajectory,
        t_start=t_start,
        ramp_substep=ramp_substep,
        tolerance=tolerance,
    )


def run_stroboscopic(
    initial: SpinState,
    schedule: DriveSchedule,
    n_periods: int,
    noise_trajectory=None,
    observables_hook=None,
    ramp_substep: float = DEFAULT_RAMP_SUBSTEP,
    tolerance: float = 1e-8,
) -> ObservableSeries:
    """Step n_periods periods, recording observables at t = 0 and after
    every period. The hook, when given, is called as hook(period, state);
    a returned mapping is collected into the series' extra columns."""
    if n_periods < 0:
        raise ValueError("n_periods must be non-negative")
    j0 = schedule.couplings.j0
    if not np.isfinite(j0) or j0 == 0.0:
        raise ValueError("stroboscopic runs need a finite coupling scale j0")
    h_eff = HamiltonianSpec(schedule.couplings, schedule.b_y, 0.0)
    sx0 = site_magnetizations(initial)

    site_x = [sx0]
    energies = [energy_density(initial, h_eff)]
    extra: dict[str, list] = {}

    def collect(period, state):
        if observables_hook is None:
            return
        values = observables_hook(period, state)
        if values:
            for key, val in values.items():
                extra.setdefault(key, []).append(val)

    collect(0, initial)
    state = initial
    for k in range(1, n_periods + 1):
        state = floquet_period(
            state,
            schedule,
            noise_trajectory,
            t_start=(k - 1) * schedule.period_T,
            ramp_substep=ramp_substep,
            tolerance=tolerance,
        )
        site_x.append(site_magnetizations(state))
        energies.append(energy_density(state, h_eff))
        collect(k, state)

    site_x = np.array(site_x)
    periods = np.arange(n_periods + 1)
    times = periods * schedule.period_T
    return ObservableSeries(
        periods=periods,
        times=times,
        t_j0=times * j0,
        site_x=site_x,
        magnetization=np.array(
            [magnetization_autocorrelator(sx, sx0) for sx in site_x]
        ),
        energy=np.array(energies),
        magnetization_sem=np.zeros(n_periods + 1),
        energy_sem=np.zeros(n_periods + 1),
        j0=j0,
        extra={key: np.array(val) for key, val in extra.items()},
    )
