"""Trapped-ion chain geometry, transverse normal modes, and spin couplings.

Positions are dimensionless, in units of the Coulomb length scale
l = (e^2 / (4 pi eps0 M omega_z^2))^(1/3). Mode frequencies are plain Hz.
Everything that enters a Hamiltonian (Rabi frequency, beatnote detuning,
recoil, couplings, field strengths) is an angular frequency in rad/s; the
2*pi conversion happens exactly once, at the coupling-formula boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

TWO_PI = 2.0 * np.pi

#: mass of 171Yb+ in kg
YB171_MASS = 170.936323 * constants.atomic_mass

#: default beatnote detuning above the transverse COM mode, Hz
DEFAULT_DETUNING_OFFSET = 100e3


def raman_recoil(wavelength=355e-9, crossing_angle=0.5 * np.pi, mass=YB171_MASS):
    """Two-photon recoil angular frequency hbar*dk^2/(2M).

    Parameters
    ----------
    wavelength : float
        Raman laser wavelength in meters.
    crossing_angle : float
        Angle between the two beams; dk = 2 k sin(angle/2).
    mass : float
        Ion mass in kg.
    """
    dk = 2.0 * (TWO_PI / wavelength) * np.sin(0.5 * crossing_angle)
    return constants.hbar * dk**2 / (2.0 * mass)


#: recoil for 355 nm beams crossing at 90 degrees on 171Yb+, rad/s
DEFAULT_RECOIL = raman_recoil()


@dataclass(frozen=True)
class TrapConfig:
    """Harmonic trap parameters for a linear chain."""

    n_ions: int
    f_com: float  # transverse COM frequency, Hz
    f_z: float  # axial COM frequency, Hz
    ion_mass: float = YB171_MASS

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError("n_ions must be at least 1")
        if not (self.f_com > self.f_z > 0.0):
            raise ValueError("need f_com > f_z > 0 for a stable linear chain")


@dataclass(frozen=True)
class RamanConfig:
    """Raman drive parameters, all angular frequencies (rad/s)."""

    rabi_frequency: float
    detuning: float  # symmetric red/blue beatnote detuning
    recoil_frequency: float = DEFAULT_RECOIL

    def __post_init__(self):
        if self.rabi_frequency < 0.0:
            raise ValueError("rabi_frequency must be nonnegative")
        if self.detuning <= 0.0 or self.recoil_frequency <= 0.0:
            raise ValueError("detuning and recoil_frequency must be positive")


@dataclass(frozen=True)
class ModeData:
    """Equilibrium positions plus the transverse normal-mode decomposition.

    frequencies are sorted descending so index 0 is the COM mode; the
    eigenvector matrix may carry fewer columns than ions when deliberately
    truncated for diagnostics.
    """

    positions: np.ndarray  # dimensionless, ascending
    frequencies: np.ndarray  # Hz, descending
    eigenvectors: np.ndarray  # b[i, m], columns orthonormal

    @property
    def n_ions(self):
        return self.eigenvectors.shape[0]

    @property
    def n_modes(self):
        return self.eigenvectors.shape[1]


@dataclass(frozen=True)
class CouplingMatrix:
    """Spin-spin coupling matrix J_ij (rad/s) and its nearest-neighbor mean."""

    values: np.ndarray
    j0: float = field(default=np.nan)

    @classmethod
    def from_values(cls, values):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if n >= 2:
            j0 = float(np.mean(np.diagonal(values, offset=1)))
        else:
            j0 = float("nan")  # no pairs left; flagged, not an error
        return cls(values=values, j0=j0)

    @property
    def n_ions(self):
        return self.values.shape[0]


def _force_balance(u):
    """Residual of the dimensionless equilibrium condition for each ion."""
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return u - np.sum(np.sign(d) / d**2, axis=1)


def _axial_hessian(u):
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    inv3 = 1.0 / d**3
    hess = -2.0 * inv3
    np.fill_diagonal(hess, 1.0 + 2.0 * np.sum(inv3, axis=1))
    return hess


def equilibrium_positions(trap):
    """Solve the force-balance system for the chain's axial positions.

    Damped Newton iteration seeded by a uniform-spacing ansatz; residuals
    are driven below 1e-12 in dimensionless units.

    Returns
    -------
    ndarray
        Positions sorted ascending, mirror symmetric about 0.
    """
    n = trap.n_ions
    if n == 1:
        return np.zeros(1)
    spacing = 2.018 / n**0.559  # empirical minimum-spacing scale
    u = spacing * (np.arange(n) - 0.5 * (n - 1))
    norm = np.inf
    for _ in range(200):
        res = _force_balance(u)
        norm = np.max(np.abs(res))
        if norm < 1e-13:
            return u
        step = np.linalg.solve(_axial_hessian(u), -res)
        scale = 1.0
        for _ in range(40):
            trial = u + scale * step
            if np.all(np.diff(trial) > 0.0):
                if np.max(np.abs(_force_balance(trial))) < norm:
                    u = trial
                    break
            scale *= 0.5
        else:
            break
    if norm < 1e-12:
        return u
    raise RuntimeError(
        f"equilibrium solve stalled for n={n}: residual {norm:.3e} > 1e-12"
    )


def transverse_modes(positions, trap):
    """Diagonalize the transverse Hessian at the chain equilibrium.

    Parameters
    ----------
    positions : ndarray
        Dimensionless equilibrium positions from equilibrium_positions.
    trap : TrapConfig

    Returns
    -------
    ModeData
        Frequencies in Hz sorted descending (COM first), orthonormal
        eigenvector columns with a deterministic sign convention.
    """
    u = np.asarray(positions, dtype=float)
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    inv3 = 1.0 / d**3
    alpha2 = (trap.f_com / trap.f_z) ** 2
    hess = inv3.copy()
    np.fill_diagonal(hess, alpha2 - np.sum(inv3, axis=1))
    lam, vec = np.linalg.eigh(hess)
    if lam[0] <= 0.0:
        n_bad = int(np.sum(lam <= 0.0))
        raise RuntimeError(
            f"linear chain unstable (zig-zag): {n_bad} transverse mode(s) with "
            f"non-positive stiffness, worst eigenvalue {lam[0]:.3e}"
        )
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    # deterministic sign: largest-magnitude entry of each column positive
    for m in range(vec.shape[1]):
        if vec[np.argmax(np.abs(vec[:, m])), m] < 0.0:
            vec[:, m] = -vec[:, m]
    return ModeData(
        positions=u, frequencies=trap.f_z * np.sqrt(lam), eigenvectors=vec
    )


def _mode_detunings(modes, raman):
    return raman.detuning - TWO_PI * modes.frequencies


def coupling_matrix(modes, raman, guard_factor=10.0):
    """Exact mode-sum coupling matrix.

    J_ij = Omega^2 f_R sum_m b_im b_jm / (mu^2 - (2 pi f_m)^2), all angular
    except the mode frequencies which convert from Hz right here.

    Parameters
    ----------
    modes : ModeData
    raman : RamanConfig
    guard_factor : float
        Resonance guard: require |mu - 2 pi f_m| > guard_factor * eta_m *
        Omega * max_i|b_im| for every mode (the mode's largest excitation
        amplitude). Pass 0 to disable, e.g. while calibrating.
    """
    omega_m = TWO_PI * modes.frequencies
    if raman.detuning <= np.max(omega_m):
        raise ValueError(
            "beatnote detuning must sit above the transverse mode spectrum"
        )
    if guard_factor > 0.0:
        delta = _mode_detunings(modes, raman)
        eta = np.sqrt(raman.recoil_frequency / omega_m)
        amp = eta * np.max(np.abs(modes.eigenvectors), axis=0) * raman.rabi_frequency
        bad = np.flatnonzero(np.abs(delta) <= guard_factor * amp)
        if bad.size:
            raise ValueError(
                f"resonance guard: beatnote within {guard_factor}x the "
                f"excitation amplitude of mode(s) {bad.tolist()}"
            )
    weight = modes.eigenvectors / (raman.detuning**2 - omega_m**2)
    J = raman.rabi_frequency**2 * raman.recoil_frequency * (
        weight @ modes.eigenvectors.T
    )
    J = 0.5 * (J + J.T)
    np.fill_diagonal(J, 0.0)
    return CouplingMatrix.from_values(J)


def coupling_matrix_approx(modes, raman):
    """First-order-in-detuning cross-check of coupling_matrix.

    Uses J_ij ~= sum_m Omega^2 eta_m^2 b_im b_jm / (2 delta_m), the form
    valid when every delta_m is small against mu + 2 pi f_m.
    """
    omega_m = TWO_PI * modes.frequencies
    delta = _mode_detunings(modes, raman)
    if np.any(delta <= 0.0):
        raise ValueError("approximate form needs the beatnote above every mode")
    eta2 = raman.recoil_frequency / omega_m
    weight = modes.eigenvectors * (eta2 / (2.0 * delta))
    J = raman.rabi_frequency**2 * (weight @ modes.eigenvectors.T)
    J = 0.5 * (J + J.T)
    np.fill_diagonal(J, 0.0)
    return CouplingMatrix.from_values(J)


def calibrate_rabi(modes, raman, target_j0):
    """Rescale the Rabi frequency so the mean NN coupling equals target_j0.

    Exact because J scales as Omega^2; the returned config reproduces
    target_j0 to floating-point precision.
    """
    if not target_j0 > 0.0:
        raise ValueError("target_j0 must be positive")
    if raman.rabi_frequency <= 0.0:
        raise ValueError("cannot calibrate from a zero Rabi frequency")
    current = coupling_matrix(modes, raman, guard_factor=0.0).j0
    return replace(
        raman, rabi_frequency=raman.rabi_frequency * np.sqrt(target_j0 / current)
    )


def truncate_chain(couplings, keep):
    """Keep the central keep x keep block of the coupling matrix.

    N - keep must be even so the block is symmetric about the chain center;
    an odd remainder needs an explicit offset and is rejected.
    """
    n = couplings.n_ions
    if not 1 <= keep <= n:
        raise ValueError(f"keep must be in [1, {n}]")
    if (n - keep) % 2:
        raise ValueError(
            f"n - keep = {n - keep} is odd: central truncation is ambiguous, "
            "pick keep with matching parity or slice with an explicit offset"
        )
    start = (n - keep) // 2
    block = couplings.values[start : start + keep, start : start + keep].copy()
    return CouplingMatrix.from_values(block)


def spin_flip_probability(modes, raman, ion_index):
    """Residual spin-motion excitation probability for one ion.

    Sums (eta_m b_im Omega / delta_m)^2 over the modes, with
    delta_m = mu - 2 pi f_m and eta_m = sqrt(f_R / f_m) evaluated in
    consistent angular units.
    """
    if raman.rabi_frequency == 0.0:
        return 0.0
    omega_m = TWO_PI * modes.frequencies
    delta = _mode_detunings(modes, raman)
    if np.any(delta == 0.0):
        raise ValueError("beatnote resonant with a mode: flip diagnostic diverges")
    eta = np.sqrt(raman.recoil_frequency / omega_m)
    amps = eta * modes.eigenvectors[ion_index, :] * raman.rabi_frequency / delta
    return float(np.sum(amps**2))


def distance_profile(couplings):
    """Average coupling versus ion separation d = 1 .. N-1."""
    J = couplings.values
    n = J.shape[0]
    return np.array(
        [np.mean(np.diagonal(J, offset=d)) for d in range(1, n)]
    )
