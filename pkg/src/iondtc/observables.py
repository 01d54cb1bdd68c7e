"""Measured quantities and their record container.

Everything here is a pure function of states and parameter specs. The
autocorrelator follows the product-of-expectations convention (not a
two-time quantum correlator), and energy density is always normalized by
the static coupling scale: eps = <H_eff>/(n * j0).
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .spinsim import HamiltonianSpec, SpinState, apply_hamiltonian

CSV_COLUMNS = ("period", "parity", "t", "t_j0", "M", "M_sem", "eps", "eps_sem")


def site_magnetizations(state: SpinState) -> np.ndarray:
    """Per-site <sigma_x_i>."""
    n = state.n
    out = np.empty(n)
    for i in range(n):
        v = state.amplitudes.reshape(2 ** (n - 1 - i), 2, 2**i)
        out[i] = 2.0 * np.vdot(v[:, 0, :], v[:, 1, :]).real
    return out


def magnetization_autocorrelator(current, initial) -> float:
    """M = (1/n) sum_i <sigma_x_i(t)> * <sigma_x_i(0)>."""
    current = np.asarray(current, dtype=float)
    initial = np.asarray(initial, dtype=float)
    if current.shape != initial.shape:
        raise ValueError(
            f"length mismatch: {current.shape} current vs {initial.shape} initial"
        )
    return float(current @ initial) / current.size


def energy_density(state: SpinState, h_eff_spec: HamiltonianSpec) -> float:
    """<H_eff>/(n * j0) for the transverse-coupled generator (no z field)."""
    if h_eff_spec.b_z != 0.0:
        raise ValueError("energy density is defined for b_z = 0 generators only")
    j0 = h_eff_spec.couplings.j0
    if not np.isfinite(j0) or j0 == 0.0:
        raise ValueError("coupling scale j0 is not finite; cannot normalize")
    h_psi = apply_hamiltonian(state, h_eff_spec)
    value = np.vdot(state.amplitudes, h_psi.amplitudes).real
    return float(value) / (state.n * j0)


def readout_channel(values, p_flip: float) -> np.ndarray:
    """Symmetric binary flip channel: expectation values shrink by 1 - 2p."""
    if not 0.0 <= p_flip <= 0.5:
        raise ValueError(f"p_flip must lie in [0, 0.5], got {p_flip}")
    return (1.0 - 2.0 * p_flip) * np.asarray(values, dtype=float)


@dataclass(frozen=True)
class ObservableSeries:
    """Stroboscopic record: one row per recorded period (t = 0 included).

    sem columns are zero for single runs and hold the standard error of the
    trajectory mean after ensemble averaging.
    """

    periods: np.ndarray
    times: np.ndarray
    t_j0: np.ndarray
    site_x: np.ndarray
    magnetization: np.ndarray
    energy: np.ndarray
    magnetization_sem: np.ndarray
    energy_sem: np.ndarray
    j0: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        k = self.periods.size
        shapes_ok = (
            self.times.shape == (k,)
            and self.t_j0.shape == (k,)
            and self.site_x.ndim == 2
            and self.site_x.shape[0] == k
            and self.magnetization.shape == (k,)
            and self.energy.shape == (k,)
            and self.magnetization_sem.shape == (k,)
            and self.energy_sem.shape == (k,)
        )
        if not shapes_ok:
            raise ValueError("inconsistent record array shapes")
        if k > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("record times must be strictly increasing")
        if np.any(np.abs(self.site_x) > 1.0 + 1e-9) or np.any(
            np.abs(self.magnetization) > 1.0 + 1e-9
        ):
            raise ValueError("magnetization out of physical bounds")

    @property
    def parity(self) -> np.ndarray:
        return self.periods % 2

    @property
    def n_ions(self) -> int:
        return self.site_x.shape[1]

    def to_rows(self) -> list[list[str]]:
        """Stable textual form shared by CSV emission and tests."""
        rows = []
        for k in range(self.periods.size):
            row = [str(int(self.periods[k])), str(int(self.parity[k]))]
            row += [
                f"{v:.17g}"
                for v in (
                    self.times[k],
                    self.t_j0[k],
                    self.magnetization[k],
                    self.magnetization_sem[k],
                    self.energy[k],
                    self.energy_sem[k],
                )
            ]
            row += [f"{v:.17g}" for v in self.site_x[k]]
            rows.append(row)
        return rows


def write_csv(series: ObservableSeries, path) -> None:
    """One row per recorded period; schema: period, parity, t, t_j0, M,
    M_sem, eps, eps_sem, sx_0..sx_{n-1}. Written atomically."""
    header = list(CSV_COLUMNS) + [f"sx_{i}" for i in range(series.n_ions)]
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(series.to_rows())
    os.replace(tmp, path)
