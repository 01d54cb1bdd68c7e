"""Exact state-vector dynamics for transverse-coupled spin chains.

Basis convention: basis index k encodes a z-basis product state with bit i
of k belonging to spin i (little-endian); bit value 0 means sigma_z = +1.
Hamiltonians are specified in angular units (rad/s) and evolution applies
exp(+i * duration * H), matching the sign convention used throughout.

The Hamiltonian action never materializes a matrix: each two-spin x-x term
and each single-spin field term touches the state through a strided view,
so the cost is O(n_pairs * 2^n) per application. A dense eigendecomposition
path is kept alongside as an oracle for small systems.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .ionchain import CouplingMatrix

DENSE_ORACLE_MAX_IONS = 12


@dataclass(frozen=True)
class SpinState:
    """State vector over 2^n z-basis configurations."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitudes, dtype=complex)
        size = amp.size
        if size == 0 or size & (size - 1):
            raise ValueError(f"amplitude count {size} is not a power of two")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def n(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "SpinState":
        return SpinState(self.amplitudes.copy())


@dataclass(frozen=True)
class HamiltonianSpec:
    """Transverse-Ising generator: sum_ij J_ij XX + b_y sum Y + b_z sum Z.

    All coefficients are angular frequencies. `envelope` scales the whole
    generator uniformly; pulse shaping replaces it segment by segment.
    """

    couplings: CouplingMatrix
    b_y: float
    b_z: float
    envelope: float = 1.0


def preset_axes(name: str, n_ions: int) -> list[list[float]]:
    """Per-site Bloch axes for the named initial states."""
    key = name.strip().lower().replace("_", "-")
    if key == "polarized":
        return [[1.0, 0.0, 0.0] for _ in range(n_ions)]
    if key == "neel":
        return [[(-1.0) ** i, 0.0, 0.0] for i in range(n_ions)]
    if key == "two-center-flipped":
        if n_ions < 2:
            raise ValueError("two-center-flipped needs at least 2 spins")
        axes = [[1.0, 0.0, 0.0] for _ in range(n_ions)]
        lo = (n_ions - 1) // 2
        axes[lo] = [0.0, 0.0, 1.0]
        axes[lo + 1] = [0.0, 0.0, 1.0]
        return axes
    raise ValueError(f"unknown state preset {name!r}")


def prepare_product_state(axes) -> SpinState:
    """Product state with spin i pointing along the unit vector axes[i]."""
    axes = np.asarray(axes, dtype=float)
    if axes.ndim != 2 or axes.shape[1] != 3:
        raise ValueError("axes must be an (n, 3) array of Bloch vectors")
    norms = np.linalg.norm(axes, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("every Bloch axis must be a unit vector")
    state = np.ones(1, dtype=complex)
    for x, y, z in axes:
        theta = np.arccos(np.clip(z, -1.0, 1.0))
        phi = np.arctan2(y, x)
        site = np.array(
            [np.cos(theta / 2.0), np.sin(theta / 2.0) * np.exp(1j * phi)]
        )
        state = np.kron(site, state)  # new site occupies the next bit up
    return SpinState(state)


@lru_cache(maxsize=8)
def _zsum(n: int) -> np.ndarray:
    """sum_i sigma_z_i eigenvalue for each basis index."""
    idx = np.arange(2**n, dtype=np.uint32)
    pop = np.zeros(2**n, dtype=np.int64)
    for i in range(n):
        pop += (idx >> i) & 1
    out = (n - 2 * pop).astype(float)
    out.flags.writeable = False
    return out


def _apply_raw(psi: np.ndarray, spec: HamiltonianSpec, n: int) -> np.ndarray:
    out = np.zeros_like(psi)
    J = spec.couplings.values
    rows, cols = np.nonzero(np.triu(J, 1))
    for i, j in zip(rows, cols):
        shape = (2 ** (n - 1 - j), 2, 2 ** (j - i - 1), 2, 2**i)
        # x-x flips both bits; realized by reversing the two bit axes
        out.reshape(shape)[...] += J[i, j] * psi.reshape(shape)[:, ::-1, :, ::-1, :]
    if spec.b_y != 0.0:
        for i in range(n):
            shape = (2 ** (n - 1 - i), 2, 2**i)
            v = psi.reshape(shape)
            o = out.reshape(shape)
            o[:, 0, :] += (-1j * spec.b_y) * v[:, 1, :]
            o[:, 1, :] += (+1j * spec.b_y) * v[:, 0, :]
    if spec.b_z != 0.0:
        out += spec.b_z * _zsum(n) * psi
    if spec.envelope != 1.0:
        out *= spec.envelope
    return out


def apply_hamiltonian(state: SpinState, spec: HamiltonianSpec) -> SpinState:
    """Unnormalized image H|psi> of the matrix-free Hamiltonian."""
    if spec.couplings.n_ions != state.n:
        raise ValueError("coupling matrix size does not match the state")
    return SpinState(_apply_raw(state.amplitudes, spec, state.n))


def _small_exp(alphas, offdiag, duration):
    """exp(+i * duration * T) e_1 for the real tridiagonal T."""
    if len(alphas) == 1:
        return np.array([np.exp(1j * duration * alphas[0])])
    w, q = eigh_tridiagonal(np.asarray(alphas), np.asarray(offdiag))
    return q @ (np.exp(1j * duration * w) * q[0])


def _lanczos_step(psi, spec, n, duration, tolerance, max_dim):
    """One Krylov step; returns (vector, None) or (None, residual estimate)."""
    nrm = np.linalg.norm(psi)
    basis = np.empty((max_dim + 1, psi.size), dtype=complex)
    basis[0] = psi / nrm
    alphas: list[float] = []
    betas: list[float] = []
    estimate = np.inf
    for m in range(1, max_dim + 1):
        w = _apply_raw(basis[m - 1], spec, n)
        alphas.append(np.vdot(basis[m - 1], w).real)
        w -= alphas[-1] * basis[m - 1]
        if m > 1:
            w -= betas[-1] * basis[m - 2]
        # full reorthogonalization keeps the basis clean over long steps
        w -= basis[:m].conj() @ w @ basis[:m]
        beta = float(np.linalg.norm(w))
        small = _small_exp(alphas, betas, duration)
        if beta < 1e-13 * nrm:  # invariant subspace: result is exact
            return nrm * (small @ basis[:m]), None
        estimate = abs(duration) * beta * abs(small[-1])
        if estimate < tolerance:
            return nrm * (small @ basis[:m]), None
        betas.append(beta)
        basis[m] = w / beta
    return None, estimate


def krylov_propagate(
    state: SpinState,
    spec: HamiltonianSpec,
    duration: float,
    tolerance: float = 1e-8,
    max_dim: int = 30,
    max_splits: int = 40,
) -> SpinState:
    """Propagate by exp(+i * duration * H) with adaptive step splitting.

    A step that misses `tolerance` at Krylov dimension `max_dim` is halved
    recursively (each half inherits half the budget); exceeding `max_splits`
    halvings raises instead of returning an inaccurate vector.
    """
    if spec.couplings.n_ions != state.n:
        raise ValueError("coupling matrix size does not match the state")
    if duration == 0.0:
        return state.copy()

    def advance(psi, dt, tol, splits_left):
        vec, estimate = _lanczos_step(psi, spec, state.n, dt, tol, max_dim)
        if vec is not None:
            return vec
        if splits_left <= 0:
            raise RuntimeError(
                f"Krylov step did not converge: residual estimate {estimate:.3e} "
                f"above tolerance {tol:.3e} at dimension {max_dim} "
                f"after {max_splits} step halvings"
            )
        half = advance(psi, dt / 2.0, tol / 2.0, splits_left - 1)
        return advance(half, dt / 2.0, tol / 2.0, splits_left - 1)

    out = advance(state.amplitudes, float(duration), float(tolerance), max_splits)
    drift = abs(np.linalg.norm(out) - state.norm())
    if drift > 1e-9:
        raise RuntimeError(f"propagation norm drift {drift:.3e} exceeds 1e-9")
    return SpinState(out)


def _dense_hamiltonian(spec: HamiltonianSpec, n: int) -> np.ndarray:
    """Dense matrix assembled from matrix elements, independent of the
    strided kernel; oracle-only path."""
    dim = 2**n
    idx = np.arange(dim)
    bits = (idx[:, None] >> np.arange(n)) & 1
    H = np.zeros((dim, dim), dtype=complex)
    H[idx, idx] = spec.b_z * (n - 2 * bits.sum(axis=1))
    J = spec.couplings.values
    for i in range(n):
        # <k^bit_i| sigma_y_i |k> = +i for bit 0 -> 1, -i for 1 -> 0
        H[idx ^ (1 << i), idx] += spec.b_y * 1j * (1 - 2 * bits[:, i])
        for j in range(i + 1, n):
            if J[i, j] != 0.0:
                H[idx ^ ((1 << i) | (1 << j)), idx] += J[i, j]
    return spec.envelope * H


def dense_evolve_oracle(
    state: SpinState, spec: HamiltonianSpec, duration: float
) -> SpinState:
    """Evolution through a full eigendecomposition; n <= 12 only."""
    n = state.n
    if n > DENSE_ORACLE_MAX_IONS:
        raise ValueError(
            f"dense oracle is limited to {DENSE_ORACLE_MAX_IONS} spins, got {n}"
        )
    if spec.couplings.n_ions != n:
        raise ValueError("coupling matrix size does not match the state")
    w, v = np.linalg.eigh(_dense_hamiltonian(spec, n))
    phases = np.exp(1j * duration * w)
    return SpinState(v @ (phases * (v.conj().T @ state.amplitudes)))


def save_state(state: SpinState, path) -> None:
    """Checkpoint: little-endian uint64 header (n, count), then interleaved
    float64 (re, im) pairs."""
    size = state.amplitudes.size
    payload = np.empty((size, 2), dtype="<f8")
    payload[:, 0] = state.amplitudes.real
    payload[:, 1] = state.amplitudes.imag
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        np.array([state.n, size], dtype="<u8").tofile(fh)
        payload.tofile(fh)
    os.replace(tmp, path)


def load_state(path) -> SpinState:
    with open(path, "rb") as fh:
        header = np.fromfile(fh, dtype="<u8", count=2)
        if header.size != 2:
            raise ValueError(f"checkpoint {path} is truncated")
        n, size = int(header[0]), int(header[1])
        if size != 2**n:
            raise ValueError(
                f"checkpoint header inconsistent: n={n} but {size} amplitudes"
            )
        payload = np.fromfile(fh, dtype="<f8", count=2 * size)
    if payload.size != 2 * size:
        raise ValueError(f"checkpoint {path} is truncated")
    payload = payload.reshape(size, 2)
    return SpinState(payload[:, 0] + 1j * payload[:, 1])
