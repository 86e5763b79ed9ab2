"""Brute-force reference: both reservoirs discretized into ``K`` modes each.

The total Hamiltonian is quadratic, so single-particle amplitudes evolve
with ``M(t) = exp(-i h t)`` for the ``(2 + 2K)``-dimensional Hermitian
matrix ``h``.  ``U(t)`` is the system block of ``M(t)`` and ``V(t, t)`` the
system block of ``M(t) N0 M(t)^dagger`` with thermal bath occupations in
``N0``.  The discretized kernel reproduces the continuum one only until
the recurrence time ``2 pi / d_omega`` of the coarsest spacing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundstates import SystemParams
from .errors import DimensionError
from .spectral import BathParams, _bose, reservoir_densities

MAX_MODES = 5000
GRIDS = ("linear", "quadratic")


@dataclass(frozen=True, eq=False)
class DiscretizedBath:
    """Sampled modes of both reservoirs.

    ``couplings`` has shape ``(2, K)``: row 0 couples mode 1 to the left
    reservoir, row 1 mode 2 to the right one.  Both reservoirs share the
    frequency grid; ``spacing`` is the local mode spacing.
    """

    frequencies: np.ndarray
    couplings: np.ndarray
    spacing: np.ndarray
    grid: str
    bath: BathParams = field(repr=False)

    @property
    def k_modes(self) -> int:
        return self.frequencies.size

    @property
    def recurrence_time(self) -> float:
        """``2 pi / d_omega`` for the coarsest spacing; comparisons stay below half of it."""
        return float(2 * np.pi / self.spacing.max())


def discretize(bath: BathParams, k_modes: int, omega_max: float | None = None,
               grid: str = "linear") -> DiscretizedBath:
    """Sample each reservoir with ``K`` modes, ``W_k = sqrt(J_alpha(omega_k) d_omega_k / 2 pi)``.

    ``grid="linear"`` is the midpoint grid ``omega_k = (k - 1/2) d_omega``.
    ``grid="quadratic"`` takes midpoints ``x_k`` in ``omega = omega_max x**2``,
    which crowds modes towards the band edge.  A uniform grid aliases the
    slowly decaying (``~ 1/tau``) thermal kernel of a spectrum that stays
    finite at ``omega -> 0`` with an error ``~ d_omega**2 tau``; the quadratic
    map removes that endpoint contribution.  ``omega_max`` defaults to the
    tail cutoff used by the spectral module.
    """
    if k_modes < 1:
        raise ValueError(f"k_modes must be >= 1, got {k_modes}")
    if grid not in GRIDS:
        raise ValueError(f"grid must be one of {GRIDS}, got {grid!r}")
    if omega_max is None:
        omega_max = bath.cutoff()
    if omega_max <= 0:
        raise ValueError(f"omega_max must be positive, got {omega_max}")
    mid = (np.arange(1, k_modes + 1) - 0.5) / k_modes
    if grid == "linear":
        w = omega_max * mid
        dw = np.full(k_modes, omega_max / k_modes)
    else:
        w = omega_max * mid ** 2
        dw = 2.0 * omega_max * mid / k_modes
    jl, jr = reservoir_densities(w, bath)
    couplings = np.sqrt(np.stack([jl, jr]) * dw / (2 * np.pi))
    return DiscretizedBath(w, couplings, dw, grid, bath)


def single_particle_matrix(system: SystemParams, dbath: DiscretizedBath) -> np.ndarray:
    """Hermitian ``h`` ordered as (mode 1, mode 2, left bath, right bath)."""
    k = dbath.k_modes
    h = np.zeros((2 + 2 * k, 2 + 2 * k))
    h[:2, :2] = system.matrix
    idx = np.arange(2, 2 + 2 * k)
    h[idx, idx] = np.concatenate([dbath.frequencies, dbath.frequencies])
    h[0, 2:2 + k] = h[2:2 + k, 0] = dbath.couplings[0]
    h[1, 2 + k:] = h[2 + k:, 1] = dbath.couplings[1]
    return h


class ExactEvolution:
    """Eigendecomposition of ``h``, reused for every time.

    Raises
    ------
    DimensionError
        If ``K`` exceeds :data:`MAX_MODES`.
    """

    def __init__(self, system: SystemParams, dbath: DiscretizedBath):
        if dbath.k_modes > MAX_MODES:
            raise DimensionError(f"K = {dbath.k_modes} exceeds the dense limit of {MAX_MODES} modes per reservoir")
        self.system = system
        self.dbath = dbath
        self.h = single_particle_matrix(system, dbath)
        self.energies, self.vectors = np.linalg.eigh(self.h)

    def propagator(self, t: float) -> np.ndarray:
        """Full ``M(t) = exp(-i h t)``."""
        q = self.vectors
        return (q * np.exp(-1j * self.energies * t)) @ q.T

    def _system_rows(self, times):
        # rows i = 0, 1 of Q diag(e^{-iEt}), shape (T, 2, D)
        ph = np.exp(-1j * np.multiply.outer(np.asarray(times, float), self.energies))
        return self.vectors[None, :2, :] * ph[:, None, :]

    def u(self, times) -> np.ndarray:
        x = self._system_rows(times)
        return x @ self.vectors[:2].T

    def v(self, times, temperature: float, chunk: int = 64) -> np.ndarray:
        times = np.asarray(times, float)
        out = np.zeros((times.size, 2, 2), complex)
        if temperature == 0:
            return out
        occ = _bose(np.concatenate([self.dbath.frequencies, self.dbath.frequencies]), temperature)
        qb = self.vectors[2:]
        c = (qb.T * occ) @ qb          # Q_b^T diag(f) Q_b, time independent
        for lo in range(0, times.size, chunk):
            x = self._system_rows(times[lo:lo + chunk])
            out[lo:lo + chunk] = (x @ c) @ np.conj(np.swapaxes(x, 1, 2))
        return 0.5 * (out + np.conj(np.swapaxes(out, 1, 2)))


def exact_u(system: SystemParams, dbath: DiscretizedBath, times) -> np.ndarray:
    """System block of ``exp(-i h t)`` on ``times``, shape ``(T, 2, 2)``."""
    return ExactEvolution(system, dbath).u(times)


def exact_v(system: SystemParams, dbath: DiscretizedBath, temperature: float, times) -> np.ndarray:
    """System block of ``M(t) diag(0, 0, f(omega_k)) M(t)^dagger``."""
    return ExactEvolution(system, dbath).v(times, temperature)
