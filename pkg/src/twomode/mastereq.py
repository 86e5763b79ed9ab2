r"""Exact master-equation coefficients and Gaussian second moments.

With ``A(t) = dU/dt U^{-1} = -i w(t) - gamma(t)``

.. math::

    \tilde\omega_s = \tfrac{i}{2}(A - A^\dagger), \quad
    \gamma = -\tfrac{1}{2}(A + A^\dagger), \quad
    \tilde\gamma = \dot V - (A V + V A^\dagger),

and the moments ``n_ij = <a_j^dagger a_i>`` obey
``dn/dt = A n + n A^dagger + gamma_tilde``, whose solution is
``n(t) = U n(0) U^dagger + V``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import csvio
from .errors import SingularPropagatorError
from .propagator import GreenTrajectory

DET_FLOOR = 1e-8


def _herm(m):
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def _dag(m):
    return np.conj(np.swapaxes(m, -1, -2))


@dataclass(frozen=True, eq=False)
class CoefficientTrajectory:
    """``omega_tilde``, ``gamma`` and ``gamma_tilde`` on a time grid, each ``(N, 2, 2)``.

    ``gaps`` lists grid indices where ``U`` was numerically singular and the
    coefficients were interpolated from neighbouring times.
    """

    times: np.ndarray
    omega_tilde: np.ndarray
    gamma: np.ndarray
    gamma_tilde: np.ndarray
    gaps: tuple = ()

    @property
    def generator(self) -> np.ndarray:
        """``A = -i omega_tilde - gamma``."""
        return -1j * self.omega_tilde - self.gamma


def _fill_gaps(times, values, bad):
    good = ~bad
    if good.sum() < 2:
        raise SingularPropagatorError("too few regular points to interpolate across", np.nonzero(bad)[0])
    out = values.copy()
    flat = values.reshape(len(times), -1)
    filled = out.reshape(len(times), -1)
    for c in range(flat.shape[1]):
        filled[bad, c] = (np.interp(times[bad], times[good], flat[good, c].real)
                          + 1j * np.interp(times[bad], times[good], flat[good, c].imag))
    return out


def coefficients(traj: GreenTrajectory, singular: str = "raise") -> CoefficientTrajectory:
    """Master-equation coefficients from a trajectory carrying ``u_dot`` (and ``v``, ``v_dot``).

    ``u_dot`` must come from the equation of motion; a trajectory without
    fluctuation data is treated as zero temperature (``gamma_tilde = 0``).

    Parameters
    ----------
    traj : GreenTrajectory
    singular : {"raise", "interpolate"}
        What to do where ``|det U| < 1e-8``.

    Raises
    ------
    SingularPropagatorError
        If ``U`` is near-singular somewhere and ``singular == "raise"``.
    """
    if singular not in ("raise", "interpolate"):
        raise ValueError(f"singular must be 'raise' or 'interpolate', got {singular!r}")
    if traj.u_dot is None:
        raise ValueError("trajectory has no u_dot; use a Volterra route")
    if (traj.v is None) != (traj.v_dot is None):
        raise ValueError("v and v_dot must be given together")
    u, ud = traj.u, traj.u_dot
    bad = np.abs(np.linalg.det(u)) < DET_FLOOR
    if bad.any() and singular == "raise":
        idx = np.nonzero(bad)[0]
        raise SingularPropagatorError(
            f"|det U| < {DET_FLOOR:g} at {idx.size} grid points (first t = {traj.times[idx[0]]:.6g})", idx)
    safe = np.where(bad[:, None, None], np.eye(2), u)
    # A = U' U^-1, via a solve on the transposed system
    a = np.swapaxes(np.linalg.solve(np.swapaxes(safe, 1, 2), np.swapaxes(ud, 1, 2)), 1, 2)
    if bad.any():
        a = _fill_gaps(traj.times, a, bad)
    omega_tilde = _herm(0.5j * (a - _dag(a)))
    gamma = _herm(-0.5 * (a + _dag(a)))
    if traj.v is None:
        gamma_tilde = np.zeros_like(a)
    else:
        v = traj.v
        gamma_tilde = _herm(traj.v_dot - (a @ v + v @ _dag(a)))
    return CoefficientTrajectory(traj.times, omega_tilde, gamma, gamma_tilde, tuple(np.nonzero(bad)[0]))


@dataclass(frozen=True, eq=False)
class MomentTrajectory:
    """``n(t)`` with ``n_ij = <a_j^dagger a_i>``, shape ``(N, 2, 2)``."""

    times: np.ndarray
    n: np.ndarray
    route: str

    @property
    def trace(self) -> np.ndarray:
        return np.trace(self.n, axis1=1, axis2=2).real


def _check_initial(n0):
    n0 = np.asarray(n0, dtype=complex)
    if n0.shape != (2, 2):
        raise ValueError(f"initial moments must be 2x2, got shape {n0.shape}")
    if not np.allclose(n0, n0.conj().T, atol=1e-12):
        raise ValueError("initial moments must be Hermitian")
    if np.linalg.eigvalsh(n0).min() < -1e-12:
        raise ValueError("initial moments must be positive semidefinite")
    return n0


def evolve_moments(source, n0) -> MomentTrajectory:
    """Second moments from either route.

    A :class:`GreenTrajectory` gives ``n = U n0 U^dagger + V`` directly; a
    :class:`CoefficientTrajectory` integrates ``dn/dt = A n + n A^dagger
    + gamma_tilde`` with the trapezoidal (Crank-Nicolson) rule on its grid.

    Raises
    ------
    ValueError
        If ``n0`` is not Hermitian positive semidefinite.
    """
    n0 = _check_initial(n0)
    if isinstance(source, GreenTrajectory):
        n = source.u @ n0 @ _dag(source.u)
        if source.v is not None:
            n = n + source.v
        return MomentTrajectory(source.times, _herm(n), "green")
    if not isinstance(source, CoefficientTrajectory):
        raise TypeError(f"expected GreenTrajectory or CoefficientTrajectory, got {type(source).__name__}")
    times = source.times
    a = source.generator
    eye = np.eye(2)
    # row-major vec: vec(A n + n A^dagger) = (A kron 1 + 1 kron conj(A)) vec(n)
    gen = np.einsum("nij,kl->nikjl", a, eye).reshape(-1, 4, 4) + \
        np.einsum("ij,nkl->nikjl", eye, np.conj(a)).reshape(-1, 4, 4)
    src = source.gamma_tilde.reshape(-1, 4)
    n = np.empty((times.size, 2, 2), complex)
    n[0] = n0
    x = n0.reshape(4)
    for k in range(times.size - 1):
        h = 0.5 * (times[k + 1] - times[k])
        rhs = x + h * (gen[k] @ x + src[k] + src[k + 1])
        x = np.linalg.solve(np.eye(4) - h * gen[k + 1], rhs)
        n[k + 1] = x.reshape(2, 2)
    return MomentTrajectory(times, _herm(n), "ode")


def coefficient_table(coeffs: CoefficientTrajectory, header=None) -> str:
    """CSV of ``t`` and Re/Im of every entry of ``omega_tilde``, ``gamma``, ``gamma_tilde``."""
    names = ["t"]
    blocks = [coeffs.times[:, None]]
    for prefix, m in (("w", coeffs.omega_tilde), ("g", coeffs.gamma), ("gt", coeffs.gamma_tilde)):
        names += csvio.complex_columns(prefix)
        blocks.append(csvio.flatten_complex(m))
    footer = {"gaps": " ".join(str(int(i)) for i in coeffs.gaps)} if coeffs.gaps else None
    return csvio.render_table(header or {}, names, np.hstack(blocks), footer)


def moment_table(moments: MomentTrajectory, header=None) -> str:
    """CSV of ``t, n11, Re n12, Im n12, n22, tr n``."""
    n = moments.n
    body = np.column_stack([moments.times, n[:, 0, 0].real, n[:, 0, 1].real, n[:, 0, 1].imag,
                            n[:, 1, 1].real, moments.trace])
    return csvio.render_table(dict(header or {}, route=moments.route),
                              ["t", "n11", "re_n12", "im_n12", "n22", "tr_n"], body)
