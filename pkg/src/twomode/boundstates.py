"""Localized bound states, residues, eigenmodes and critical couplings.

A localized bound state is a real pole ``omega_l < 0`` of the Laplace-domain
propagator, i.e. a zero of ``det(z - omega_s - Sigma(z))`` below the band
edge where the spectral density vanishes.  The two branches are labelled
``"-"`` (lower eigenmode) and ``"+"`` (upper eigenmode).
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import optimize, special

from .errors import BracketError, QuadratureError
from .spectral import BathParams, lamb_shift, lamb_shift_derivative

log = logging.getLogger(__name__)

BRANCHES = ("-", "+")
EDGE_EXCLUSION = 1e-6     # |omega_l| below this is a threshold case, not a bound state
OMEGA_FLOOR = -1e3        # bracket expansion limit
OMEGA_TOL = 1e-12
ETA_TOL = 1e-10
ETA_HI = 10.0
POLE_TOL = 1e-8


def _sign(branch) -> int:
    if branch in ("-", -1):
        return -1
    if branch in ("+", 1):
        return 1
    raise ValueError(f"branch must be '-' or '+', got {branch!r}")


@dataclass(frozen=True)
class SystemParams:
    """Two coupled bosonic modes ``omega_s = [[omega1, kappa], [kappa, omega2]]``."""

    omega1: float
    omega2: float
    kappa: float = 0.0

    def __post_init__(self):
        for name in ("omega1", "omega2", "kappa"):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val!r}")
            object.__setattr__(self, name, val)
        if self.omega1 <= 0 or self.omega2 <= 0:
            raise ValueError(f"mode frequencies must be > 0, got {self.omega1}, {self.omega2}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")

    @classmethod
    def from_detuning(cls, omega0: float = 1.0, delta: float = 0.0, kappa: float = 0.0):
        """Build from the mean frequency and the half detuning ``delta``."""
        return cls(omega0 - delta, omega0 + delta, kappa)

    @property
    def omega0(self) -> float:
        return 0.5 * (self.omega1 + self.omega2)

    @property
    def delta(self) -> float:
        return 0.5 * (self.omega2 - self.omega1)

    @property
    def splitting(self) -> float:
        return float(np.hypot(self.delta, self.kappa))

    @property
    def omega_minus(self) -> float:
        return self.omega0 - self.splitting

    @property
    def omega_plus(self) -> float:
        return self.omega0 + self.splitting

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.omega1, self.kappa], [self.kappa, self.omega2]])


@dataclass(frozen=True)
class EigenmodeDecomposition:
    omega_minus: float
    omega_plus: float
    theta: float
    lambda_minus: float
    lambda_plus: float

    @property
    def rotation(self) -> np.ndarray:
        """``P`` with ``(a_-, a_+) = P (a_1, a_2)``; ``P omega_s P.T`` is diagonal."""
        c, s = np.cos(self.theta / 2), np.sin(self.theta / 2)
        return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class BoundState:
    """A localized mode at ``omega_l < 0`` with residue matrix ``residue``."""

    omega_l: float
    residue: np.ndarray = field(repr=False)
    branch: str


def eigenmodes(system: SystemParams, lam: float = 1.0) -> EigenmodeDecomposition:
    """Diagonalise ``omega_s``; ``lam`` sets the effective eigenmode couplings.

    ``theta = atan2(kappa, delta)`` lies in ``[0, pi]``.  With ``delta == 0``
    and ``kappa > 0`` it is exactly ``pi/2``; fully degenerate modes
    (``delta == kappa == 0``) keep the bare basis, ``theta = 0``.
    """
    d, k = system.delta, system.kappa
    if d == 0 and k > 0:
        theta = 0.5 * np.pi
    else:
        theta = float(np.arctan2(k, d))
    c2, s2 = np.cos(theta / 2) ** 2, np.sin(theta / 2) ** 2
    return EigenmodeDecomposition(
        omega_minus=system.omega_minus,
        omega_plus=system.omega_plus,
        theta=theta,
        lambda_minus=c2 * lam + s2 * (2.0 - lam),
        lambda_plus=s2 * lam + c2 * (2.0 - lam),
    )


def pole_function(omega: float, branch, system: SystemParams, bath: BathParams,
                  shift: float | None = None) -> float:
    """Residual of the bound-state condition on one branch.

    ``omega - omega0 - sigma * sqrt((delta + (1-lam) D)**2 + kappa**2) - D`` with
    ``D = Delta(omega)`` and ``sigma = -1`` for the ``"-"`` branch.  The
    function is strictly increasing for ``omega < 0``.  ``shift`` may supply a
    precomputed ``Delta(omega)``.
    """
    sigma = _sign(branch)
    if omega > 0:
        raise ValueError(f"pole condition is only defined for omega <= 0, got {omega}")
    d = lamb_shift(omega, bath) if shift is None else shift
    root = np.hypot(system.delta + (1.0 - bath.lam) * d, system.kappa)
    return omega - system.omega0 - sigma * root - d


def laplace_matrix(z: complex, system: SystemParams, bath: BathParams, shift=None, density=0.0):
    """``z - omega_s - Sigma(z)`` on the real axis.

    For real ``z`` above the band edge pass ``density = +-J(z)`` to select
    ``z -+ i0``; ``shift`` defaults to the Lamb shift at ``Re z``.
    """
    d = lamb_shift(float(np.real(z)), bath) if shift is None else shift
    sigma = d - 0.5j * density
    wl, wr = bath.weights
    return np.array([[z - system.omega1 - wl * sigma, -system.kappa],
                     [-system.kappa, z - system.omega2 - wr * sigma]])


def laplace_propagator(z, system: SystemParams, bath: BathParams, shift=None, density=0.0):
    """Laplace-domain propagator ``U~(z) = i (z - omega_s - Sigma(z))^-1``."""
    return 1j * np.linalg.inv(laplace_matrix(z, system, bath, shift, density))


def inverse_determinant(omega: float, system: SystemParams, bath: BathParams, shift=None) -> float:
    """``1 / det U~(omega)`` for ``omega <= 0``; it crosses zero at every bound state."""
    # det(i A^-1) = -1/det A
    return float(-np.linalg.det(laplace_matrix(omega, system, bath, shift)).real)


def _root_on_branch(branch, system, bath):
    f = lambda w: pole_function(w, branch, system, bath)
    hi = -EDGE_EXCLUSION
    if f(hi) <= 0:
        return None
    gamma_s = special.gamma(bath.s)
    lo = -(system.omega_plus + bath.eta * bath.omega_c * gamma_s + 1.0)
    while f(lo) >= 0:
        lo *= 2.0
        if lo < OMEGA_FLOOR:
            raise BracketError(f"no sign change of the {branch} pole function above {OMEGA_FLOOR}")
    return optimize.brentq(f, lo, hi, xtol=OMEGA_TOL, rtol=4 * np.finfo(float).eps)


def find_bound_states(system: SystemParams, bath: BathParams) -> list[BoundState]:
    """All localized bound states, sorted by frequency (0, 1 or 2 entries)."""
    states = []
    for branch in BRANCHES:
        w = _root_on_branch(branch, system, bath)
        if w is None:
            continue
        states.append(BoundState(w, residue(w, system, bath, branch=branch), branch))
    states.sort(key=lambda st: (st.omega_l, st.branch != "-"))
    return states


def residue(omega_l: float, system: SystemParams, bath: BathParams, branch=None,
            derivative: float | None = None) -> np.ndarray:
    """Residue matrix of the bound state at ``omega_l``.

    ``Z = [[M_R, kappa], [kappa, M_L]] / (2 [M_0 - Delta' (omega_l - omega0
    + (1-lam) delta - lam (2-lam) Delta)])``, the adjugate over the derivative
    of the determinant.  For ``kappa == 0`` the modes decouple and the
    residue is ``1/M_i'`` on the mode whose ``M_i`` vanishes; ``branch`` then
    resolves the degenerate case where both do.

    Raises
    ------
    ValueError
        If ``omega_l`` does not satisfy the pole condition to 1e-8.
    """
    if omega_l >= 0:
        raise ValueError(f"bound states lie below the band edge, got omega_l = {omega_l}")
    d = lamb_shift(omega_l, bath, tol=1e-13)
    branches = BRANCHES if branch is None else (branch,)
    resid = min(abs(pole_function(omega_l, b, system, bath, shift=d)) for b in branches)
    if resid > POLE_TOL:
        raise ValueError(f"omega_l = {omega_l} is not a pole (residual {resid:.2e})")
    dp = lamb_shift_derivative(omega_l, bath) if derivative is None else derivative
    lam = bath.lam
    w0, dl = system.omega0, system.delta
    m0 = omega_l - w0 - d
    ml = omega_l - system.omega1 - lam * d
    mr = omega_l - system.omega2 - (2.0 - lam) * d
    k = system.kappa

    if k == 0:
        z = np.zeros((2, 2), complex)
        if branch is None:
            modes = [i for i, m in enumerate((ml, mr)) if abs(m) <= POLE_TOL]
        else:
            b = dl + (1.0 - lam) * d
            lower_is_1 = b >= 0
            modes = [0 if (_sign(branch) < 0) == lower_is_1 else 1]
        for i in modes:
            z[i, i] = 1.0 / (1.0 - bath.weights[i] * dp)
        return z

    denom = 2.0 * (m0 - dp * (omega_l - w0 + (1.0 - lam) * dl - lam * (2.0 - lam) * d))
    return np.array([[mr, k], [k, ml]], dtype=complex) / denom


def numerical_residue(omega_l: float, system: SystemParams, bath: BathParams,
                      offsets=(1e-3, 1e-4, 1e-5)) -> np.ndarray:
    """``lim (z - omega_l) (-i) U~(z)`` from a few real offsets below the pole.

    Two Richardson levels (offset ratio 10) remove the terms linear and
    quadratic in the offset.  Independent of :func:`residue`; no Lamb-shift
    derivative enters.
    """
    offsets = np.asarray(offsets, float)
    vals = []
    for r in offsets:
        z = omega_l - r
        vals.append(-r * np.linalg.inv(laplace_matrix(z, system, bath, shift=lamb_shift(z, bath, tol=1e-13))))
    step = offsets[0] / offsets[1]
    ratio = step
    table = vals
    for _ in range(len(offsets) - 1):
        table = [(ratio * b - a) / (ratio - 1.0) for a, b in zip(table[:-1], table[1:])]
        ratio *= step
    return table[0].astype(complex)


# --------------------------------------------------------------------------
# critical couplings


def critical_coupling(branch, system: SystemParams, bath: BathParams, method: str = "auto") -> float:
    """Smallest ``eta`` at which the branch hosts a bound state.

    ``bath.eta`` is ignored.  With ``method="auto"`` the symmetric case
    ``lam == 1`` uses the closed form ``omega_-+ / (omega_c Gamma(s))``;
    otherwise (or with ``method="bisection"``) the band-edge pole residual
    is bracketed in ``eta`` on ``[0, 10]``.  Returns 0 when the branch is
    bound for every ``eta > 0``.

    Raises
    ------
    BracketError
        If no bound state forms for any ``eta <= 10``.
    """
    sigma = _sign(branch)
    if method not in ("auto", "closed", "bisection"):
        raise ValueError(f"unknown method {method!r}")
    if method == "closed" or (method == "auto" and bath.lam == 1.0):
        if bath.lam != 1.0:
            raise ValueError("the closed form needs lam == 1")
        w = system.omega_minus if sigma < 0 else system.omega_plus
        return max(0.0, w / (bath.omega_c * special.gamma(bath.s)))

    # Delta(0-) is linear in eta; the band-edge limit is the ordinary integral at omega = 0
    edge_shift = lamb_shift(0.0, bath.with_eta(1.0))
    unit = bath.with_eta(1.0)

    def residual(eta):
        return pole_function(0.0, branch, system, unit, shift=eta * edge_shift)

    if residual(0.0) > 0:
        return 0.0
    if residual(ETA_HI) <= 0:
        raise BracketError(f"branch {branch} has no bound state for eta <= {ETA_HI}")
    return optimize.brentq(residual, 0.0, ETA_HI, xtol=ETA_TOL)


@dataclass(frozen=True)
class SweepRow:
    delta: float
    kappa: float
    lam: float
    s: float
    omega_c: float
    eta_c_minus: float
    eta_c_plus: float
    status: str = "ok"


def _sweep_point(args):
    delta, kappa, lam, omega0, s, omega_c = args
    bath = BathParams(0.0, s, omega_c, lam)
    out = [np.nan, np.nan]
    status = []
    try:
        system = SystemParams.from_detuning(omega0, delta, kappa)
    except ValueError as exc:
        return SweepRow(delta, kappa, lam, s, omega_c, np.nan, np.nan, f"invalid:{exc}")
    for i, branch in enumerate(BRANCHES):
        try:
            out[i] = critical_coupling(branch, system, bath)
        except (BracketError, QuadratureError) as exc:
            status.append(f"{branch}:{type(exc).__name__}")
    return SweepRow(delta, kappa, lam, s, omega_c, out[0], out[1], ";".join(status) or "ok")


def critical_coupling_sweep(deltas, kappas, lams, s: float = 1.0, omega_c: float = 5.0,
                            omega0: float = 1.0, jobs: int = 1) -> list[SweepRow]:
    """Critical couplings of both branches over a ``delta x kappa x lam`` grid.

    Rows come back in grid order (delta slowest, lam fastest) whatever the
    number of worker processes; a failing point is recorded in ``status``
    and the sweep carries on.
    """
    points = [(float(d), float(k), float(l), omega0, s, omega_c)
              for d, k, l in product(np.atleast_1d(deltas), np.atleast_1d(kappas), np.atleast_1d(lams))]
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, points, chunksize=max(1, len(points) // (4 * jobs))))
    return [_sweep_point(p) for p in points]


def trend_violations(rows: list[SweepRow], axis: str, tol: float = 1e-9) -> list[tuple]:
    """Grid lines along ``axis`` where eta_c- increases or eta_c+ decreases.

    Returns ``(fixed_values, branch, index)`` tuples; empty when the sweep
    follows the expected trend (eta_c- falls and eta_c+ rises along ``axis``).
    """
    if axis not in ("delta", "kappa", "lam"):
        raise ValueError(f"axis must be delta, kappa or lam, got {axis!r}")
    others = [a for a in ("delta", "kappa", "lam") if a != axis]
    lines: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        lines.setdefault(tuple(getattr(r, a) for a in others), []).append(r)
    bad = []
    for key, line in lines.items():
        line = sorted(line, key=lambda r: getattr(r, axis))
        for i in range(1, len(line)):
            a, b = line[i - 1], line[i]
            if b.eta_c_minus > a.eta_c_minus + tol:
                bad.append((key, "-", i))
            if b.eta_c_plus < a.eta_c_plus - tol:
                bad.append((key, "+", i))
    return bad
