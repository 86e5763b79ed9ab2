r"""Green function ``U(t, t0)`` and fluctuation function ``V(t, t)``.

Two independent routes are provided for ``U``:

* :func:`u_volterra` integrates

  .. math:: \dot U(\tau) + i\omega_s U(\tau) + \int_0^\tau G(\tau-\tau') U(\tau') d\tau' = 0

  on a uniform grid (exact free propagation, trapezoidal step for the
  memory term, kernel integrated exactly against piecewise-linear ``U``);
* :func:`u_spectral` sums the bound-state poles and the branch-cut
  integral of the Laplace-domain propagator along the positive real axis.

``V`` likewise comes from the driven Volterra equation (:func:`v_volterra`)
or from the double-integral solution in terms of ``U`` (:func:`v_from_u`).
Times are measured from ``t0 = 0``; every kernel is time-translation
invariant, so ``U(t, t') = U(t - t')``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import linalg, signal

from . import _quad
from .boundstates import BoundState, SystemParams, eigenmodes
from .errors import StepSizeError
from .spectral import BathParams, lamb_shift_grid, memory_kernel_diag, noise_kernel_diag, ohmic_density

SPECTRAL_NODE_BUDGET = 2_000_000
_CUT_TAIL = 1e-10


@dataclass(frozen=True, eq=False)
class GreenTrajectory:
    """``U(t, t0)`` and ``V(t, t)`` sampled on a uniform grid.

    ``u_dot`` and ``v_dot`` hold exact time derivatives from the equations
    of motion when the producing route has them (the master-equation
    coefficients need them); ``v`` is ``None`` until a fluctuation route ran.
    """

    times: np.ndarray
    u: np.ndarray
    method: str
    v: np.ndarray | None = None
    u_dot: np.ndarray | None = None
    v_dot: np.ndarray | None = None
    t0: float = 0.0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def with_v(self, v, v_dot=None) -> "GreenTrajectory":
        return replace(self, v=v, v_dot=v_dot)


def default_dt(bath: BathParams) -> float:
    return min(0.01, 0.1 / bath.omega_c)


def time_grid(t_end: float, dt: float) -> np.ndarray:
    if dt <= 0 or t_end < 0:
        raise ValueError(f"need dt > 0 and t_end >= 0, got dt={dt}, t_end={t_end}")
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    return dt * np.arange(n + 1)


def _check_step(system: SystemParams, bath: BathParams, dt: float):
    fastest = max(bath.omega_c, abs(system.omega_minus), abs(system.omega_plus))
    if dt * fastest > 1.0:
        raise StepSizeError(f"dt={dt} does not resolve the fastest scale {fastest:.3g} (need dt*scale <= 1)")


def _product_weights(bath: BathParams, dt: float, n: int, order: int = 8):
    """Memory weights for ``int_0^{t_n} G(t_n - t') y(t') dt'`` with ``y`` piecewise linear.

    The kernel is integrated exactly against the hat functions (Gauss-Legendre
    on each step), so its fast ``1/omega_c`` variation costs no accuracy.
    Returns ``(first, inner, last)`` each of shape ``(2, n)`` indexed by lag:
    the sum is ``first[1] y_n + sum_{k=1}^{n-1} inner[n-k] y_k + last[n] y_0``.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    lag = np.arange(1, n + 1)
    g = memory_kernel_diag((lag[:, None] - x[None, :]) * dt, bath)
    a = np.zeros((2, n + 1), complex)
    b = np.zeros((2, n + 2), complex)
    a[:, 1:] = dt * (g * (w * (1.0 - x))).sum(-1)   # weight of the earlier grid point
    b[:, 1:-1] = dt * (g * (w * x)).sum(-1)          # weight of the later one
    inner = a[:, :n] + b[:, 1:n + 1]
    return b[:, :n], inner, a[:, :n]


def _volterra(omega_s, weights, y0, dt, source=None):
    """Solve ``y' = -i omega_s y - int_0^t diag(G)(t-t') y(t') dt' + source``.

    ``weights`` come from :func:`_product_weights` on ``N`` steps, ``y0``
    has shape ``(2, P)`` and ``source`` shape ``(N, 2, P)``.  The free part
    is propagated exactly (``exp(-i omega_s dt)``) and the remainder
    ``F = source - memory`` by the trapezoidal rule in variation-of-constants
    form.  The step is implicit only through ``first[1] y_{n+1}``; since the
    problem is linear the corrector is solved exactly.  Second order overall,
    and exact for an uncoupled bath.  Returns ``y`` and ``y_dot`` of shape
    ``(N, 2, P)``.
    """
    first, inner, last = weights
    n_steps = inner.shape[1]
    p = y0.shape[1]
    y = np.zeros((2, n_steps, p), complex)     # row-major per mode: contiguous memory slices
    ydot = np.zeros((2, n_steps, p), complex)
    y[:, 0] = y0
    kr = np.ascontiguousarray(inner[:, ::-1])
    a = -1j * np.asarray(omega_s, complex)
    prop = linalg.expm(a * dt)
    h = 0.5 * dt
    lhs_inv = np.linalg.inv(np.eye(2) + h * np.diag(first[:, 1]))
    src = (lambda n: 0.0) if source is None else (lambda n: source[n])

    f = np.zeros((2, p), complex) + src(0)
    ydot[:, 0] = a @ y[:, 0] + f
    for n in range(n_steps - 1):
        mem = np.empty((2, p), complex)
        for i in range(2):
            tail = kr[i, n_steps - 1 - n:n_steps - 1] @ y[i, 1:n + 1] if n else 0.0
            mem[i] = tail + last[i, n + 1] * y[i, 0]
        s_next = src(n + 1)
        rhs = prop @ (y[:, n] + h * f) + h * (s_next - mem)
        y[:, n + 1] = lhs_inv @ rhs
        f = s_next - mem - first[:, 1:2] * y[:, n + 1]
        ydot[:, n + 1] = a @ y[:, n + 1] + f
    return y.transpose(1, 0, 2), ydot.transpose(1, 0, 2)


def u_volterra(system: SystemParams, bath: BathParams, t_end: float, dt: float | None = None) -> GreenTrajectory:
    """Green function from the integro-differential equation of motion.

    Raises
    ------
    StepSizeError
        If ``dt`` times the fastest frequency scale exceeds one.
    """
    dt = default_dt(bath) if dt is None else float(dt)
    _check_step(system, bath, dt)
    times = time_grid(t_end, dt)
    weights = _product_weights(bath, dt, times.size)
    u, u_dot = _volterra(system.matrix, weights, np.eye(2, dtype=complex), dt)
    return GreenTrajectory(times, u, "volterra", u_dot=u_dot)


def exact_closed(system: SystemParams, times) -> np.ndarray:
    """``exp(-i omega_s t)`` for the isolated pair of modes."""
    ev, vec = np.linalg.eigh(system.matrix)
    ph = np.exp(-1j * np.multiply.outer(np.asarray(times, float), ev))
    return np.einsum("ik,tk,jk->tij", vec, ph, vec)


# --------------------------------------------------------------------------
# spectral representation


class CutSpectrum(NamedTuple):
    """Branch-cut density ``rho(omega)`` on quadrature nodes (``U_cut = sum w rho e^{-i w t}``)."""

    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray  # (n, 2, 2)


def _cut_density(omegas, system, bath, form):
    """Discontinuity ``[U~(w+i0) - U~(w-i0)] / 2pi`` at ``omegas > 0``."""
    shift = lamb_shift_grid(omegas, bath)
    j = ohmic_density(omegas, bath)
    if form == "eigen":
        em = eigenmodes(system, bath.lam)
        p = em.rotation
        rho = np.zeros((omegas.size, 2, 2))
        for k, (w, lk) in enumerate(((em.omega_minus, em.lambda_minus), (em.omega_plus, em.lambda_plus))):
            diag = lk * j / ((omegas - w - lk * shift) ** 2 + (lk * j) ** 2 / 4.0) / (2 * np.pi)
            rho += diag[:, None, None] * np.outer(p[k], p[k])
        return rho.astype(complex)
    wl, wr = bath.weights
    m = np.zeros((omegas.size, 2, 2), complex)
    m[:, 0, 0] = omegas - system.omega1 - wl * shift + 0.5j * wl * j
    m[:, 1, 1] = omegas - system.omega2 - wr * shift + 0.5j * wr * j
    m[:, 0, 1] = m[:, 1, 0] = -system.kappa
    r = np.linalg.inv(m)
    gam = np.zeros((omegas.size, 2, 2))
    gam[:, 0, 0] = 0.5 * wl * j
    gam[:, 1, 1] = 0.5 * wr * j
    # 2 R Gamma R^dagger / 2pi
    return r @ gam @ np.conj(np.swapaxes(r, 1, 2)) / np.pi


def cut_spectrum(system: SystemParams, bath: BathParams, t_max: float = 0.0, form: str = "auto",
                 order: int = 6) -> CutSpectrum:
    """Quadrature nodes and branch-cut density for times up to ``t_max``.

    Panels are no wider than ``pi / (4 t_max)`` (phase control of
    ``exp(-i w t)``) nor than a quarter of the narrowest resonance width;
    the upper limit is where the remaining cut weight drops below 1e-10.
    """
    if bath.lam == 0 and system.kappa == 0:
        raise ValueError("mode 1 is undamped (lam = 0, kappa = 0); it has no branch-cut representation")
    if form == "auto":
        form = "eigen" if bath.lam == 1.0 else "matrix"
    if form not in ("eigen", "matrix"):
        raise ValueError(f"unknown form {form!r}")
    if bath.eta == 0:
        return CutSpectrum(np.zeros(0), np.zeros(0), np.zeros((0, 2, 2), complex))

    upper = bath.cutoff()
    coarse = np.linspace(0.0, upper, 4001)[1:]
    tr = np.trace(_cut_density(coarse, system, bath, form), axis1=1, axis2=2).real
    tail = np.cumsum((tr * (coarse[1] - coarse[0]))[::-1])[::-1]
    beyond = np.nonzero(tail < _CUT_TAIL)[0]
    if beyond.size:
        upper = float(coarse[beyond[0]])

    em = eigenmodes(system, bath.lam)
    widths = [0.5 * lk * ohmic_density(w, bath) for w, lk in
              ((em.omega_minus, em.lambda_minus), (em.omega_plus, em.lambda_plus)) if w > 0]
    width = min([0.05] + [max(1e-3, 0.25 * g) for g in widths])
    if t_max > 0:
        width = min(width, np.pi / (4.0 * t_max))
    edges = _quad.graded_edges(upper, width, first=width, levels=30)
    nodes, weights = _quad.gauss_panels(edges, order)
    if nodes.size > SPECTRAL_NODE_BUDGET:
        warnings.warn(f"branch-cut quadrature needs {nodes.size} nodes for t_max={t_max}; "
                      "expect long run times", RuntimeWarning, stacklevel=2)
    return CutSpectrum(nodes, weights, _cut_density(nodes, system, bath, form))


def _cut_transform(cut: CutSpectrum, times, chunk_elems=2 ** 22):
    times = np.asarray(times, float)
    out = np.zeros((times.size, 2, 2), complex)
    if cut.nodes.size == 0:
        return out
    wr = (cut.weights[:, None, None] * cut.density).reshape(-1, 4)
    step = max(1, chunk_elems // cut.nodes.size)
    for lo in range(0, times.size, step):
        ph = np.exp(-1j * np.outer(times[lo:lo + step], cut.nodes))
        out[lo:lo + step] = (ph @ wr).reshape(-1, 2, 2)
    return out


def u_localized(bound_states: Sequence[BoundState], times) -> np.ndarray:
    """Dissipationless part ``sum_l Z(omega_l) exp(-i omega_l t)``.

    Raises
    ------
    ValueError
        If there are no bound states.
    """
    if not bound_states:
        raise ValueError("no bound states: the localized part is identically zero")
    times = np.asarray(times, float)
    out = np.zeros((times.size, 2, 2), complex)
    for st in bound_states:
        out += np.exp(-1j * st.omega_l * times)[:, None, None] * st.residue
    return out


def u_spectral(system: SystemParams, bath: BathParams, bound_states: Sequence[BoundState], times,
               form: str = "auto") -> GreenTrajectory:
    """Green function from its pole and branch-cut representation.

    ``bound_states`` must come from :func:`~twomode.boundstates.find_bound_states`
    for the same parameters.  With ``lam == 1`` the cut is evaluated in the
    eigenmode basis (two scalar Lorentzian-like densities rotated back);
    otherwise from the full 2x2 discontinuity.  Without coupling there is
    no cut and the poles are the bare frequencies ``omega_-+ > 0``.
    """
    times = np.asarray(times, float)
    if bath.eta == 0:
        return GreenTrajectory(times, exact_closed(system, times), "spectral")
    cut = cut_spectrum(system, bath, float(np.abs(times).max(initial=0.0)), form)
    u = _cut_transform(cut, times)
    if bound_states:
        u += u_localized(bound_states, times)
    return GreenTrajectory(times, u, "spectral")


def completeness(system: SystemParams, bath: BathParams, bound_states: Sequence[BoundState],
                 form: str = "auto") -> np.ndarray:
    """``sum_l Z(omega_l) + int rho``; the identity when nothing is missing."""
    cut = cut_spectrum(system, bath, 0.0, form)
    total = np.einsum("n,nij->ij", cut.weights, cut.density)
    for st in bound_states:
        total = total + st.residue
    return total


class OscillationFrequency(NamedTuple):
    value: float       # omega_l- - omega_l+ (negative)
    magnitude: float


def oscillation_frequency(bound_states: Sequence[BoundState]) -> OscillationFrequency:
    """Beat frequency between the two localized modes."""
    if len(bound_states) != 2:
        raise ValueError(f"need exactly two bound states, got {len(bound_states)}")
    lo, hi = sorted(bound_states, key=lambda st: st.omega_l)
    w = lo.omega_l - hi.omega_l
    return OscillationFrequency(w, abs(w))


def dominant_frequency(times, values, window=None, pad: int = 16) -> float:
    """Angular frequency of the strongest Fourier peak of ``values``.

    The mean is removed, a flat-top window applied and the record
    zero-padded ``pad``-fold.  The flat-top main lobe has a plateau, so the
    peak is located by a least-squares parabola through every bin of the
    lobe above half maximum rather than through three bins.
    """
    times = np.asarray(times, float)
    values = np.asarray(values)
    if window is not None:
        sel = (times >= window[0]) & (times <= window[1])
        times, values = times[sel], values[sel]
    if times.size < 8:
        raise ValueError("too few samples for a spectral estimate")
    dt = times[1] - times[0]
    x = (values - values.mean()) * signal.windows.flattop(times.size)
    n = pad * times.size
    spec = np.abs(np.fft.rfft(x, n))
    k = int(np.argmax(spec[1:-1])) + 1
    half = 0.5 * spec[k]
    lo, hi = k, k
    while lo > 1 and spec[lo - 1] > half:
        lo -= 1
    while hi < spec.size - 2 and spec[hi + 1] > half:
        hi += 1
    bins = np.arange(lo - 1, hi + 2)
    a, b, _ = np.polyfit(bins - k, spec[bins] / spec[k], 2)
    centre = k - 0.5 * b / a if a < 0 else k
    return float(2 * np.pi * centre / (n * dt))


# --------------------------------------------------------------------------
# fluctuation function


def _noise_lags(bath, times):
    """``G~`` diagonal on lags ``-(N-1) .. (N-1)``, shape ``(2, 2N-1)``."""
    pos = noise_kernel_diag(times, bath)
    return np.concatenate([np.conj(pos[:, :0:-1]), pos], axis=1)


def _require_uniform(traj: GreenTrajectory):
    if len(traj.times) < 2:
        return
    d = np.diff(traj.times)
    if not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValueError("fluctuation routes need a uniform time grid")


def v_from_u(traj: GreenTrajectory, bath: BathParams) -> GreenTrajectory:
    r"""``V(t,t) = int_0^t int_0^t U(a) G~(b-a) U(b)^\dagger da db`` by trapezoids.

    The double sum is accumulated incrementally (O(N^2) overall); the exact
    time derivative ``U(t) R(t) + h.c.`` with ``R(t) = int_0^t G~(b-t) U(b)^dagger db``
    is returned as ``v_dot``.
    """
    _require_uniform(traj)
    times, u = traj.times, traj.u
    n = len(times)
    v = np.zeros((n, 2, 2), complex)
    v_dot = np.zeros((n, 2, 2), complex)
    if bath.eta == 0 or bath.temperature == 0 or n < 2:
        return traj.with_v(v, v_dot)
    dt = traj.dt
    if dt * bath.omega_c > 0.2:
        warnings.warn(f"dt={dt} coarse against the kernel time 1/omega_c; V may be inaccurate",
                      RuntimeWarning, stacklevel=2)
    lags = _noise_lags(bath, times)
    # conj lags: G~(b - n) for b = 0..n, reversed into a contiguous slice
    udag = np.conj(np.swapaxes(u, 1, 2))
    rows = np.ascontiguousarray(udag.transpose(1, 0, 2))  # (2, N, 2): row i of U^dagger_b
    what = np.full(n, dt)
    what[0] = 0.5 * dt
    q = np.zeros((2, 2), complex)
    for k in range(n):
        # R_k[i, :] = sum_b what_b G~_i(b - k) U^dagger_b[i, :]
        g = lags[:, n - 1 - k:n]               # lags -k .. 0
        r_mat = np.stack([(what[:k + 1] * g[i]) @ rows[i, :k + 1] for i in range(2)])
        r = u[k] @ r_mat
        x_kk = u[k] @ (lags[:, n - 1][:, None] * udag[k])
        q = q + what[k] * (r + r.conj().T - what[k] * x_kk)
        if k:
            v[k] = q - 0.5 * what[k] * (r + r.conj().T) + 0.25 * what[k] ** 2 * x_kk
            r_end = r - 0.5 * what[k] * x_kk   # trapezoid with half weight at b = k
            v_dot[k] = r_end + r_end.conj().T
    return traj.with_v(v, v_dot)


def v_volterra(system: SystemParams, bath: BathParams, traj: GreenTrajectory, block: int = 128) -> GreenTrajectory:
    """``V(t, t)`` from the driven equation of motion in its first time argument.

    For every final time ``t`` the column ``V(., t)`` obeys the same
    Volterra equation as ``U`` with source ``int_0^t G~(tau - tau') U(t - tau')^dagger dtau'``
    and ``V(0, t) = 0``.  Columns are independent and solved in blocks; the
    source for a block is an FFT convolution.  Only the equal-time values
    and ``d/dt V(t,t) = D + D^dagger`` (``D`` the right-hand side at
    ``tau = t``) are kept.
    """
    _require_uniform(traj)
    times, u = traj.times, traj.u
    n = len(times)
    v = np.zeros((n, 2, 2), complex)
    v_dot = np.zeros((n, 2, 2), complex)
    if bath.eta == 0 or bath.temperature == 0 or n < 2:
        return traj.with_v(v, v_dot)
    dt = traj.dt
    _check_step(system, bath, dt)
    lags = _noise_lags(bath, times)
    weights = _product_weights(bath, dt, n)
    udag = np.conj(np.swapaxes(u, 1, 2))
    for m0 in range(1, n, block):
        cols = np.arange(m0, min(n, m0 + block))
        m1 = int(cols[-1]) + 1
        # a[b, k] = w_k U^dagger(t_m - t_k), trapezoid in k over [0, m]
        a = np.zeros((cols.size, m1, 2, 2), complex)
        for b, m in enumerate(cols):
            w = np.full(m + 1, dt)
            w[0] = w[-1] = 0.5 * dt
            a[b, :m + 1] = w[:, None, None] * udag[m::-1]
        src = np.empty((m1, 2, cols.size, 2), complex)
        for i in range(2):
            conv = signal.fftconvolve(lags[i][None, :, None], a[:, :, i, :], axes=1)
            src[:, i] = conv[:, n - 1:n - 1 + m1].transpose(1, 0, 2)
        y, ydot = _volterra(system.matrix, tuple(wt[:, :m1] for wt in weights), np.zeros((2, 2 * cols.size), complex), dt,
                            src.reshape(m1, 2, 2 * cols.size))
        y = y.reshape(m1, 2, cols.size, 2)
        ydot = ydot.reshape(m1, 2, cols.size, 2)
        for b, m in enumerate(cols):
            v[m] = 0.5 * (y[m, :, b] + y[m, :, b].conj().T)   # Hermitian up to discretization error
            d = ydot[m, :, b]
            v_dot[m] = d + d.conj().T
    return traj.with_v(v, v_dot)
