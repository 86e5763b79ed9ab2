"""Quadrature helpers shared by the spectral and propagator modules."""
from __future__ import annotations

import warnings

import numpy as np
from scipy import integrate

from .errors import QuadratureError

# geometric grading ratio for algebraic endpoint singularities
_GRADING = 0.15


def adaptive(func, a, b, *, tol=1e-10, **kwargs):
    """Wrap :func:`scipy.integrate.quad`, raising on a missed tolerance.

    The absolute tolerance is ``tol``; QUADPACK's error estimate is
    trusted up to a factor of 100 before :class:`QuadratureError` is raised.
    """
    kwargs.setdefault("limit", 500)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, epsabs=tol, epsrel=min(tol, 1e-10), **kwargs)[:2]
    if not np.isfinite(val) or err > 100 * max(tol, 1e-10 * abs(val)):
        raise QuadratureError(f"quad on [{a}, {b}] missed tolerance: value={val!r}, error={err:.3e}")
    return val


def gauss_panels(edges, order):
    """Composite Gauss-Legendre nodes and weights over consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def graded_edges(upper, panel_width, *, first=None, levels=40):
    """Panel edges on ``[0, upper]``: geometric near zero, uniform beyond.

    The geometric part resolves ``x**a`` endpoint behaviour for any ``a > -1``;
    ``levels`` refinements at ratio 0.15 reach below 1e-30 relative to ``first``.
    """
    if first is None:
        first = min(panel_width, upper)
    first = min(first, upper)
    geo = first * _GRADING ** np.arange(levels, 0, -1)
    n = max(1, int(np.ceil((upper - first) / panel_width)))
    uniform = np.linspace(first, upper, n + 1) if upper > first else np.array([first])
    return np.concatenate(([0.0], geo, uniform))
