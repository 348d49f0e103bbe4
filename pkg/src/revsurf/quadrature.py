"""Quadrature for integrands with inverse-square-root factors.

Every integral in the geodesic layer has the shape

    I = integral over [lo, hi] of  h(t) / sqrt(f(t)^2 - nu^2)  dt

which is singular (but integrable) wherever f = nu, and that can only
happen at an endpoint of a monotone branch.  Substituting t = end +/- u^2
makes the integrand bounded and smooth, so plain Gauss-Legendre panels and
scipy's adaptive rule both converge fast.  Both endpoints are substituted
unconditionally; the substitution is harmless where there is no
singularity.
"""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad


@lru_cache(maxsize=None)
def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _half_nodes(n: int, a: float, length: float, from_low: bool):
    """GL nodes/weights for one substituted half of [lo, hi].

    from_low: t = a + u^2 on u in [0, sqrt(length)];
    otherwise t = a - u^2 (a is the upper endpoint).
    """
    x, w = _gl(n)
    umax = np.sqrt(length)
    u = 0.5 * umax * (x + 1.0)
    jac = 2.0 * u * (0.5 * umax)
    t = a + u * u if from_low else a - u * u
    return t, w * jac


def branch_nodes(lo: float, hi: float, n: int):
    """Substituted GL nodes and weights covering [lo, hi] (both halves)."""
    mid = 0.5 * (lo + hi)
    t1, w1 = _half_nodes(n, lo, mid - lo, True)
    t2, w2 = _half_nodes(n, hi, hi - mid, False)
    return np.concatenate([t1, t2]), np.concatenate([w1, w2])


def fixed_branch_integrals(f_vals: np.ndarray, weights: np.ndarray,
                           h_vals: np.ndarray, nus: np.ndarray) -> np.ndarray:
    """Vectorised I(nu) over a shared node set.

    f_vals, h_vals, weights: shape (m,); nus: shape (k,).  Entries where
    f <= nu are clamped; callers mask invalid nu separately.
    """
    q = f_vals[None, :] ** 2 - nus[:, None] ** 2
    q = np.maximum(q, 1e-300)
    return ((h_vals * weights)[None, :] / np.sqrt(q)).sum(axis=1)


def _layer_breaks(f_scl, nu, end, mid, from_low, umax):
    """Split points resolving the 1/sqrt boundary layer at a turning end.

    When f(end) ~ nu the transformed integrand spikes over a u-range of
    width sqrt(f^{-1}(2 nu) - end); feeding multiples of that scale to the
    adaptive rule keeps the subdivision count low.
    """
    if nu <= 0 or abs(f_scl(end)) > 1.5 * nu:
        return None
    lo_u, hi_u = 0.0, umax
    # Bisect f(t(u)) = 2 nu in the u variable.
    g = lambda u: f_scl(end + u * u if from_low else end - u * u) - 2.0 * nu
    if g(hi_u) <= 0:
        return None
    for _ in range(50):
        m = 0.5 * (lo_u + hi_u)
        if g(m) <= 0:
            lo_u = m
        else:
            hi_u = m
    u_star = hi_u
    if u_star > 0.05 * umax:
        return None  # no thin layer; plain adaptivity is cheaper
    pts = [c * u_star for c in (1.0, 4.0, 16.0, 64.0)]
    return [p for p in pts if 0.0 < p < umax] or None


def adaptive_branch_integral(h_scl, f_scl, nu: float, lo: float, hi: float,
                             tol: float, interior_points=()) -> float:
    """Adaptive version of the substituted integral, scalar callables.

    interior_points: optional t locations of near-singular dips of f inside
    (lo, hi), forwarded to the adaptive rule as split points.
    """
    if hi - lo < 1e-13 * max(1.0, abs(hi)):
        return 0.0
    mid = 0.5 * (lo + hi)

    def left(u):
        t = lo + u * u
        fv = f_scl(t)
        q = max(fv * fv - nu * nu, (3e-16 * fv) ** 2)
        return 2.0 * u * h_scl(t) / np.sqrt(q)

    def right(u):
        t = hi - u * u
        fv = f_scl(t)
        q = max(fv * fv - nu * nu, (3e-16 * fv) ** 2)
        return 2.0 * u * h_scl(t) / np.sqrt(q)

    eps_r = max(tol, 1e-13)
    eps_a = eps_r * 1e-2
    umax_l = np.sqrt(mid - lo)
    umax_r = np.sqrt(hi - mid)
    pts_l = sorted(np.sqrt(p - lo) for p in interior_points if lo < p < mid)
    pts_r = sorted(np.sqrt(hi - p) for p in interior_points if mid <= p < hi)
    pts_l = pts_l or _layer_breaks(f_scl, nu, lo, mid, True, umax_l)
    pts_r = pts_r or _layer_breaks(f_scl, nu, hi, mid, False, umax_r)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        v1, _ = quad(left, 0.0, umax_l, epsabs=eps_a, epsrel=eps_r,
                     limit=300, points=pts_l or None)
        v2, _ = quad(right, 0.0, umax_r, epsabs=eps_a, epsrel=eps_r,
                     limit=300, points=pts_r or None)
    return v1 + v2


def leg_polyline(profile, nu: float, t_from: float, t_to: float, n: int):
    """Sample one monotone branch of a geodesic as (ds, dtheta, t) arrays.

    Returns cumulative arclength s, cumulative angle theta (both starting
    at 0) and the radius samples t, ordered along the traversal direction.
    The u-substitution at both ends keeps the increments accurate across
    turning points; cumulative sums use the trapezoid rule in u.
    """
    lo, hi = (t_from, t_to) if t_to >= t_from else (t_to, t_from)
    if hi - lo < 1e-15 or nu < 0:
        z = np.zeros(2)
        return z, z, np.full(2, t_from)
    if nu == 0.0:
        t = np.linspace(t_from, t_to, max(n, 2))
        s = np.abs(t - t_from)
        return s, np.zeros_like(t), t

    mid = 0.5 * (lo + hi)
    m = max(8, n // 2)
    u1 = np.linspace(0.0, np.sqrt(mid - lo), m)
    u2 = np.linspace(np.sqrt(hi - mid), 0.0, m)
    t_asc = np.concatenate([lo + u1 * u1, hi - u2[1:] * u2[1:]])
    # d t/d u along the ascending parametrisation
    dtdu = np.concatenate([2.0 * u1, 2.0 * u2[1:]])
    du = np.concatenate([np.diff(u1), -np.diff(u2)])

    f_t = profile.f(t_asc)
    q = np.maximum(f_t * f_t - nu * nu, 1e-300)
    root = np.sqrt(q)
    ds_dt = f_t / root
    dth_dt = nu / (f_t * root)

    def cumtrap(g):
        inc = 0.5 * (g[1:] + g[:-1]) * du
        return np.concatenate([[0.0], np.cumsum(inc)])

    s_asc = cumtrap(ds_dt * dtdu)
    th_asc = cumtrap(dth_dt * dtdu)
    if t_to >= t_from:
        return s_asc, th_asc, t_asc
    s = s_asc[-1] - s_asc[::-1]
    th = th_asc[-1] - th_asc[::-1]
    return s, th, t_asc[::-1]
