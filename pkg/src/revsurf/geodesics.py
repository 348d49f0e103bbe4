"""Geodesic tracing, angular advance, two-point connection, and distance.

Geodesics are unit speed.  Along any geodesic the quantity
nu = f(t) sin(angle to the meridian) = f(t)^2 |theta'| is conserved, and
on monotone radial branches |t'| = sqrt(f^2 - nu^2)/f.  Tracing integrates
the full second-order system so that conservation of nu stays available as
an independent diagnostic of the integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import shooting
from .errors import (BranchViolation, NoConnectionFound, PoleLaunchWithSpin,
                     ValidationError)
from .profiles import RadialProfile
from .quadrature import adaptive_branch_integral, leg_polyline

TWO_PI = 2.0 * math.pi
_ANGLE_EPS = 1e-12


class _MultiDense:
    """Dense output stitched from consecutive integration segments."""

    def __init__(self, segments):
        self.segments = segments
        self.bounds = np.asarray([seg.t_max for seg in segments])

    def __call__(self, s):
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((4, s_arr.size))
        idx = np.searchsorted(self.bounds, s_arr, side="left")
        idx = np.clip(idx, 0, len(self.segments) - 1)
        for i in np.unique(idx):
            mask = idx == i
            out[:, mask] = self.segments[i](s_arr[mask])
        if np.ndim(s) == 0:
            return out[:, 0]
        return out


@dataclass(frozen=True)
class SurfacePoint:
    """Geodesic polar coordinates; the pole is pinned to theta = 0."""

    t: float
    theta: float

    def __post_init__(self):
        if self.t < 0:
            raise ValidationError(f"radius must be non-negative, got {self.t}")
        th = self.theta % TWO_PI
        if self.t == 0.0:
            th = 0.0
        object.__setattr__(self, "theta", th)


def angular_separation(a: SurfacePoint, b: SurfacePoint) -> float:
    """Shorter angular distance between the meridians of a and b."""
    d = abs(b.theta - a.theta) % TWO_PI
    return min(d, TWO_PI - d)


class GeodesicArc:
    """A traced geodesic: launch data plus arclength samples.

    Samples are (s, t, theta, branch) with branch the sign of t'.  The arc
    is immutable once filled; trace() returns a new instance.
    """

    def __init__(self, surface: RadialProfile, start: SurfacePoint, psi: float,
                 nu: float, orientation: int = 1):
        self.surface = surface
        self.start = start
        self.psi = float(psi)
        self.nu = float(nu)
        self.orientation = orientation  # sign of theta'
        self.s = np.empty(0)
        self.t = np.empty(0)
        self.theta = np.empty(0)
        self.branch = np.empty(0, dtype=int)
        self.turnings: list[float] = []
        self.s_end = 0.0
        self.exit_reason: Optional[str] = None  # "horizon" | "pole" | None
        self.pattern_legs: Optional[tuple] = None
        self._dense = None
        self._pole_s: Optional[float] = None

    # -- evaluation -----------------------------------------------------------

    def point_at(self, s: float) -> SurfacePoint:
        t, th = self.coords_at(s)
        return SurfacePoint(t, th % TWO_PI)

    def coords_at(self, s: float):
        if s < -1e-12 or s > self.s_end + 1e-9:
            raise ValidationError(f"s = {s:g} outside traced range [0, {self.s_end:g}]")
        s = min(max(s, 0.0), self.s_end)
        if self._dense is not None:
            t, th = self._dense(s)[:2]
            return float(t), float(th)
        if self.nu == 0.0:
            t0, th0 = self.start.t, self.start.theta
            if self.psi < math.pi / 2:
                return t0 + s, th0
            if s <= t0:
                return t0 - s, th0
            return s - t0, th0 + math.pi
        i = int(np.searchsorted(self.s, s))
        i = min(max(i, 1), len(self.s) - 1)
        w = (s - self.s[i - 1]) / max(self.s[i] - self.s[i - 1], 1e-300)
        t = self.t[i - 1] + w * (self.t[i] - self.t[i - 1])
        th = self.theta[i - 1] + w * (self.theta[i] - self.theta[i - 1])
        return float(t), float(th)

    # -- diagnostics ----------------------------------------------------------

    def clairaut_residual(self, n: int = 2001) -> float:
        """Max |f(t)^2 |theta'| - nu| along the trace.

        Uses the f^2 theta' form of the conserved quantity, which stays
        well conditioned when f grows large and the angle to the meridian
        collapses.
        """
        if self.s_end == 0.0:
            return 0.0
        if self._dense is None:
            return 0.0  # analytic meridian or quadrature-built branch
        ss = np.linspace(0.0, self.s_end, n)
        states = self._dense(ss)
        t, w = states[0], states[3]
        fv = self.surface.f(t)
        return float(np.max(np.abs(fv * fv * np.abs(w) - self.nu)))

    def unit_speed_residual(self, n: int = 2001) -> float:
        if self._dense is None or self.s_end == 0.0:
            return 0.0
        ss = np.linspace(0.0, self.s_end, n)
        t, _, u, w = self._dense(ss)
        fv = self.surface.f(t)
        return float(np.max(np.abs(u * u + fv * fv * w * w - 1.0)))

    def min_radius(self) -> float:
        return float(np.min(self.t)) if self.t.size else self.start.t

    def validate(self, tol: float = 1e-7) -> None:
        """Check the branch identities on the stored samples."""
        if self.s.size == 0:
            return
        if np.any(np.diff(self.s) <= 0):
            raise ValidationError("arc samples must be strictly increasing in s")
        fv = self.surface.f(self.t)
        q = np.maximum(fv * fv - self.nu * self.nu, 0.0)
        moving = np.abs(self.branch) == 1
        lhs = np.abs(self._t_prime_samples())[moving]
        rhs = (np.sqrt(q) / fv)[moving]
        if lhs.size and float(np.max(np.abs(lhs - rhs))) > max(tol, 1e-5):
            raise ValidationError("radial speed violates the branch identity")

    def _t_prime_samples(self):
        if self._dense is not None:
            return self._dense(self.s)[2]
        dt = np.gradient(self.t, self.s, edge_order=1)
        return dt


def launch(surface: RadialProfile, p0: SurfacePoint, psi: float) -> GeodesicArc:
    """Prepare an untraced arc from p0 with launch angle psi to the meridian."""
    if not (0.0 <= psi <= math.pi + 1e-12):
        raise ValidationError(f"launch angle must lie in [0, pi], got {psi}")
    if p0.t == 0.0:
        if abs(psi) > _ANGLE_EPS:
            raise PoleLaunchWithSpin("geodesics from the pole are meridians")
        return GeodesicArc(surface, p0, 0.0, 0.0)
    if p0.t > surface.tmax:
        raise ValidationError("start point lies beyond the horizon")
    nu = surface.f(p0.t) * math.sin(psi)
    if psi in (0.0, math.pi):
        nu = 0.0
    return GeodesicArc(surface, p0, psi, nu)


def trace(surface: RadialProfile, arc: GeodesicArc, s_max: float) -> GeodesicArc:
    """Integrate the geodesic to arclength s_max (new arc instance).

    Traces stopping at the horizon carry exit_reason = "horizon" and a
    shortened s_end; meridians crossing the pole continue on the opposite
    meridian.
    """
    if s_max <= 0:
        raise ValidationError("s_max must be positive")
    out = GeodesicArc(surface, arc.start, arc.psi, arc.nu, arc.orientation)
    t0, th0 = arc.start.t, arc.start.theta

    if arc.nu == 0.0:
        return _trace_meridian(surface, out, t0, th0, s_max)

    rtol = max(surface.tol.ode_tol, 1e-13)
    atol = [rtol * 1e-2, rtol * 1e-2, rtol * 1e-2, 0.0]
    f_s, fp_s = surface._f_scl, surface._fp_scl

    def rhs(s, y):
        t, th, u, w = y
        fv = f_s(t)
        fp = fp_s(t)
        return (u, w, fv * fp * w * w, -2.0 * fp / fv * u * w)

    def ev_turn(s, y):
        return y[2]

    def ev_horizon(s, y):
        return y[0] - surface.tmax

    ev_horizon.terminal = True
    ev_horizon.direction = 1.0

    # Restart the stepper whenever the trace crosses a curvature breakpoint
    # radius: the right-hand side has a kink there and stepping across it
    # silently costs accuracy.
    break_events = []
    for b in surface.g_breaks:
        def ev_break(s, y, _b=b):
            return y[0] - _b
        ev_break.terminal = True
        ev_break.direction = 0.0
        break_events.append(ev_break)

    u0 = math.cos(arc.psi)
    w0 = arc.orientation * math.sin(arc.psi) / surface.f(t0)
    y = np.array([t0, th0, u0, w0])
    s0 = 0.0
    segments = []
    turnings = []
    exit_reason = None
    for _ in range(200):
        sol = solve_ivp(rhs, (s0, s_max), y, method="DOP853",
                        rtol=rtol, atol=atol, dense_output=True,
                        events=tuple([ev_turn, ev_horizon] + break_events))
        if sol.status < 0:
            raise ValidationError(f"geodesic integration failed: {sol.message}")
        segments.append(sol.sol)
        turnings.extend(float(s) for s in sol.t_events[0])
        s0 = float(sol.t[-1])
        y = sol.y[:, -1].copy()
        if sol.status == 0 or s_max - s0 < 1e-12:
            break
        if len(sol.t_events[1]):
            exit_reason = "horizon"
            break
        # Nudge across the breakpoint so the restart cannot re-trigger.
        ds = max(1e-12, 1e-10 * s_max)
        y = y + ds * np.asarray(rhs(s0, y))
        s0 += ds
    s_end = s0
    out.s_end = s_end
    out._dense = _MultiDense(segments)
    out.exit_reason = exit_reason
    out.turnings = [s for s in turnings if 1e-12 < s < s_end - 1e-12]

    n = max(129, min(4001, int(16 * s_end) + 1))
    grid = np.unique(np.concatenate([np.linspace(0.0, s_end, n),
                                     np.asarray(out.turnings)]))
    states = out._dense(grid)
    out.s = grid
    out.t = states[0]
    out.theta = states[1]
    out.branch = np.sign(states[2]).astype(int)
    for st in out.turnings:
        i = int(np.argmin(np.abs(grid - st)))
        out.branch[i] = 0
    return out


def _trace_meridian(surface, out, t0, th0, s_max):
    inward = out.psi >= math.pi / 2 and t0 > 0.0
    if not inward:
        s_end = min(s_max, surface.tmax - t0)
        out.exit_reason = "horizon" if s_end < s_max else None
        grid = np.linspace(0.0, max(s_end, 1e-12), 129)
        out.s, out.t = grid, t0 + grid
        out.theta = np.full_like(grid, th0)
        out.branch = np.ones(grid.size, dtype=int)
        out.s_end = float(grid[-1])
        return out
    s_end = min(s_max, t0 + surface.tmax)
    out.exit_reason = "horizon" if s_end < s_max else None
    grid = np.unique(np.concatenate([np.linspace(0.0, s_end, 257), [min(t0, s_end)]]))
    tt = np.abs(t0 - grid)
    th = np.where(grid <= t0, th0, th0 + math.pi)
    out.s, out.t, out.theta = grid, tt, th
    out.branch = np.where(grid < t0, -1, 1).astype(int)
    out.s_end = float(grid[-1])
    if s_end >= t0:
        out._pole_s = float(t0)
    return out


def theta_advance(surface: RadialProfile, nu: float, t_lo: float,
                  t_hi: float) -> float:
    """Angular advance of a monotone branch between radii t_lo and t_hi.

    Finite even when f = nu at an endpoint (turning point).  t_hi = inf is
    allowed on profiles with a tail annotation and settled f'; the beyond-
    horizon part is the closed form for an affine warping.
    """
    if nu < 0:
        raise ValidationError("Clairaut constant must be non-negative")
    if nu == 0.0:
        return 0.0
    if t_lo < 0 or t_lo >= t_hi:
        raise ValidationError("need 0 <= t_lo < t_hi")

    cap = math.isinf(t_hi)
    hi = surface.tmax if cap else t_hi
    if hi > surface.tmax + 1e-12:
        raise ValidationError("t_hi beyond horizon (pass inf to extrapolate)")
    if cap:
        if surface.tail is None:
            raise ValidationError("infinite advance needs a tail annotation")
        fp_end = surface.f_prime(surface.tmax)
        fp_mid = surface.f_prime(0.95 * surface.tmax)
        if fp_end <= 0 or abs(fp_end - fp_mid) > 1e-3 * max(1.0, abs(fp_end)):
            raise ValidationError("f' has not settled; cannot extrapolate advance")

    lo_f, hi_f = surface.f(t_lo), surface.f(hi)
    tg, fg = surface.fine_t, surface.fine_f
    i, j = np.searchsorted(tg, t_lo, "right"), np.searchsorted(tg, hi, "left")
    interior = float(np.min(fg[i:j])) if j > i else math.inf
    if min(lo_f, hi_f) < nu - 1e-9 or interior < nu - 1e-9:
        raise BranchViolation("f(t) < nu inside the requested branch")

    f_s = surface._f_scl
    val = adaptive_branch_integral(lambda t: nu / f_s(t), f_s,
                                   nu, t_lo, hi, surface.tol.quad_tol)
    if cap:
        b = surface.f_prime(surface.tmax)
        val += (math.pi / 2.0 - math.asin(min(nu / surface.f(surface.tmax), 1.0))) / b
    return val


def _arc_from_candidate(surface, A: SurfacePoint, sgn: int,
                        cand: shooting.Candidate, samples_per_leg=240) -> GeodesicArc:
    """Materialise a shooting candidate as a sampled arc from A."""
    t0 = A.t
    first_from, first_to = cand.legs[0]
    outward = first_to >= first_from
    ratio = min(cand.nu / surface.f(t0), 1.0)
    psi = math.asin(ratio) if outward else math.pi - math.asin(ratio)
    arc = GeodesicArc(surface, A, psi, cand.nu, orientation=sgn)
    ss, tt, th = [np.zeros(1)], [np.full(1, t0)], [np.zeros(1)]
    s_off, th_off = 0.0, 0.0
    branches = [np.array([1 if outward else -1])]
    turnings = []
    for (t_from, t_to) in cand.legs:
        if abs(t_to - t_from) < 1e-15:
            continue
        s_leg, th_leg, t_leg = leg_polyline(surface, cand.nu, t_from, t_to,
                                            samples_per_leg)
        ss.append(s_off + s_leg[1:])
        th.append(th_off + th_leg[1:])
        tt.append(t_leg[1:])
        branches.append(np.full(t_leg.size - 1, 1 if t_to >= t_from else -1))
        s_off += float(s_leg[-1])
        th_off += float(th_leg[-1])
        turnings.append(s_off)
    arc.s = np.concatenate(ss)
    arc.t = np.concatenate(tt)
    arc.theta = A.theta + sgn * np.concatenate(th)
    arc.branch = np.concatenate(branches)
    arc.s_end = float(arc.s[-1])
    arc.turnings = turnings[:-1]  # the last joint is the arrival point
    arc.pattern_legs = cand.legs
    keep = np.concatenate([[True], np.diff(arc.s) > 1e-14])
    arc.s, arc.t, arc.theta, arc.branch = (arc.s[keep], arc.t[keep],
                                           arc.theta[keep], arc.branch[keep])
    return arc


def _meridian_candidate(surface, A, B):
    psi = 0.0 if B.t > A.t else math.pi
    arc = GeodesicArc(surface, A, psi, 0.0)
    arc = _trace_meridian(surface, arc, A.t, A.theta, abs(B.t - A.t))
    return arc, abs(B.t - A.t)


def _pole_candidate(surface, A, B):
    """Concatenated meridians through the pole; a geodesic when the
    separation is pi, otherwise a legitimate path upper bound."""
    arc = GeodesicArc(surface, A, math.pi, 0.0)
    n = 129
    s1 = np.linspace(0.0, A.t, n)
    s2 = np.linspace(0.0, B.t, n)[1:]
    arc.s = np.concatenate([s1, A.t + s2])
    arc.t = np.concatenate([A.t - s1, s2])
    arc.theta = np.concatenate([np.full(n, A.theta), np.full(n - 1, B.theta)])
    arc.branch = np.concatenate([-np.ones(n, dtype=int), np.ones(n - 1, dtype=int)])
    arc.s_end = A.t + B.t
    arc._pole_s = A.t
    return arc, A.t + B.t


def connect(surface: RadialProfile, A: SurfacePoint, B: SurfacePoint,
            max_turnings: Optional[int] = None):
    """All found geodesic connections from A to B, sorted by length.

    Returns a list of (GeodesicArc, length).  The through-pole meridian
    concatenation is always included (it is the minimiser the polar chart
    hides when the separation is pi).  The enumeration is capped at
    max_turnings turning points and reported as found, never as exhaustive.
    """
    if max_turnings is None:
        max_turnings = surface.tol.max_turnings
    if A.t > surface.tmax or B.t > surface.tmax:
        raise ValidationError("points must lie within the horizon")
    if abs(A.t - B.t) < 1e-14 and angular_separation(A, B) < _ANGLE_EPS:
        raise ValidationError("connect needs two distinct points")

    dtheta = angular_separation(A, B)
    raw = (B.theta - A.theta) % TWO_PI
    sgn = 1 if raw <= math.pi else -1

    out = []
    if A.t == 0.0 or B.t == 0.0:
        # Meridian from/to the pole.
        if A.t == 0.0:
            arc = GeodesicArc(surface, A, 0.0, 0.0)
            arc = _trace_meridian(surface, arc, 0.0, B.theta, B.t)
            return [(arc, B.t)]
        arc, ln = _meridian_candidate(surface, A, SurfacePoint(0.0, 0.0))
        return [(arc, ln)]

    if dtheta < _ANGLE_EPS and abs(A.t - B.t) > 1e-14:
        out.append(_meridian_candidate(surface, A, B))
    if dtheta > _ANGLE_EPS:
        for cand in shooting.connect_candidates(surface, A.t, B.t, dtheta,
                                                max_turnings,
                                                surface.tol.quad_tol):
            arc = _arc_from_candidate(surface, A, sgn, cand)
            out.append((arc, cand.length))
    out.append(_pole_candidate(surface, A, B))

    if not out:
        raise NoConnectionFound(
            f"no connection within {max_turnings} turnings for separation {dtheta:.3g}")
    out.sort(key=lambda p: (p[1], len(p[0].turnings), p[0].nu))
    return out


def distance(surface: RadialProfile, A: SurfacePoint, B: SurfacePoint) -> float:
    """Length of the shortest found connection (symmetric within root_tol)."""
    if abs(A.t - B.t) < 1e-14 and angular_separation(A, B) < _ANGLE_EPS:
        return 0.0
    return connect(surface, A, B)[0][1]
