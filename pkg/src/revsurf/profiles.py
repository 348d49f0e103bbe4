"""Model surfaces of revolution.

A profile carries the radial curvature G(t), the warping f(t) solving
f'' + G f = 0 with f(0) = 0, f'(0) = 1, and its derivative, on a finite
horizon [0, T_max] with an optional power-law tail annotation for what
lies beyond.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

from .descriptors import (ClosedForm, SampledGrid, hermite_fast,
                          piecewise_breakpoints, stitched_hermite_fast)
from .errors import InvalidWarping, NonPositiveWarping, OdeFailure, ValidationError

_FINE_N = 8193


@dataclass(frozen=True)
class Tolerances:
    """Numerical control knobs shared by every operation."""

    ode_tol: float = 1e-12
    quad_tol: float = 1e-10
    root_tol: float = 1e-10
    grid_n: int = 512
    max_turnings: int = 2

    def __post_init__(self):
        for name in ("ode_tol", "quad_tol", "root_tol"):
            v = getattr(self, name)
            if not (0.0 < v <= 1e-2):
                raise ValidationError(f"{name} must lie in (0, 1e-2], got {v}")
        if self.grid_n < 64:
            raise ValidationError(f"grid_n must be >= 64, got {self.grid_n}")
        if self.max_turnings < 0:
            raise ValidationError("max_turnings must be >= 0")


@dataclass(frozen=True)
class TailBound:
    """Decay annotation for t > T_max: |G(t)| <= C * t**(-beta)."""

    C: float
    beta: float

    def __post_init__(self):
        if self.C < 0:
            raise ValidationError("tail constant C must be non-negative")


@dataclass(frozen=True)
class SurfaceClass:
    """Monotonicity/sign classification of the radial curvature function."""

    von_mangoldt_from: Optional[float]
    cartan_hadamard_from: Optional[float]


class RadialProfile:
    """A model surface (curvature, warping, derivative) on [0, T_max].

    Immutable after construction; all operations on it are pure, so any
    number of them may run concurrently on the same instance.
    """

    def __init__(self, *, tmax, f_vec, f_scl, fp_vec, fp_scl, g_vec, g_scl,
                 tail=None, tol=None, kind="curvature", g_breaks=()):
        self.tmax = float(tmax)
        self.tail = tail
        self.tol = tol or Tolerances()
        self.kind = kind
        self.g_breaks = tuple(g_breaks)
        self._f_vec = f_vec
        self._f_scl = f_scl
        self._fp_vec = fp_vec
        self._fp_scl = fp_scl
        self._g_vec = g_vec
        self._g_scl = g_scl
        n = self.tol.grid_n
        self.t_grid = np.linspace(0.0, self.tmax, n)
        self.f_grid = self.f(self.t_grid)
        self.fp_grid = self.f_prime(self.t_grid)
        self.G_grid = self.G(self.t_grid)
        self._validate()

    # -- evaluation ---------------------------------------------------------

    def f(self, t):
        if isinstance(t, (float, int)):
            return self._f_scl(t)
        if np.ndim(t) == 0:
            return self._f_scl(float(t))
        return self._f_vec(np.asarray(t, dtype=float))

    def f_prime(self, t):
        if isinstance(t, (float, int)):
            return self._fp_scl(t)
        if np.ndim(t) == 0:
            return self._fp_scl(float(t))
        return self._fp_vec(np.asarray(t, dtype=float))

    def G(self, t):
        if isinstance(t, (float, int)):
            return self._g_scl(t)
        if np.ndim(t) == 0:
            return self._g_scl(float(t))
        return self._g_vec(np.asarray(t, dtype=float))

    # -- invariants ---------------------------------------------------------

    def _validate(self):
        tg, fg = self.t_grid, self.f_grid
        if abs(fg[0]) > 1e-9:
            raise InvalidWarping(f"f(0) = {fg[0]:.3e}, expected 0")
        if abs(self.fp_grid[0] - 1.0) > 1e-7:
            raise InvalidWarping(f"f'(0) = {self.fp_grid[0]:.6f}, expected 1")
        if np.any(fg[1:] <= 0.0):
            bad = tg[1:][fg[1:] <= 0.0][0]
            raise NonPositiveWarping(f"f(t) <= 0 at t = {bad:.6g}")
        res = self.ode_residual()
        h = tg[1] - tg[0]
        scale = max(1.0, float(np.max(np.abs(self.G_grid)) * np.max(fg)))
        tol = 5.0 * h * h * scale + 1e4 * self.tol.ode_tol * scale
        if res > tol:
            raise ValidationError(
                f"warping ODE residual {res:.3e} exceeds consistency tolerance {tol:.3e}"
            )

    def ode_residual(self) -> float:
        """Max |f'' + G f| over interior grid nodes, f'' by second differences.

        Nodes adjacent to curvature breakpoints are skipped: the second
        difference is not a consistent estimator across a kink.
        """
        t, fv, g = self.t_grid, self.f_grid, self.G_grid
        h = t[1] - t[0]
        fpp = (fv[2:] - 2.0 * fv[1:-1] + fv[:-2]) / (h * h)
        res = np.abs(fpp + g[1:-1] * fv[1:-1])
        keep = np.ones(res.size, dtype=bool)
        for b in self.g_breaks:
            keep &= np.abs(t[1:-1] - b) > 1.5 * h
        return float(np.max(res[keep])) if np.any(keep) else 0.0

    # -- cached helpers used by the geodesic layers --------------------------

    @cached_property
    def fine_t(self) -> np.ndarray:
        return np.linspace(0.0, self.tmax, _FINE_N)

    @cached_property
    def fine_f(self) -> np.ndarray:
        return self.f(self.fine_t)

    @cached_property
    def fine_fp(self) -> np.ndarray:
        return self.f_prime(self.fine_t)

    def min_f_between(self, lo: float, hi: float) -> float:
        """Min of f over [lo, hi] from the fine grid plus exact endpoints."""
        t, fv = self.fine_t, self.fine_f
        i = np.searchsorted(t, lo, side="left")
        j = np.searchsorted(t, hi, side="right")
        m = min(self.f(lo), self.f(hi))
        if j > i:
            m = min(m, float(np.min(fv[i:j])))
        return m

    @cached_property
    def curvature_mass_primitive(self):
        """W(t) = integral of G(s) f(s) ds from 0 to t, as a fast spline."""
        breaks = [b for b in self.g_breaks if 0 < b < self.tmax]
        nodes = np.union1d(np.linspace(0.0, self.tmax, 2049), np.asarray(breaks))
        vals = [0.0]
        for a, b in zip(nodes[:-1], nodes[1:]):
            seg, _ = quad(lambda s: self.G(s) * self.f(s), a, b,
                          epsabs=1e-13, epsrel=1e-12, limit=100)
            vals.append(vals[-1] + seg)
        w = np.asarray(vals)
        return stitched_hermite_fast(nodes, w,
                                     lambda x: self.G(x) * self.f(x), breaks)

    def __repr__(self):
        return f"RadialProfile(kind={self.kind!r}, tmax={self.tmax:g}, tail={self.tail})"


# -- construction ------------------------------------------------------------


def _series_seed(g0: float, g1: float, t0: float):
    """Warping series f = t - G(0) t^3/6 - G'(0) t^4/12 near the pole."""
    f0 = t0 - g0 * t0**3 / 6.0 - g1 * t0**4 / 12.0
    fp0 = 1.0 - g0 * t0**2 / 2.0 - g1 * t0**3 / 3.0
    return f0, fp0


def _integrate_warping(g_scl: Callable[[float], float], tmax: float,
                       tol: Tolerances, breaks, g0: float, g1: float):
    """Solve f'' + G f = 0 on [0, tmax]; returns node arrays (t, f, f').

    Integration restarts at every curvature breakpoint so the stepper never
    straddles a kink.  The first 1e-3 of the axis comes from the pole series
    (the ODE is regular there, but this keeps f/t -> 1 clean to full
    precision).
    """
    t0 = min(1e-3, 1e-3 * tmax)
    f0, fp0 = _series_seed(g0, g1, t0)
    stops = [t0] + [b for b in breaks if t0 < b < tmax] + [tmax]
    rtol = max(tol.ode_tol, 1e-13)
    atol = rtol * 1e-3
    fine = np.union1d(np.linspace(0.0, tmax, _FINE_N), np.asarray(stops))

    pre = fine[fine < t0]
    ts = [np.append(pre, t0)]
    fs = [np.append(pre - g0 * pre**3 / 6.0 - g1 * pre**4 / 12.0, f0)]
    fps = [np.append(1.0 - g0 * pre**2 / 2.0 - g1 * pre**3 / 3.0, fp0)]
    y = np.array([f0, fp0])
    for a, b in zip(stops[:-1], stops[1:]):
        inner = fine[(fine > a) & (fine < b)]
        t_eval = np.concatenate([inner, [b]])
        sol = solve_ivp(lambda t, y: (y[1], -g_scl(t) * y[0]), (a, b), y,
                        method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval)
        if not sol.success:
            raise OdeFailure(f"warping ODE failed on [{a:g}, {b:g}]: {sol.message}")
        ts.append(sol.t)
        fs.append(sol.y[0])
        fps.append(sol.y[1])
        y = sol.y[:, -1].copy()

    t = np.concatenate(ts)
    f = np.concatenate(fs)
    fp = np.concatenate(fps)
    t, idx = np.unique(t, return_index=True)
    return t, f[idx], fp[idx], t0


def from_curvature(G, tmax: float, tol: Optional[Tolerances] = None) -> RadialProfile:
    """Build a profile from a radial curvature descriptor.

    G may be a ClosedForm, an expression string, a SampledGrid, or any
    callable of t.  The warping is solved numerically; NonPositiveWarping
    is raised if f hits zero inside the horizon.
    """
    tol = tol or Tolerances()
    if tmax <= 0:
        raise ValidationError("tmax must be positive")
    if isinstance(G, str):
        G = ClosedForm(G)

    breaks: tuple = ()
    if isinstance(G, ClosedForm):
        g_scl, g_vec = G.scl, G.vec
        breaks = tuple(piecewise_breakpoints(G.expr, 0.0, tmax))
        g0 = G.value_at_zero()
        try:
            g1 = G.derivative().value_at_zero()
        except Exception:
            g1 = 0.0
    elif isinstance(G, SampledGrid):
        g_scl, g_vec = G.scl, G.vec
        g0 = G.scl(0.0)
        g1 = G.derivative().scl(0.0)
    else:
        g_scl = lambda t: float(G(t))
        g_vec = lambda t: np.asarray([float(G(x)) for x in np.ravel(t)]).reshape(np.shape(t))
        g0 = g_scl(0.0)
        g1 = (g_scl(1e-6 * tmax) - g0) / (1e-6 * tmax)

    # Dense Hermite resampling of the solution gives fast, accurate
    # evaluation for both scalar ODE right-hand sides and array quadrature.
    tt, ff, ffp, _ = _integrate_warping(g_scl, tmax, tol, breaks, g0, g1)
    if np.any(ff[tt > 1e-9] <= 0.0):
        bad = tt[tt > 1e-9][ff[tt > 1e-9] <= 0.0][0]
        raise NonPositiveWarping(f"f(t) <= 0 at t = {bad:.6g}")
    f_fast = hermite_fast(tt, ff, ffp)
    # f'' = -G f jumps at curvature breaks, so the f' spline is stitched
    # with one-sided slope values there.
    fp_fast = stitched_hermite_fast(tt, ffp,
                                    lambda x: -g_vec(x) * f_fast.vec(x), breaks)

    def f_scl(x, _s=f_fast):
        return _s.scl(x)

    def fp_scl(x, _s=fp_fast):
        return _s.scl(x)

    def f_vec(x, _s=f_fast):
        return _s.vec(x)

    def fp_vec(x, _s=fp_fast):
        return _s.vec(x)

    return RadialProfile(tmax=tmax, f_vec=f_vec, f_scl=f_scl,
                         fp_vec=fp_vec, fp_scl=fp_scl,
                         g_vec=g_vec, g_scl=g_scl,
                         tail=None, tol=tol, kind="curvature", g_breaks=breaks)


def from_warping(f, tmax: float, tol: Optional[Tolerances] = None) -> RadialProfile:
    """Build a profile from a warping descriptor; G is recovered as -f''/f."""
    tol = tol or Tolerances()
    if tmax <= 0:
        raise ValidationError("tmax must be positive")
    if isinstance(f, str):
        f = ClosedForm(f)

    if isinstance(f, ClosedForm):
        fp = f.derivative()
        fpp = f.derivative(2)
        f0 = f.value_at_zero()
        fp0 = fp.value_at_zero()
        if abs(f0) > 1e-9 or abs(fp0 - 1.0) > 1e-9:
            raise InvalidWarping(
                f"warping must satisfy f(0)=0, f'(0)=1; got f(0)={f0:.3g}, f'(0)={fp0:.3g}"
            )
        breaks = tuple(piecewise_breakpoints(f.expr, 0.0, tmax))
        # -f''/f is a 0/0 form at the pole; the limit is -f'''(0).
        g_at_zero = -f.derivative(3).value_at_zero()
        cut = 1e-9

        def g_scl(x, _f=f.scl, _fpp=fpp.scl, _g0=g_at_zero, _c=cut):
            if x < _c:
                return _g0
            return -_fpp(x) / _f(x)

        def g_vec(x, _f=f.vec, _fpp=fpp.vec, _g0=g_at_zero, _c=cut):
            x = np.asarray(x, dtype=float)
            safe = np.where(x < _c, 1.0, x)
            out = -_fpp(safe) / _f(safe)
            return np.where(x < _c, _g0, out)

        prof = RadialProfile(tmax=tmax, f_vec=f.vec, f_scl=f.scl,
                             fp_vec=fp.vec, fp_scl=fp.scl,
                             g_vec=g_vec, g_scl=g_scl,
                             tail=None, tol=tol, kind="warping", g_breaks=breaks)
        return prof

    if isinstance(f, SampledGrid):
        t, y = f.t, f.y
        if t[0] > 1e-9:
            raise InvalidWarping("sampled warping must start at t = 0")
        if abs(y[0]) > 1e-9:
            raise InvalidWarping(f"f(0) = {y[0]:.3g}, expected 0")
        fp = f.derivative()
        if abs(fp.scl(0.0) - 1.0) > 100 * tol.ode_tol + 1e-3:
            raise InvalidWarping(f"f'(0) = {fp.scl(0.0):.6f}, expected 1")
        if np.any(y[1:] <= 0):
            raise InvalidWarping("sampled warping must be positive on (0, tmax]")
        # G by second differences on the sample grid, interpolated.
        tm = t[1:-1]
        fpp = (y[2:] - 2 * y[1:-1] + y[:-2]) / ((t[2:] - t[1:-1]) * (t[1:-1] - t[:-2]))
        g_nodes = -fpp / y[1:-1]
        g_interp = SampledGrid(tm, g_nodes)

        def g_scl(x, _g=g_interp, _lo=tm[0], _hi=tm[-1]):
            return _g.scl(min(max(x, _lo), _hi))

        def g_vec(x, _g=g_interp, _lo=tm[0], _hi=tm[-1]):
            return _g.vec(np.clip(np.asarray(x, dtype=float), _lo, _hi))

        return RadialProfile(tmax=min(tmax, t[-1]), f_vec=f.vec, f_scl=f.scl,
                             fp_vec=fp.vec, fp_scl=fp.scl,
                             g_vec=g_vec, g_scl=g_scl,
                             tail=None, tol=tol, kind="warping")

    raise ValidationError("warping descriptor must be an expression or a sampled grid")


def with_tail(profile: RadialProfile, tail: Optional[TailBound]) -> RadialProfile:
    """Return a copy of profile carrying the given tail annotation.

    Cached numerical helpers are shared; they do not depend on the tail.
    """
    clone = RadialProfile.__new__(RadialProfile)
    clone.__dict__.update(profile.__dict__)
    clone.tail = tail
    return clone


# -- operations ---------------------------------------------------------------


@dataclass(frozen=True)
class TotalCurvature:
    """2*pi*(1 - f'(T)) on the horizon plus what the tail annotation allows."""

    value: float
    error_bound: float
    verdict: str  # "finite" | "-inf" | "undetermined"


def total_curvature(surface: RadialProfile) -> TotalCurvature:
    """Total curvature estimate from the horizon value of f'.

    The identity c = 2 pi (1 - lim f') reduces everything to the behaviour
    of f'; the tail annotation, when present, bounds the remainder.
    """
    fp_end = float(surface.fp_grid[-1])
    value = 2.0 * math.pi * (1.0 - fp_end)
    T = surface.tmax
    tg, fpg = surface.t_grid, surface.fp_grid
    late = tg >= 0.9 * T
    variation = float(np.max(fpg[late]) - np.min(fpg[late]))
    scale = max(1.0, float(np.max(np.abs(fpg))))
    converged = variation <= 1e4 * surface.tol.ode_tol * scale + 1e-9
    increasing = fpg[-1] > fpg[late][0] + 1e-6 * scale

    tail = surface.tail
    if tail is not None and tail.beta > 2.0 and tail.C >= 0.0:
        lam_tail = tail.C * T ** (2.0 - tail.beta) / (tail.beta - 2.0)
        phi_bound = float(np.max(fpg)) * math.exp(lam_tail)
        fT = float(surface.f_grid[-1])
        rem = tail.C * (fT * T ** (1.0 - tail.beta) / (tail.beta - 1.0)
                        + phi_bound * T ** (2.0 - tail.beta) / (tail.beta - 2.0))
        return TotalCurvature(value, 2.0 * math.pi * rem + abs(variation), "finite")
    if converged:
        return TotalCurvature(value, 2.0 * math.pi * variation + 1e-9, "finite")
    if tail is not None and increasing:
        # Tail permits unbounded curvature mass and f' is still climbing.
        return TotalCurvature(value, math.inf, "-inf")
    return TotalCurvature(value, math.inf, "undetermined")


def classify(surface: RadialProfile) -> SurfaceClass:
    """Earliest grid radius from which (VM) / (CH) hold through the horizon.

    A classification that only kicks in over the last quarter of the horizon
    is suppressed: with no tail annotation it says nothing about [R0, inf).
    """
    t, g = surface.t_grid, surface.G_grid
    slack = 10.0 * surface.tol.quad_tol
    cutoff = 0.75 * surface.tmax

    def earliest(ok: np.ndarray) -> Optional[float]:
        idx = len(ok)
        while idx > 0 and ok[idx - 1]:
            idx -= 1
        if idx >= len(ok) or t[idx] > cutoff:
            return None
        return float(t[idx])

    vm = earliest(np.diff(g) <= slack)
    ch = earliest(g <= slack)
    return SurfaceClass(von_mangoldt_from=vm, cartan_hadamard_from=ch)


def sector_curvature_mass(surface: RadialProfile, delta: float, T: float) -> float:
    """Curvature mass |G| of the sector of width delta up to radius T."""
    if not (0.0 < delta <= 2.0 * math.pi):
        raise ValidationError("delta must lie in (0, 2*pi]")
    if not (0.0 < T <= surface.tmax):
        raise ValidationError("T must lie in (0, tmax]")
    pts = [b for b in surface.g_breaks if 0 < b < T]
    val, _ = quad(lambda s: abs(surface.G(s)) * surface.f(s), 0.0, T,
                  epsabs=surface.tol.quad_tol * 1e-2,
                  epsrel=surface.tol.quad_tol, limit=200,
                  points=pts or None)
    return delta * val


@dataclass(frozen=True)
class GrowthReport:
    """Boundary-length samples and the reciprocal-square growth integral."""

    t: np.ndarray
    boundary_length: np.ndarray
    integral: float
    divergent: bool
    growth_exponent: float


def growth_diagnostics(surface: RadialProfile) -> GrowthReport:
    """L(t) = 2 pi f(t) samples plus the integral of 1/f^2 from 1 on.

    The integral is extended past the horizon with a power-law fit of f on
    the outer half of the grid; 2p <= 1 flags divergence.
    """
    if surface.tmax <= 1.0:
        raise ValidationError("growth diagnostics need tmax > 1")
    t = surface.t_grid
    L = 2.0 * math.pi * surface.f_grid
    horizon_part, _ = quad(lambda s: 1.0 / surface.f(s) ** 2, 1.0, surface.tmax,
                           epsabs=1e-12, epsrel=1e-10, limit=200)

    # Local log-log slope p(T) = T f'(T)/f(T) carries an O(1/T) horizon
    # bias; Richardson extrapolation over T and T/2 removes it.
    def local_p(T):
        return T * surface.f_prime(T) / surface.f(T)

    T = surface.tmax
    p = float(2.0 * local_p(T) - local_p(T / 2.0))
    divergent = 2.0 * p <= 1.0 + 1e-3
    total = math.inf if divergent else horizon_part + T / (
        surface.f(T) ** 2 * (2.0 * p - 1.0))
    return GrowthReport(t=t, boundary_length=L, integral=total,
                        divergent=divergent, growth_exponent=p)
