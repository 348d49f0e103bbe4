"""Connecting-geodesic search by Clairaut-constant shooting.

A geodesic between two radii decomposes into monotone branches separated
by turning points where f(t) equals the Clairaut constant nu.  For a fixed
branch pattern the total angular advance is continuous in nu, so roots of
advance(nu) = target are bracketed on a dense sweep and refined, without
assuming any global monotonicity.

Patterns up to two turnings are enumerated:

    direct      one monotone leg
    in_out      inward to an inner turning radius, then outward
    out_in      outward to an outer turning radius, then inward
    in_out_in   inner turn, outer turn, inward finish
    out_in_out  outer turn, inner turn, outward finish

Outer turning radii only exist where f dips, so the out-* patterns are
skipped outright on profiles with monotone warping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .quadrature import adaptive_branch_integral, _gl

SWEEP_N = 256
CHEAP_NODES = 40

PATTERNS_BY_K = {0: ("direct",), 1: ("in_out", "out_in"),
                 2: ("in_out_in", "out_in_out")}


@dataclass(frozen=True)
class Candidate:
    """One connecting geodesic: Clairaut constant, branch layout, metrics."""

    nu: float
    pattern: str
    turnings: int
    theta: float
    length: float
    legs: tuple  # ((t_from, t_to), ...) in traversal order


class _CrossingTable:
    """Cached running-min machinery for turning-radius lookups at a radius."""

    def __init__(self, profile, r: float, below: bool):
        t, fv = profile.fine_t, profile.fine_f
        if below:
            j = int(np.searchsorted(t, r, side="left"))
            self.tt = np.concatenate([t[:j], [r]])
            self.ff = np.concatenate([fv[:j], [profile.f(r)]])
            self.run = np.minimum.accumulate(self.ff[::-1])[::-1]
        else:
            j = int(np.searchsorted(t, r, side="right"))
            self.tt = np.concatenate([[r], t[j:]])
            self.ff = np.concatenate([[profile.f(r)], fv[j:]])
            self.run = np.minimum.accumulate(self.ff)
        self.below = below
        self.profile = profile
        self.r = r

    def turns(self, nus: np.ndarray):
        """Per nu: turning radius and validity mask."""
        tt, ff, run = self.tt, self.ff, self.run
        if self.below:
            valid = nus <= ff[-1] * (1.0 + 1e-14)
            k = np.searchsorted(run, nus, side="right") - 1
            k = np.clip(k, 0, len(tt) - 2)
            t_star = _refine_crossing(self.profile, tt[k], tt[k + 1],
                                      ff[k], ff[k + 1], nus)
            t_star = np.where(nus >= ff[-1], self.r, t_star)
            return np.where(valid, t_star, np.nan), valid
        rev = run[::-1]
        count = np.searchsorted(rev, nus, side="right")
        valid = (count > 0) & (nus < ff[0])
        k = np.clip(len(run) - count, 1, len(tt) - 1)
        t_star = _refine_crossing(self.profile, tt[k - 1], tt[k],
                                  ff[k - 1], ff[k], nus)
        return np.where(valid, t_star, np.nan), valid


def _refine_crossing(profile, t_lo, t_hi, f_lo, f_hi, nus):
    """Vectorised crossing refinement inside bracketing cells."""
    denom = np.where(f_hi != f_lo, f_hi - f_lo, 1.0)
    t = t_lo + (nus - f_lo) / denom * (t_hi - t_lo)
    for _ in range(3):
        fp = profile.f_prime(t)
        fp = np.where(np.abs(fp) < 1e-12, 1e-12, fp)
        t = np.clip(t - (profile.f(t) - nus) / fp, t_lo, t_hi)
    return t


def _exact_turning(profile, t_est, nu):
    """Polish a turning radius with a bracketed root solve."""
    h = profile.fine_t[1] - profile.fine_t[0]
    lo, hi = max(t_est - 2 * h, 0.0), min(t_est + 2 * h, profile.tmax)
    g = lambda x: profile.f(x) - nu
    try:
        if g(lo) * g(hi) <= 0:
            return brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200)
    except ValueError:
        pass
    return t_est


class Shooter:
    """Shooting context for one ordered pair of radii (tA, tB)."""

    def __init__(self, profile, tA: float, tB: float, tol: float):
        self.profile = profile
        self.tA, self.tB = tA, tB
        self.tol = tol
        self.fA, self.fB = profile.f(tA), profile.f(tB)
        self.lo, self.hi = min(tA, tB), max(tA, tB)
        self.m_int = self._interior_min(self.lo, self.hi)
        self.dips = bool(np.any(np.diff(profile.fine_f) < 0.0))
        self._below_A = _CrossingTable(profile, tA, below=True)
        self._above_A = _CrossingTable(profile, tA, below=False) if self.dips else None
        x, w = _gl(CHEAP_NODES)
        self._gl_u = 0.5 * (x + 1.0)
        self._gl_w = w

    def _interior_min(self, lo, hi):
        t, fv = self.profile.fine_t, self.profile.fine_f
        i = np.searchsorted(t, lo, side="right")
        j = np.searchsorted(t, hi, side="left")
        if j <= i:
            return math.inf
        return float(np.min(fv[i:j]))

    # -- fixed-rule integrals over legs with per-nu endpoints ----------------

    def _legs_integrals(self, nus, t_lo, t_hi):
        """theta and length of branches [t_lo, t_hi] per nu (vectorised).

        Branches are split where they pass the endpoint radii tA, tB: f can
        come arbitrarily close to nu there, and the substitution only tames
        square-root behaviour at interval ends.
        """
        r1, r2 = sorted((self.tA, self.tB))
        c1 = np.clip(np.full_like(t_lo, r1), t_lo, t_hi)
        c2 = np.clip(np.full_like(t_lo, r2), t_lo, t_hi)
        theta = np.zeros_like(nus)
        length = np.zeros_like(nus)
        for a, b in ((t_lo, c1), (c1, c2), (c2, t_hi)):
            th, ln = self._piece_integrals(nus, a, b)
            theta += th
            length += ln
        return theta, length

    def _piece_integrals(self, nus, t_lo, t_hi):
        """Double-substituted GL rule on [t_lo, t_hi]; degenerate rows are
        zero (they arise at exactly-tangential endpoints where the true
        branch is a point)."""
        u, w = self._gl_u, self._gl_w
        degenerate = (t_hi - t_lo) < 1e-13 * np.maximum(1.0, np.abs(t_hi))
        mid = 0.5 * (t_lo + t_hi)
        span_l = np.maximum(mid - t_lo, 0.0)
        span_r = np.maximum(t_hi - mid, 0.0)
        sq_l = np.sqrt(span_l)[:, None]
        sq_r = np.sqrt(span_r)[:, None]
        u_l = u[None, :] * sq_l
        u_r = u[None, :] * sq_r
        t_all = np.concatenate([t_lo[:, None] + u_l ** 2,
                                t_hi[:, None] - u_r ** 2], axis=1)
        w_all = np.concatenate([w[None, :] * u_l * sq_l,
                                w[None, :] * u_r * sq_r], axis=1)
        f_all = self.profile.f(t_all.ravel()).reshape(t_all.shape)
        q = f_all ** 2 - nus[:, None] ** 2
        q = np.maximum(q, (3e-16 * f_all) ** 2)
        root = np.sqrt(q)
        theta = np.sum(w_all * nus[:, None] / (f_all * root), axis=1)
        length = np.sum(w_all * f_all / root, axis=1)
        theta[degenerate] = 0.0
        length[degenerate] = 0.0
        return theta, length

    # -- pattern leg layouts --------------------------------------------------

    def pattern_legs(self, pattern, nus):
        """Leg endpoint arrays and validity for a pattern over a nu grid.

        None when the pattern cannot occur for this pair at all.
        """
        k = nus.shape[0]
        tA, tB, fA, fB = self.tA, self.tB, self.fA, self.fB
        A = np.full(k, tA)
        B = np.full(k, tB)

        if pattern == "direct":
            if abs(tA - tB) < 1e-15:
                return None
            valid = nus < min(self.m_int, fA, fB) * (1.0 - 1e-14)
            return [(A, B)], valid

        if pattern == "in_out":
            t1, ok = self._below_A.turns(nus)
            valid = ok & (nus <= fA) & (nus <= fB)
            valid &= np.where(np.isnan(t1), False, t1 <= tB * (1.0 + 1e-14))
            if tB > tA:
                valid &= nus < self.m_int * (1.0 + 1e-12)
            t1 = np.where(valid, t1, 0.0)
            return [(A, t1), (t1, B)], valid

        if pattern == "out_in":
            if not self.dips:
                return None
            t1, ok = self._above_A.turns(nus)
            valid = ok & (nus < fA) & (nus <= fB)
            valid &= np.where(np.isnan(t1), False, t1 >= tB * (1.0 - 1e-14))
            if tB < tA:
                valid &= nus < self.m_int * (1.0 + 1e-12)
            t1 = np.where(valid, t1, self.profile.tmax)
            return [(A, t1), (t1, B)], valid

        if pattern in ("in_out_in", "out_in_out"):
            if not self.dips:
                return None
            t1_arr = np.zeros(k)
            t2_arr = np.zeros(k)
            valid = np.zeros(k, dtype=bool)
            for i, nu in enumerate(nus):
                legs = self._two_turn_legs(pattern, float(nu))
                if legs is not None:
                    t1_arr[i], t2_arr[i] = legs
                    valid[i] = True
            return [(A, t1_arr), (t1_arr, t2_arr), (t2_arr, B)], valid

        raise ValueError(f"unknown pattern {pattern!r}")

    def _two_turn_legs(self, pattern, nu):
        if nu <= 0 or nu > min(self.fA, self.fB):
            return None
        prof = self.profile
        one = np.asarray([nu])
        if pattern == "in_out_in":
            t1, ok = self._below_A.turns(one)
            if not ok[0]:
                return None
            t1 = float(t1[0])
            t2 = _first_crossing_above(prof, t1, nu)
            if t2 is None or not (t1 <= self.tB <= t2):
                return None
            return t1, t2
        t1, ok = self._above_A.turns(one)
        if not ok[0]:
            return None
        t1 = float(t1[0])
        t2 = _last_crossing_below(prof, t1, nu)
        if t2 is None or not (t2 <= self.tB <= t1):
            return None
        return t1, t2

    # -- evaluation over the sweep and at single nu ---------------------------

    def sweep(self, pattern):
        nus = self._sweep_grid(pattern)
        built = self.pattern_legs(pattern, nus)
        if built is None:
            return None
        legs, valid = built
        theta = np.zeros_like(nus)
        length = np.zeros_like(nus)
        for t_from, t_to in legs:
            a = np.minimum(t_from, t_to)
            b = np.maximum(t_from, t_to)
            th, ln = self._legs_integrals(nus, a, b)
            theta += th
            length += ln
        return nus, theta, length, valid

    def _sweep_grid(self, pattern):
        if pattern == "direct":
            top = min(self.m_int, self.fA, self.fB)
            return np.linspace(0.0, top * (1.0 - 1e-12), SWEEP_N)
        top = min(self.fA, self.fB)
        # Geometric spacing resolves the small-nu regime where the advance
        # saturates towards pi.
        return np.geomspace(top * 1e-12, top, SWEEP_N)

    def cheap_eval(self, pattern, nu):
        """(theta, length, legs) via the fixed rule; None when invalid."""
        arr = np.asarray([nu], dtype=float)
        built = self.pattern_legs(pattern, arr)
        if built is None:
            return None
        legs, valid = built
        if not valid[0]:
            return None
        theta = 0.0
        length = 0.0
        leg_list = []
        for t_from, t_to in legs:
            a = np.asarray([min(t_from[0], t_to[0])])
            b = np.asarray([max(t_from[0], t_to[0])])
            th, ln = self._legs_integrals(arr, a, b)
            theta += float(th[0])
            length += float(ln[0])
            leg_list.append((float(t_from[0]), float(t_to[0])))
        return theta, length, tuple(leg_list)

    def accurate_legs(self, pattern, nu):
        """Leg layout with turning radii polished by bracketed root solves."""
        cheap = self.cheap_eval(pattern, nu)
        if cheap is None:
            return None
        _, _, legs = cheap
        exact = [list(leg) for leg in legs]
        for i in range(len(exact) - 1):
            t_ex = _exact_turning(self.profile, exact[i][1], nu)
            exact[i][1] = t_ex
            exact[i + 1][0] = t_ex
        return tuple((a, b) for a, b in exact)

    def _pieces(self, legs):
        """Legs split at the endpoint radii (near-singular hot spots)."""
        out = []
        for t_from, t_to in legs:
            a, b = min(t_from, t_to), max(t_from, t_to)
            cuts = [a] + [r for r in sorted((self.tA, self.tB))
                          if a < r < b] + [b]
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                if hi - lo > 1e-15:
                    out.append((lo, hi))
        return out

    def accurate_theta(self, legs, nu):
        f = self.profile._f_scl
        theta = 0.0
        for a, b in self._pieces(legs):
            theta += adaptive_branch_integral(
                lambda t: nu / f(t), f, nu, a, b, self.tol)
        return theta

    def accurate_length(self, legs, nu):
        f = self.profile._f_scl
        length = 0.0
        for a, b in self._pieces(legs):
            length += adaptive_branch_integral(f, f, nu, a, b, self.tol)
        return length

    # -- root search -----------------------------------------------------------

    def roots(self, pattern, target, match="theta"):
        """Candidates with advance (or length) equal to target."""
        swept = self.sweep(pattern)
        if swept is None:
            return []
        nus, theta, length, valid = swept
        g = (theta if match == "theta" else length) - target
        out = []
        for i in range(len(nus) - 1):
            if not (valid[i] and valid[i + 1]):
                continue
            if g[i] == 0.0 or g[i] * g[i + 1] < 0.0:
                root = self._polish(pattern, target, nus[i], nus[i + 1], match)
                if root is not None:
                    out.append(root)
        return out

    def _polish(self, pattern, target, lo, hi, match):
        lo0, hi0 = lo, hi
        sel = 0 if match == "theta" else 1

        def cheap_g(nu):
            r = self.cheap_eval(pattern, nu)
            return None if r is None else r[sel] - target

        g_lo, g_hi = cheap_g(lo), cheap_g(hi)
        if g_lo is None or g_hi is None or g_lo * g_hi > 0:
            return None
        for _ in range(42):
            mid = 0.5 * (lo + hi)
            g_mid = cheap_g(mid)
            if g_mid is None:
                return None
            if g_lo * g_mid <= 0:
                hi, g_hi = mid, g_mid
            else:
                lo, g_lo = mid, g_mid
            if hi - lo < 1e-14 * max(1.0, hi):
                break
        nu = 0.5 * (lo + hi)

        # Newton polish against the adaptive integral; the fixed rule is
        # smooth in nu and supplies the slope.
        best = None
        for _ in range(3):
            legs = self.accurate_legs(pattern, nu)
            if legs is None:
                break
            metric = (self.accurate_theta(legs, nu) if sel == 0
                      else self.accurate_length(legs, nu))
            err = target - metric
            if best is None or abs(err) < abs(best[2]):
                best = (nu, legs, err)
            if abs(err) < 1e-12:
                break
            d = max(1e-7 * max(nu, 1e-9), (hi0 - lo0) * 1e-5)
            g_p = cheap_g(nu + d)
            g_m = cheap_g(max(nu - d, 0.0))
            if g_p is None or g_m is None:
                break
            slope = (g_p - g_m) / (d + min(d, nu))
            if not np.isfinite(slope) or abs(slope) < 1e-16:
                break
            nu = float(np.clip(nu + err / slope, 0.5 * lo0,
                               hi0 + 0.5 * (hi0 - lo0)))
        if best is None:
            return None
        nu, legs, err = best
        if abs(err) > 1e-8 * max(1.0, target):
            return None
        theta = self.accurate_theta(legs, nu)
        length = self.accurate_length(legs, nu)
        return Candidate(nu=nu, pattern=pattern, turnings=len(legs) - 1,
                         theta=theta, length=length, legs=legs)


def _first_crossing_above(profile, r, nu):
    """First t > r with f(t) = nu, skipping the touching region at r."""
    t, fv = profile.fine_t, profile.fine_f
    j = int(np.searchsorted(t, r, side="right"))
    while j < len(t) and fv[j] <= nu:
        j += 1
    if j >= len(t):
        return None
    sub = fv[j:]
    hits = np.nonzero(sub <= nu)[0]
    if hits.size == 0:
        return None
    k = j + hits[0]
    return _exact_turning(profile, float(t[k]), nu)


def _last_crossing_below(profile, r, nu):
    """Last t < r with f(t) = nu, skipping the touching region at r."""
    t, fv = profile.fine_t, profile.fine_f
    j = int(np.searchsorted(t, r, side="left")) - 1
    while j >= 0 and fv[j] <= nu:
        j -= 1
    if j < 0:
        return None
    sub = fv[:j + 1]
    hits = np.nonzero(sub <= nu)[0]
    if hits.size == 0:
        return None
    return _exact_turning(profile, float(t[hits[-1]]), nu)


def connect_candidates(profile, tA, tB, target, max_turnings, tol,
                       match="theta") -> list[Candidate]:
    """All pattern candidates matching the target advance (or length)."""
    shooter = Shooter(profile, tA, tB, tol)
    cands = []
    for k in range(max_turnings + 1):
        for pattern in PATTERNS_BY_K.get(k, ()):
            cands.extend(shooter.roots(pattern, target, match))
    return cands
