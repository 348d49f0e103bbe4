"""Conjugate points, cut times, cut loci, and sector scans.

Conjugate points come from the scalar Jacobi equation J'' + K(s) J = 0
along a traced geodesic, with K(s) = G(t(s)) (the Gaussian curvature of a
surface of revolution depends on the radius only).  Cut times come from
bisection of the minimality predicate d(base, gamma(s)) >= s, evaluated
with the geodesic engine's distance; everything is sampling based and
horizon capped, so scan verdicts are reported at their resolution, never
as theorem-grade claims.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ValidationError
from .geodesics import GeodesicArc, SurfacePoint, distance, launch, trace
from .profiles import RadialProfile

CUT_RESOLUTION = 1e-7


@dataclass(frozen=True)
class CutRecord:
    psi: float
    conjugate_s: Optional[float]
    cut_s: Optional[float]
    cut_point: Optional[SurfacePoint]
    cause: str  # "conjugate" | "non-unique" | "none-within-horizon"


@dataclass(frozen=True)
class CutReport:
    base: SurfacePoint
    records: tuple

    def finite_records(self):
        return [r for r in self.records if r.cut_s is not None]


@dataclass(frozen=True)
class SectorVerdict:
    delta: float
    has_cut_pair: bool
    witness: Optional[tuple]
    delta0_estimate: Optional[float]
    details: dict = field(default_factory=dict)


def first_jacobi_zero(curvature_of_s, s_max: float, *, rtol: float = 1e-10,
                      breaks=()) -> Optional[float]:
    """First zero of J'' + K(s) J = 0, J(0) = 0, J'(0) = 1 on (0, s_max].

    breaks: s locations where K has a kink; integration restarts there.
    """
    s0 = 1e-9 * max(s_max, 1.0)
    stops = sorted(b for b in breaks if s0 < b < s_max)
    y = np.array([s0, 1.0])
    a = s0
    for b in stops + [s_max]:
        if b <= a:
            continue
        sol = solve_ivp(lambda s, y: (y[1], -curvature_of_s(s) * y[0]),
                        (a, b), y, method="DOP853", rtol=rtol,
                        atol=rtol * 1e-2,
                        events=_descending_zero)
        if sol.status < 0:
            raise ValidationError(f"Jacobi integration failed: {sol.message}")
        if len(sol.t_events[0]):
            return float(sol.t_events[0][0])
        a = float(sol.t[-1])
        y = sol.y[:, -1].copy()
    return None


def _descending_zero(s, y):
    return y[0]


_descending_zero.terminal = True
_descending_zero.direction = -1.0


def conjugate_time(surface: RadialProfile, arc: GeodesicArc) -> Optional[float]:
    """First conjugate arclength along a traced arc, None if none found."""
    if arc.s_end <= 0:
        raise ValidationError("arc must be traced before conjugate search")
    g_scl = surface._g_scl

    def K(s):
        t, _ = arc.coords_at(s)
        return g_scl(abs(t))

    breaks = _curvature_break_arclengths(surface, arc)
    rtol = max(surface.tol.ode_tol * 10, 1e-11)
    return first_jacobi_zero(K, arc.s_end, rtol=rtol, breaks=breaks)


def _curvature_break_arclengths(surface, arc):
    """Arclengths where the arc crosses a curvature breakpoint radius."""
    out = []
    if not surface.g_breaks or arc.s.size == 0:
        return out
    t = arc.t
    for b in surface.g_breaks:
        sign = np.sign(t - b)
        flips = np.nonzero(sign[1:] * sign[:-1] < 0)[0]
        for i in flips:
            # Linear inversion inside the sample cell is plenty: the kink
            # restart only needs the location to step-level accuracy.
            w = (b - t[i]) / (t[i + 1] - t[i])
            out.append(float(arc.s[i] + w * (arc.s[i + 1] - arc.s[i])))
    if arc.nu == 0.0 and arc.start.t > 0 and arc.psi > math.pi / 2:
        out.append(arc.start.t)  # pole crossing of an inward meridian
    return sorted(out)


def cut_time(surface: RadialProfile, base: SurfacePoint, psi: float,
             s_max: float, *, resolution: float = CUT_RESOLUTION):
    """Cut arclength along the geodesic from base with launch angle psi.

    Returns (cut_s, cause) or None when the geodesic stays minimal to the
    horizon cap.  cause is "conjugate" when the cut coincides with the
    first conjugate point at the bisection resolution, else "non-unique".
    """
    rec, _ = _direction_record(surface, base, psi, s_max, resolution)
    if rec.cut_s is None:
        return None
    return rec.cut_s, rec.cause


def _direction_record(surface, base, psi, s_max, resolution):
    if base.t <= 0:
        raise ValidationError("cut search needs a base off the pole")
    arc = trace(surface, launch(surface, base, psi), s_max)
    s_cap = arc.s_end
    conj = conjugate_time(surface, arc)
    slack = 10.0 * surface.tol.root_tol

    def minimal(s):
        return distance(surface, base, arc.point_at(s)) >= s - slack

    hi = s_cap
    if conj is not None:
        hi = min(s_cap, conj * (1.0 + 1e-9))
    if minimal(hi):
        if conj is not None and conj <= s_cap:
            # Beyond the conjugate point minimality fails analytically; the
            # cubic-order shortfall can be below the distance slack.
            rec = CutRecord(psi, conj, conj, arc.point_at(conj), "conjugate")
            return rec, arc
        return CutRecord(psi, conj, None, None, "none-within-horizon"), arc

    lo = min(0.25 * hi, 0.5)
    while lo > 1e-6 * hi and not minimal(lo):
        lo *= 0.25
    tol_s = resolution * max(1.0, hi)
    while hi - lo > tol_s:
        mid = 0.5 * (lo + hi)
        if minimal(mid):
            lo = mid
        else:
            hi = mid
    cut_s = 0.5 * (lo + hi)
    cause = "non-unique"
    if conj is not None and cut_s >= conj - 1e3 * tol_s:
        cut_s = min(cut_s, conj)
        cause = "conjugate"
    return CutRecord(psi, conj, cut_s, arc.point_at(cut_s), cause), arc


def cut_locus(surface: RadialProfile, base: SurfacePoint, n_dirs: int,
              s_max: float, *, resolution: float = CUT_RESOLUTION) -> CutReport:
    """Cut records for launch angles uniform in (0, pi].

    Mirror symmetry across the base meridian supplies the remaining
    directions; per-direction failures are recorded, not raised.
    """
    if n_dirs < 8:
        raise ValidationError("cut locus scan needs n_dirs >= 8")
    records = []
    for j in range(1, n_dirs + 1):
        psi = math.pi * j / n_dirs
        try:
            rec, _ = _direction_record(surface, base, psi, s_max, resolution)
        except Exception as exc:  # recorded, never fatal per direction
            rec = CutRecord(psi, None, None, None, f"error: {exc}")
        records.append(rec)
    return CutReport(base=base, records=tuple(records))


def sector_scan(surface: RadialProfile, deltas, sample_grid, s_max: float,
                *, n_dirs: int = 8,
                resolution: float = CUT_RESOLUTION) -> list[SectorVerdict]:
    """Scan sectors of widths deltas for pairs of cut points.

    sample_grid is (radii, angles): the absolute sample points (r, theta);
    for each delta only the points inside that sector participate, so a
    no-pair verdict at a wider sector implies one at any narrower sector.
    Cut loci are computed once per radius (rotational symmetry) and
    verdicts carry the scan resolution; they are findings at a sampling
    resolution, not existence proofs.
    """
    deltas = sorted(float(d) for d in deltas)
    if any(d >= math.pi for d in deltas):
        raise ValidationError("sector widths must be below pi")
    radii, angles = sample_grid
    reports = {}
    for r in sorted(set(float(r) for r in radii)):
        reports[r] = cut_locus(surface, SurfacePoint(r, 0.0), n_dirs, s_max,
                               resolution=resolution)

    verdicts = []
    for delta in deltas:
        witness = None
        witness_min_radius = None
        for r in sorted(reports):
            for theta0 in sorted(float(a) for a in angles):
                if not (0.0 < theta0 < delta):
                    continue
                for rec in reports[r].finite_records():
                    adv = rec.cut_point.theta  # advance from theta = 0
                    for cut_theta in (theta0 + adv, theta0 - adv):
                        if 0.0 < cut_theta < delta and witness is None:
                            witness = (SurfacePoint(r, theta0),
                                       SurfacePoint(rec.cut_point.t, cut_theta))
                            witness_min_radius = _witness_min_radius(
                                surface, SurfacePoint(r, 0.0), rec, s_max)
        details = {"n_dirs": n_dirs, "resolution": resolution,
                   "s_max": s_max, "radii": sorted(reports)}
        if witness_min_radius is not None:
            # Key-Lemma audit: the conjugate-pair segment stays outside the
            # ball of this radius around the pole.
            details["witness_min_radius"] = witness_min_radius
        verdicts.append(SectorVerdict(delta=delta, has_cut_pair=witness is not None,
                                      witness=witness, delta0_estimate=None,
                                      details=details))

    no_pair = [v.delta for v in verdicts if not v.has_cut_pair]
    delta0 = max(no_pair) if no_pair else None
    return [SectorVerdict(v.delta, v.has_cut_pair, v.witness, delta0, v.details)
            for v in verdicts]


def _witness_min_radius(surface, base, rec, s_max):
    arc = trace(surface, launch(surface, base, rec.psi), min(rec.cut_s, s_max))
    return arc.min_radius()
