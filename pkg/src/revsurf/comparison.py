"""Comparison triangles, Gauss-Bonnet audits, and angle-inequality checks.

Triangles here always have the pole as one vertex: place x at (a, 0), find
the unique theta with d((a,0), (c,theta)) = b (the distance is strictly
increasing in the separation), and measure the remaining angles from the
connecting arc's launch data.  The comparison verdicts check that angles
upstairs dominate the model angles when the curvature does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DomainViolation, PreconditionViolation, ValidationError
from .geodesics import (GeodesicArc, SurfacePoint, _arc_from_candidate,
                        connect, distance)
from .profiles import RadialProfile
from .quadrature import leg_polyline
from . import shooting


@dataclass(frozen=True)
class TriangleRealization:
    """A geodesic triangle with the base point at the pole."""

    surface: RadialProfile
    p: SurfacePoint
    x: SurfacePoint
    y: SurfacePoint
    side_a: float  # d(p, x)
    side_b: float  # d(x, y)
    side_c: float  # d(p, y)
    angle_p: float
    angle_x: float
    angle_y: float
    arc_xy: GeodesicArc
    nu: float
    b_residual: float
    ambiguous: bool = False

    @property
    def angle_sum(self) -> float:
        return self.angle_p + self.angle_x + self.angle_y

    def validate(self, tol: float = 1e-9) -> None:
        a, b, c = self.side_a, self.side_b, self.side_c
        if not (abs(a - c) < b + tol and b < a + c + tol):
            raise ValidationError("triangle sides violate strict inequalities")
        for ang in (self.angle_p, self.angle_x, self.angle_y):
            if not (0.0 < ang < math.pi):
                raise ValidationError(f"angle {ang} outside (0, pi)")
        sep = abs(self.x.theta - self.y.theta) % (2.0 * math.pi)
        sep = min(sep, 2.0 * math.pi - sep)
        if abs(sep - self.angle_p) > 1e-9:
            raise ValidationError("pole angle disagrees with coordinate separation")


@dataclass(frozen=True)
class ComparisonReport:
    """Side residuals and angle slacks of a dominated-surface comparison."""

    side_residuals: tuple
    angle_slacks: tuple  # (at pole, at x, at y): angle_M - angle_model
    passed: bool
    in_sector: bool
    delta0: float
    angle_tol: float


def _endpoint_angles(surface, cand, a, c):
    """Angles at x and y from the connecting arc's launch/arrival data."""
    nu = cand.nu
    first_out = cand.legs[0][1] >= cand.legs[0][0]
    last_out = cand.legs[-1][1] >= cand.legs[-1][0]
    fa, fc = surface.f(a), surface.f(c)
    ux = (1.0 if first_out else -1.0) * math.sqrt(max(fa * fa - nu * nu, 0.0)) / fa
    uy = (1.0 if last_out else -1.0) * math.sqrt(max(fc * fc - nu * nu, 0.0)) / fc
    angle_x = math.acos(max(-1.0, min(1.0, -ux)))
    angle_y = math.acos(max(-1.0, min(1.0, uy)))
    return angle_x, angle_y


def embed_triangle(surface: RadialProfile, a: float, b: float,
                   c: float) -> TriangleRealization:
    """Realise side lengths (a, b, c) as a pole triangle on the surface.

    x sits at (a, 0); the apex angle is the unique theta in (0, pi) with
    d((a,0), (c,theta)) = b.  Solved by matching the connecting geodesic's
    length over the Clairaut sweep, each root certified minimal by an
    independent distance call; bisection on theta is the fallback.  When
    several certified apex angles coexist (possible only outside no-cut-
    pair sectors) the realization is flagged ambiguous.
    """
    if a <= 0 or c <= 0 or b <= 0:
        raise DomainViolation("side lengths must be positive")
    if max(a, c) > surface.tmax:
        raise DomainViolation("triangle does not fit inside the horizon")
    slack = 10.0 * surface.tol.root_tol
    if b <= abs(a - c) + slack:
        raise DomainViolation(
            f"b = {b:g} does not exceed |a - c| = {abs(a - c):g}")
    d_max = distance(surface, SurfacePoint(a, 0.0), SurfacePoint(c, math.pi))
    if b >= d_max - slack:
        raise DomainViolation(
            f"b = {b:g} reaches the opposite-meridian distance {d_max:g}")

    cert_tol = 50.0 * surface.tol.root_tol * max(1.0, b)
    A = SurfacePoint(a, 0.0)
    hits = []
    for cand in shooting.connect_candidates(surface, a, c, b,
                                            surface.tol.max_turnings,
                                            surface.tol.quad_tol,
                                            match="length"):
        theta_cand = cand.theta
        if not (0.0 < theta_cand < math.pi):
            continue
        d = distance(surface, A, SurfacePoint(c, theta_cand))
        if abs(d - b) <= cert_tol:
            hits.append((theta_cand, cand, abs(d - b)))

    ambiguous = False
    if hits:
        hits.sort(key=lambda h: h[0])
        theta_star, cand, resid = hits[0]
        spread = hits[-1][0] - hits[0][0]
        ambiguous = spread > 1e-9
    else:
        theta_star, cand, resid = _embed_by_bisection(surface, A, a, b, c)

    angle_x, angle_y = _endpoint_angles(surface, cand, a, c)
    arc = _arc_from_candidate(surface, A, 1, cand)
    tri = TriangleRealization(
        surface=surface, p=SurfacePoint(0.0, 0.0), x=A,
        y=SurfacePoint(c, theta_star),
        side_a=a, side_b=b, side_c=c,
        angle_p=theta_star, angle_x=angle_x, angle_y=angle_y,
        arc_xy=arc, nu=cand.nu, b_residual=resid, ambiguous=ambiguous)
    return tri


def _embed_by_bisection(surface, A, a, b, c):
    """Fallback: root of theta -> d((a,0),(c,theta)) - b, then re-connect."""
    def g(theta):
        return distance(surface, A, SurfacePoint(c, theta)) - b

    lo, hi = 1e-9, math.pi - 1e-12
    if g(lo) > 0 or g(hi) < 0:
        raise DomainViolation("no apex angle realises the requested sides")
    theta_star = brentq(g, lo, hi, xtol=surface.tol.root_tol, rtol=1e-15)
    arcs = connect(surface, A, SurfacePoint(c, theta_star))
    arc, length = arcs[0]
    if arc.pattern_legs is None:
        raise DomainViolation("embedding degenerated to a pole path")
    cand = shooting.Candidate(nu=arc.nu, pattern="bisect",
                              turnings=len(arc.turnings), theta=theta_star,
                              length=length, legs=arc.pattern_legs)
    return theta_star, cand, abs(length - b)


def gauss_bonnet_audit(surface: RadialProfile,
                       tri: TriangleRealization) -> float:
    """|interior curvature - angle defect| for a pole triangle.

    The interior integral uses the wedge decomposition: with theta strictly
    monotone along the opposite edge, the region is 0 <= t <= T(theta) and
    the integral collapses to int W(T(theta)) dtheta against the primitive
    W(t) of G f.  The edge polyline resolution is tied to quad_tol so the
    audit error scales linearly with it.
    """
    quad_tol = surface.tol.quad_tol
    n_total = max(48, int(math.ceil(1.2 / math.sqrt(quad_tol))))
    theta_p, t_p = _edge_polyline(surface, tri, n_total)
    W = surface.curvature_mass_primitive.vec(t_p)
    interior = float(np.trapezoid(W, theta_p))
    defect = tri.angle_sum - math.pi
    return abs(interior - defect)


def _edge_polyline(surface, tri, n_total):
    legs = tri.arc_xy.pattern_legs
    nu = tri.nu
    if legs is None:
        raise ValidationError("triangle edge arc carries no branch layout")
    spans = [abs(b - a) for a, b in legs]
    total = sum(spans) or 1.0
    thetas = [np.zeros(1)]
    ts = [np.full(1, legs[0][0])]
    off = 0.0
    for (t_from, t_to), span in zip(legs, spans):
        if span < 1e-14:
            continue
        n_leg = max(16, int(n_total * span / total))
        _, th, tt = leg_polyline(surface, nu, t_from, t_to, n_leg)
        thetas.append(off + th[1:])
        ts.append(tt[1:])
        off += float(th[-1])
    return np.concatenate(thetas), np.concatenate(ts)


def dominance_check(m: RadialProfile, model: RadialProfile,
                    grid_n: int = 512):
    """True when m's radial curvature dominates the model's on the shared
    horizon; also returns the worst margin min(G_m - G_model)."""
    T = min(m.tmax, model.tmax)
    t = np.linspace(0.0, T, grid_n)
    margin = m.G(t) - model.G(t)
    worst = float(np.min(margin))
    return worst >= -10.0 * m.tol.quad_tol, worst


@dataclass(frozen=True)
class AlexandrovProfile:
    """Apex-angle samples theta(t) of proportionally shrunk triangles."""

    points: tuple          # ((t, theta), ...)
    ambiguous: tuple       # t values whose embedding was ambiguous

    def thetas(self):
        return np.asarray([th for _, th in self.points])


def alexandrov_profile(m: RadialProfile, model: RadialProfile,
                       tri_m: TriangleRealization, n: int) -> AlexandrovProfile:
    """Model apex angles of the triangle shrunk along its pole edges.

    The pole edges of tri_m are meridians, so the shrunk vertices are
    (a t, theta_x) and (c t, theta_y); the opposite side comes from the
    geodesic engine of m, and each shrunk triangle is embedded in the
    model.  Monotonicity of the result is the caller's assertion.
    """
    ok, worst = dominance_check(m, model)
    if not ok:
        raise PreconditionViolation(f"curvature dominance fails by {worst:.3g}")
    if not (0.0 < tri_m.angle_p < math.pi):
        raise PreconditionViolation("apex angle must lie in (0, pi)")
    a, c = tri_m.side_a, tri_m.side_c
    pts = []
    flagged = []
    for i in range(1, n + 1):
        t = i / n
        x_t = SurfacePoint(a * t, tri_m.x.theta)
        y_t = SurfacePoint(c * t, tri_m.y.theta)
        b_t = distance(m, x_t, y_t)
        tri_t = embed_triangle(model, a * t, b_t, c * t)
        pts.append((t, tri_t.angle_p))
        if tri_t.ambiguous:
            flagged.append(t)
    return AlexandrovProfile(points=tuple(pts), ambiguous=tuple(flagged))


def tct_verify(m: RadialProfile, model: RadialProfile,
               tri_m: TriangleRealization, delta0: float,
               angle_tol: float = 1e-6) -> ComparisonReport:
    """Compare tri_m against its equal-sides model triangle.

    Requires curvature dominance and apex angle below delta0, a sector
    width of the model with no pair of cut points (validated by the caller
    or by a sector scan).  Reports the three angle slacks angle_m -
    angle_model; all of them non-negative (within angle_tol) is a pass.
    """
    ok, worst = dominance_check(m, model)
    if not ok:
        raise PreconditionViolation(f"curvature dominance fails by {worst:.3g}")
    if not (0.0 < delta0 < math.pi):
        raise PreconditionViolation("delta0 must lie in (0, pi)")
    if tri_m.angle_p >= delta0:
        raise PreconditionViolation(
            f"apex angle {tri_m.angle_p:.6f} is not below delta0 = {delta0:.6f}")

    tri_t = embed_triangle(model, tri_m.side_a, tri_m.side_b, tri_m.side_c)
    side_residuals = (0.0, tri_t.b_residual, 0.0)
    slacks = (tri_m.angle_p - tri_t.angle_p,
              tri_m.angle_x - tri_t.angle_x,
              tri_m.angle_y - tri_t.angle_y)
    # theta is monotone along the opposite edge, so the whole triangle
    # lies between the meridians of its vertices.
    in_sector = tri_t.angle_p < delta0
    passed = all(s >= -angle_tol for s in slacks) and in_sector
    return ComparisonReport(side_residuals=side_residuals, angle_slacks=slacks,
                            passed=passed, in_sector=in_sector,
                            delta0=delta0, angle_tol=angle_tol)
