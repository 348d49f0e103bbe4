"""Function descriptors: closed-form expressions in t and sampled grids.

Closed forms are parsed with sympy (constants, polynomials, exp/sinh/cosh/
sin/cos, rational combinations, Piecewise); sampled grids use monotone cubic
interpolation.  Both expose vectorised and fast scalar evaluation plus
derivatives, which is all the numerical layers need.
"""

from __future__ import annotations

import numpy as np
import sympy as sp
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import ValidationError

_T = sp.Symbol("t", real=True)

_ALLOWED = {
    "t": _T,
    "pi": sp.pi,
    "E": sp.E,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
    "atan": sp.atan,
    "Abs": sp.Abs,
    "Min": sp.Min,
    "Max": sp.Max,
    "Piecewise": sp.Piecewise,
}


def parse_expr(text: str) -> sp.Expr:
    """Parse a closed-form expression in the variable t.

    Accepts ``^`` as exponentiation.  Raises ValidationError on anything
    sympy cannot interpret or that uses symbols other than t.
    """
    try:
        expr = sp.sympify(text, locals=_ALLOWED, convert_xor=True)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ValidationError(f"cannot parse expression {text!r}: {exc}") from None
    extra = expr.free_symbols - {_T}
    if extra:
        raise ValidationError(
            f"expression {text!r} uses unknown symbols {sorted(map(str, extra))}"
        )
    return expr


def piecewise_breakpoints(expr: sp.Expr, lo: float, hi: float) -> list[float]:
    """Interior breakpoints of any Piecewise pieces of expr inside (lo, hi)."""
    points = set()
    for pw in expr.atoms(sp.Piecewise):
        for _, cond in pw.args:
            for rel in cond.atoms(sp.StrictLessThan, sp.LessThan,
                                   sp.StrictGreaterThan, sp.GreaterThan, sp.Eq):
                for side in (rel.lhs - rel.rhs,):
                    try:
                        roots = sp.solveset(sp.Eq(side, 0), _T, domain=sp.S.Reals)
                    except Exception:
                        continue
                    if isinstance(roots, sp.FiniteSet):
                        for r in roots:
                            v = float(r)
                            if lo < v < hi:
                                points.add(v)
    return sorted(points)


def _as_array(out, ref):
    arr = np.asarray(out, dtype=float)
    if arr.shape != np.shape(ref):
        arr = np.broadcast_to(arr, np.shape(ref)).copy()
    return arr


class ClosedForm:
    """Callable wrapper around a sympy expression of t."""

    def __init__(self, expr):
        self.expr = parse_expr(expr) if isinstance(expr, str) else sp.sympify(expr)
        self._vec = sp.lambdify(_T, self.expr, modules="numpy")
        self._scl = sp.lambdify(_T, self.expr, modules="math")

    def vec(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return _as_array(self._vec(t), t)

    def scl(self, t: float) -> float:
        return float(self._scl(t))

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.scl(float(t))
        return self.vec(t)

    def derivative(self, n: int = 1) -> "ClosedForm":
        return ClosedForm(sp.diff(self.expr, _T, n))

    def value_at_zero(self) -> float:
        """Value at t = 0, taking the limit when direct substitution fails."""
        v = self.expr.subs(_T, 0)
        if v.is_finite is False or v in (sp.nan, sp.zoo):
            v = sp.limit(self.expr, _T, 0, dir="+")
        try:
            return float(v)
        except TypeError:
            return float(sp.limit(self.expr, _T, 0, dir="+"))

    def __repr__(self):
        return f"ClosedForm({self.expr})"


class _FastPPoly:
    """Scalar-friendly view of a scipy PPoly (plain Horner, no dispatch)."""

    def __init__(self, ppoly):
        self.ppoly = ppoly
        self.x = ppoly.x
        self.c = ppoly.c
        # Python-float rows make the scalar path allocation-free.
        self._rows = [col.tolist() for col in ppoly.c]
        self._xs = self.x.tolist()
        self._n = len(self.x) - 1

    def vec(self, t: np.ndarray) -> np.ndarray:
        return self.ppoly(np.asarray(t, dtype=float))

    def scl(self, t: float) -> float:
        i = self.x.searchsorted(t, side="right") - 1
        if i < 0:
            i = 0
        elif i >= self._n:
            i = self._n - 1
        dx = t - self._xs[i]
        acc = 0.0
        for row in self._rows:
            acc = acc * dx + row[i]
        return acc

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.scl(float(t))
        return self.vec(t)

    def derivative(self, n: int = 1) -> "_FastPPoly":
        return _FastPPoly(self.ppoly.derivative(n))


class SampledGrid:
    """Monotone cubic interpolant over (t, y) samples."""

    def __init__(self, t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        if t.ndim != 1 or t.size < 4:
            raise ValidationError("sampled grid needs at least 4 nodes")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("sampled grid abscissae must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValidationError("sampled grid contains non-finite values")
        self.t = t
        self.y = y
        self._pp = _FastPPoly(PchipInterpolator(t, y, extrapolate=True))

    def vec(self, t):
        return self._pp.vec(t)

    def scl(self, t):
        return self._pp.scl(t)

    def __call__(self, t):
        return self._pp(t)

    def derivative(self, n: int = 1):
        return self._pp.derivative(n)

    def __repr__(self):
        return f"SampledGrid(n={self.t.size}, [{self.t[0]:g}, {self.t[-1]:g}])"


def hermite_fast(t, y, dy) -> _FastPPoly:
    """Fast-eval cubic Hermite spline through (t, y) with slopes dy."""
    return _FastPPoly(CubicHermiteSpline(np.asarray(t, float),
                                         np.asarray(y, float),
                                         np.asarray(dy, float)))


def stitched_hermite_fast(t, y, d_fn, breaks) -> _FastPPoly:
    """Hermite spline whose slope function jumps at known breakpoints.

    d_fn is evaluated one-sidedly: at each segment edge the abscissa is
    nudged into the segment interior, so no cell straddles a slope jump.
    The breakpoints must be nodes of t.
    """
    from scipy.interpolate import PPoly

    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    inner = sorted(b for b in set(breaks) if t[0] < b < t[-1])
    edges = [t[0]] + inner + [t[-1]]
    eps = 1e-9 * max(abs(t[-1] - t[0]), 1.0)
    xs, cs = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (t >= a - 1e-12) & (t <= b + 1e-12)
        t_seg, y_seg = t[sel], y[sel]
        t_eval = np.clip(t_seg, a + eps, b - eps)
        sp = CubicHermiteSpline(t_seg, y_seg, d_fn(t_eval))
        xs.append(sp.x[:-1])
        cs.append(sp.c)
    xs.append(np.asarray([t[-1]]))
    return _FastPPoly(PPoly(np.hstack(cs), np.concatenate(xs)))
