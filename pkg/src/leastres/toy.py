"""One-dimensional variation families: the warm-up version of nose stretching.

A convex piecewise-linear function on a segment is perturbed by adjoining
a point O below its graph.  The induced family interpolates between the
function and the hull of graph-and-point for s in [0, 1] (where the
resistance is exactly linear in s) and intersects with a homothety for
s < 0; the two one-sided derivatives at s = 0 agree and equal
F(OA0) + F(OB0) - F(A0 B0) for the tangency points A0, B0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad

from .errors import ValidityError


def f1_by_name(name: str):
    if name in ("newton1d", "newton"):
        return lambda p: 1.0 / (1.0 + p ** 2)
    if name == "square":
        return lambda p: p ** 2
    raise ValueError(f"unknown 1d pressure {name!r}")


@dataclass(frozen=True)
class ConvexFn1D:
    """Piecewise-linear convex function given by breakpoints and values."""

    xs: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vals = np.asarray(self.vals, dtype=float)
        if xs.ndim != 1 or xs.shape != vals.shape or len(xs) < 2:
            raise ValueError("need matching 1d arrays with at least 2 breakpoints")
        if not (np.diff(xs) > 0).all():
            raise ValueError("breakpoints must be strictly increasing")
        slopes = np.diff(vals) / np.diff(xs)
        tol = 1e-9 * max(1.0, float(np.abs(slopes).max()))
        if not (np.diff(slopes) >= -tol).all():
            raise ValidityError("slopes decrease: function is not convex")
        for name, a in (("xs", xs), ("vals", vals)):
            a = np.ascontiguousarray(a)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @staticmethod
    def from_callable(fn, a, b, n=2001) -> "ConvexFn1D":
        xs = np.linspace(a, b, n)
        return ConvexFn1D(xs, fn(xs))

    @cached_property
    def slopes(self):
        return np.diff(self.vals) / np.diff(self.xs)

    def __call__(self, x):
        return np.interp(x, self.xs, self.vals)

    @property
    def interval(self):
        return float(self.xs[0]), float(self.xs[-1])


def resistance_1d(u: ConvexFn1D, f1) -> float:
    """Exact resistance of a piecewise-linear profile: sum f1(slope) * length."""
    if isinstance(f1, str):
        f1 = f1_by_name(f1)
    return float((f1(u.slopes) * np.diff(u.xs)).sum())


def resistance_1d_analytic(du, a, b, f1) -> float:
    """Adaptive quadrature of f1(u'(x)) for a smooth profile."""
    if isinstance(f1, str):
        f1 = f1_by_name(f1)
    val, _ = quad(lambda x: f1(du(x)), a, b, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(val)


def _lower_hull_1d(x, y):
    """Lower convex hull boundary of a 2D point set, as breakpoint arrays."""
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    keep = np.concatenate([[True], np.diff(x) > 0])
    # among equal abscissas the lexsort put the smallest value first
    x, y = x[keep], y[keep]
    hx, hy = [], []
    for xi, yi in zip(x, y):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (yi - hy[-2]) - (hy[-1] - hy[-2]) * (xi - hx[-2])
            if cross <= 1e-300:
                hx.pop(); hy.pop()
            else:
                break
        hx.append(xi); hy.append(yi)
    return np.array(hx), np.array(hy)


@dataclass(frozen=True)
class ToyFamily:
    """Base profile plus a nose point O strictly below its graph.

    ``window`` is the open interval that the family is allowed to modify;
    both tangency points must be interior to the profile's segment.
    """

    u: ConvexFn1D
    nose: tuple
    window: tuple | None = None

    def __post_init__(self):
        o1, o2 = float(self.nose[0]), float(self.nose[1])
        object.__setattr__(self, "nose", (o1, o2))
        a, b = self.u.interval
        if not (a < o1 < b):
            raise ValidityError("nose abscissa must be interior to the segment")
        if o2 >= self.u(np.array([o1]))[0]:
            raise ValidityError("nose must lie strictly below the graph")
        xa, xb = self.tangency_abscissas
        if self.window is None:
            pad = 0.05 * (b - a)
            object.__setattr__(self, "window", (max(a, xa - pad), min(b, xb + pad)))
        w0, w1 = self.window
        if not (w0 <= xa and xb <= w1):
            raise ValidityError("tangency points fall outside the working window")
        if np.isclose(xa, a) or np.isclose(xb, b):
            raise ValidityError("tangent lines touch at the segment endpoints")

    @cached_property
    def _tangency(self):
        o1, o2 = self.nose
        xs, vals = self.u.xs, self.u.vals
        k = (vals - o2) / (xs - o1 + np.where(xs == o1, np.nan, 0.0))
        right = xs > o1
        left = xs < o1
        m_hi = np.nanmin(k[right])
        m_lo = np.nanmax(k[left])
        if m_lo > m_hi + 1e-12:
            raise ValidityError("no support line: nose not below the convex hull")
        tol = 1e-12 * max(1.0, abs(m_hi), abs(m_lo))
        # outermost touching breakpoint on each side
        iB = int(np.flatnonzero(right & (np.abs(k - m_hi) <= tol))[-1])
        iA = int(np.flatnonzero(left & (np.abs(k - m_lo) <= tol))[0])
        return iA, iB, float(m_lo), float(m_hi)

    @property
    def tangency_abscissas(self):
        iA, iB, _, _ = self._tangency
        return float(self.u.xs[iA]), float(self.u.xs[iB])

    @property
    def tangent_slopes(self):
        _, _, m_lo, m_hi = self._tangency
        return m_lo, m_hi


def _homothety_graph(u: ConvexFn1D, o1, o2, s):
    """Graph of the ratio-(1-s) homothety of u about the nose point."""
    hx = (1 - s) * u.xs + s * o1
    hy = (1 - s) * u.vals + s * o2
    return hx, hy


def toy_family_at(fam: ToyFamily, s: float) -> ConvexFn1D:
    """Family member u^(s): hull blend for 0 <= s <= 1, intersection for s < 0."""
    if s > 1.0:
        raise ValueError("family parameter must satisfy s <= 1")
    u = fam.u
    if s == 0.0:
        return u
    o1, o2 = fam.nose
    hx, hy = _homothety_graph(u, o1, o2, s)
    if s > 0:
        x = np.concatenate([u.xs, hx])
        y = np.concatenate([u.vals, hy])
        bx, by = _lower_hull_1d(x, y)
        return ConvexFn1D(bx, by)
    # s < 0: pointwise max of u and the expanded homothety
    a, b = u.interval
    grid = np.unique(np.concatenate([u.xs, hx[(hx >= a) & (hx <= b)]]))
    gu = u(grid)
    gh = np.interp(grid, hx, hy)
    diff = gu - gh
    crossings = []
    for i in range(len(grid) - 1):
        if diff[i] * diff[i + 1] < 0:
            t = diff[i] / (diff[i] - diff[i + 1])
            crossings.append(grid[i] + t * (grid[i + 1] - grid[i]))
    if crossings:
        grid = np.unique(np.concatenate([grid, crossings]))
        gu = u(grid)
        gh = np.interp(grid, hx, hy)
    vals = np.maximum(gu, gh)
    changed = grid[np.abs(vals - gu) > 1e-12]
    w0, w1 = fam.window
    if len(changed) and (changed.min() < w0 or changed.max() > w1):
        raise ValidityError(f"s={s} modifies the profile outside the working window")
    keep = np.concatenate([[True], np.diff(grid) > 1e-15])
    return ConvexFn1D(grid[keep], vals[keep])


@dataclass(frozen=True)
class ToySlopes:
    numeric: float
    analytic: float
    left: float
    right: float
    samples: tuple


def toy_slope_identity(fam: ToyFamily, f1, n_samples=11, fd_step=1e-4) -> ToySlopes:
    """Numeric versus analytic derivative of s -> F(u^(s)) at s = 0.

    The analytic value is F(OA0) + F(OB0) - F(A0 B0), assembled from the
    two tangent segments and the breakpoint chain between the tangency
    points.  The numeric slope is a least-squares fit over [0, 1]; the
    one-sided derivatives come from small steps on either side.
    """
    if isinstance(f1, str):
        f1 = f1_by_name(f1)
    iA, iB, m_lo, m_hi = fam._tangency
    o1, _ = fam.nose
    u = fam.u
    xa, xb = u.xs[iA], u.xs[iB]
    F_OA = f1(m_lo) * (o1 - xa)
    F_OB = f1(m_hi) * (xb - o1)
    seg = slice(iA, iB)
    F_arc = float((f1(u.slopes[seg]) * np.diff(u.xs)[seg]).sum())
    analytic = F_OA + F_OB - F_arc

    svals = np.linspace(0.0, 1.0, n_samples)
    Fs = np.array([resistance_1d(toy_family_at(fam, s), f1) for s in svals])
    A = np.column_stack([np.ones_like(svals), svals])
    coef, *_ = np.linalg.lstsq(A, Fs, rcond=None)
    numeric = float(coef[1])

    F0 = resistance_1d(u, f1)
    right = (resistance_1d(toy_family_at(fam, fd_step), f1) - F0) / fd_step
    left = (F0 - resistance_1d(toy_family_at(fam, -fd_step), f1)) / fd_step
    return ToySlopes(numeric, analytic, float(left), float(right),
                     tuple(zip(svals.tolist(), Fs.tolist())))
