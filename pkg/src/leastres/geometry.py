"""Polyhedral convex geometry over planar grids.

The module provides the three geometric carriers used everywhere else:

- ``Domain``: a compact convex planar region (disk or convex polygon)
  discretized by an axis-aligned grid plus boundary nodes where grid
  lines cross the boundary.
- ``GridFn``: a function sampled at the domain nodes whose lower convex
  envelope reproduces the samples (discrete convexity).
- ``PolyBody``: a bounded convex polytope in 3-space given by its
  vertices, with facets derived on demand.

All types are immutable after construction and all operations are pure,
so values can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from matplotlib.tri import Triangulation
from scipy.spatial import ConvexHull, QhullError

from .errors import CoverageError, DegenerateInputError, ValidityError

# Facets whose outward normal has n3 below this count as "lower" surface.
_N3_TOL = 1e-9
# Relative tolerance used when merging coplanar hull facets.
_PLANE_MERGE_TOL = 1e-12


def _as_points(a, dim):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, dim)
    if a.ndim != 2 or a.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {a.shape}")
    return a


def _freeze(a):
    a = np.array(a, dtype=float, order="C")  # owned copy: callers keep their arrays
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# Domain


@dataclass(frozen=True)
class Domain:
    """Compact convex planar domain with a uniform grid of step ``h``.

    Nodes are the lattice points inside the region plus the points where
    lattice lines cross the boundary (and polygon vertices).  Cells are
    the lattice squares; partially covered cells carry the area of their
    intersection with the region as quadrature weight.
    """

    kind: str
    h: float
    center: np.ndarray | None = None
    radius: float | None = None
    vertices: np.ndarray | None = None

    @staticmethod
    def disk(center, radius, h) -> "Domain":
        return Domain(kind="disk", h=float(h),
                      center=_freeze(np.asarray(center, dtype=float).reshape(2)),
                      radius=float(radius))

    @staticmethod
    def polygon(vertices, h) -> "Domain":
        return Domain(kind="polygon", h=float(h),
                      vertices=_freeze(_as_points(vertices, 2)))

    @staticmethod
    def square(lo, hi, h) -> "Domain":
        return Domain.polygon([[lo, lo], [hi, lo], [hi, hi], [lo, hi]], h)

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid step h must be positive")
        if self.kind == "disk":
            if self.radius is None or self.radius <= 0:
                raise ValueError("disk radius must be positive")
        elif self.kind == "polygon":
            v = self.vertices
            if v is None or len(v) < 3:
                raise ValueError("polygon needs at least 3 vertices")
            e = np.roll(v, -1, axis=0) - v
            cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
            scale = float(np.abs(e).max()) ** 2
            if not np.all(cross > 1e-12 * scale):
                raise ValueError("polygon vertices must be strictly convex and counterclockwise")
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        span = min(self.bbox[1] - self.bbox[0], self.bbox[3] - self.bbox[2])
        if span < 4 * self.h:
            raise ValueError("grid step too coarse: fewer than 4 cells per diameter")

    @cached_property
    def bbox(self):
        if self.kind == "disk":
            cx, cy = self.center
            r = self.radius
            return (cx - r, cx + r, cy - r, cy + r)
        v = self.vertices
        return (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())

    @cached_property
    def diameter(self) -> float:
        if self.kind == "disk":
            return 2.0 * self.radius
        v = self.vertices
        d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(-1)
        return float(np.sqrt(d2.max()))

    def contains(self, points, tol=None):
        """Vectorized membership test, inclusive of the boundary within tol."""
        p = _as_points(points, 2)
        if tol is None:
            tol = 1e-12 * self.diameter
        if self.kind == "disk":
            d = np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1])
            return d <= self.radius + tol
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        # ccw polygon: inside iff left of every edge
        rel = p[:, None, :] - v[None, :, :]
        cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
        return (cross >= -tol * np.abs(e).max()).all(axis=1)

    # -- lattice ------------------------------------------------------------

    @cached_property
    def grid_x(self):
        return self._lattice(0)

    @cached_property
    def grid_y(self):
        return self._lattice(1)

    def _lattice(self, axis):
        lo = self.bbox[0] if axis == 0 else self.bbox[2]
        hi = self.bbox[1] if axis == 0 else self.bbox[3]
        if self.kind == "disk":
            c = self.center[axis]
            k = int(np.floor((hi - c) / self.h + 1e-9))
            return _freeze(c + self.h * np.arange(-k, k + 1))
        n = int(np.floor((hi - lo) / self.h + 1e-9))
        return _freeze(lo + self.h * np.arange(0, n + 1))

    @cached_property
    def _node_build(self):
        xs, ys = self.grid_x, self.grid_y
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        lattice = np.column_stack([X.ravel(), Y.ravel()])
        ij = np.column_stack([np.repeat(np.arange(len(xs)), len(ys)),
                              np.tile(np.arange(len(ys)), len(xs))])
        keep = self.contains(lattice)
        lattice, ij = lattice[keep], ij[keep]
        extras = self._boundary_extras()
        if len(extras):
            # drop extras that duplicate lattice nodes
            tol = 1e-9 * self.h
            kx = np.round(extras / (tol)).astype(np.int64)
            lx = np.round(lattice / (tol)).astype(np.int64)
            lset = set(map(tuple, lx))
            fresh = np.array([tuple(r) not in lset for r in kx]) if len(kx) else np.array([], bool)
            extras = extras[fresh]
            # dedupe extras among themselves
            if len(extras):
                _, idx = np.unique(np.round(extras / tol).astype(np.int64), axis=0, return_index=True)
                extras = extras[np.sort(idx)]
                order = np.lexsort((extras[:, 1], extras[:, 0]))
                extras = extras[order]
        nodes = np.vstack([lattice, extras]) if len(extras) else lattice
        ij_all = np.vstack([ij, -np.ones((len(extras), 2), dtype=int)]) if len(extras) else ij
        return _freeze(nodes), ij_all

    def _boundary_extras(self):
        pts = []
        if self.kind == "disk":
            cx, cy = self.center
            r = self.radius
            for x in self.grid_x:
                d2 = r * r - (x - cx) ** 2
                if d2 > 0:
                    s = np.sqrt(d2)
                    pts += [(x, cy - s), (x, cy + s)]
            for y in self.grid_y:
                d2 = r * r - (y - cy) ** 2
                if d2 > 0:
                    s = np.sqrt(d2)
                    pts += [(cx - s, y), (cx + s, y)]
        else:
            v = self.vertices
            pts = [tuple(p) for p in v]
            for a, b in zip(v, np.roll(v, -1, axis=0)):
                for x in self.grid_x:
                    p = _segment_cross(a, b, axis=0, level=x)
                    if p is not None:
                        pts.append(p)
                for y in self.grid_y:
                    p = _segment_cross(a, b, axis=1, level=y)
                    if p is not None:
                        pts.append(p)
        return np.array(pts, dtype=float).reshape(-1, 2)

    @cached_property
    def nodes(self):
        return self._node_build[0]

    @cached_property
    def node_ij(self):
        """Lattice index (i, j) per node; (-1, -1) for boundary extras."""
        return self._node_build[1]

    @cached_property
    def boundary_node_mask(self):
        p = self.nodes
        tol = 1e-9 * self.diameter
        if self.kind == "disk":
            d = np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1])
            return d >= self.radius - tol
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        rel = p[:, None, :] - v[None, :, :]
        cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
        elen = np.hypot(e[:, 0], e[:, 1])
        return (cross / elen[None, :] <= tol).any(axis=1)

    # -- cells ---------------------------------------------------------------

    @cached_property
    def _cell_build(self):
        xs, ys = self.grid_x, self.grid_y
        h = self.h
        cx = np.concatenate([[xs[0] - h], xs]) + h / 2
        cy = np.concatenate([[ys[0] - h], ys]) + h / 2
        MX, MY = np.meshgrid(cx, cy, indexing="ij")
        mids = np.column_stack([MX.ravel(), MY.ravel()])
        ij = np.column_stack([np.repeat(np.arange(len(cx)), len(cy)),
                              np.tile(np.arange(len(cy)), len(cx))])
        # full cells: all four corners inside (convexity makes this exact)
        off = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * (h / 2)
        inside = np.ones(len(mids), dtype=bool)
        touching = np.zeros(len(mids), dtype=bool)
        for o in off:
            c_in = self.contains(mids + o)
            touching |= c_in
            inside &= c_in
        weights = np.where(inside, h * h, 0.0)
        partial = ~inside
        # cells with all corners outside can still clip a disk bulge
        if self.kind == "disk":
            d = np.hypot(mids[:, 0] - self.center[0], mids[:, 1] - self.center[1])
            partial &= d <= self.radius + h
        else:
            partial &= touching | self.contains(mids)
        if partial.any():
            weights[partial] = self._clip_area(mids[partial])
        keep = weights > 0
        return _freeze(mids[keep]), _freeze(weights[keep]), ij[keep]

    def _clip_area(self, mids, sub=24):
        """Subsampled area of cell-and-domain intersection per midpoint."""
        t = (np.arange(sub) + 0.5) / sub - 0.5
        OX, OY = np.meshgrid(t * self.h, t * self.h, indexing="ij")
        offs = np.column_stack([OX.ravel(), OY.ravel()])
        areas = np.empty(len(mids))
        for k, m in enumerate(mids):
            areas[k] = self.contains(m + offs).mean() * self.h * self.h
        return areas

    @cached_property
    def cell_mid(self):
        return self._cell_build[0]

    @cached_property
    def cell_quad(self):
        """Per-cell quadrature point: the midpoint with a tiny irrational shift.

        Symmetric shapes align envelope creases with the exact midpoints
        (rays through lattice nodes), making the facet choice there
        ambiguous.  No line through two lattice nodes passes through an
        offset with coordinates rationally independent of the lattice, so
        the shifted point always falls in a single facet interior.
        """
        off = self.h * np.array([(np.sqrt(2) - 1) / 16, (np.sqrt(3) - 1) / 24])
        return _freeze(self.cell_mid + off)

    @cached_property
    def cell_weight(self):
        return self._cell_build[1]

    @cached_property
    def cell_ij(self):
        return self._cell_build[2]

    @cached_property
    def area(self) -> float:
        return float(self.cell_weight.sum())

    def interior_cell_mask(self):
        """Cells with full weight whose neighbors all exist (not clipped)."""
        return self.cell_weight >= self.h * self.h * (1 - 1e-9)


def _segment_cross(a, b, axis, level):
    lo, hi = (a[axis], b[axis]) if a[axis] <= b[axis] else (b[axis], a[axis])
    if not (lo < level < hi):
        return None
    t = (level - a[axis]) / (b[axis] - a[axis])
    p = a + t * (b - a)
    return (p[0], p[1])


# ---------------------------------------------------------------------------
# Lower hull of a 3D point cloud (shared by GridFn envelopes and PolyBody)


class LowerHull:
    """Lower convex hull of a 3D point cloud, viewed as a convex function.

    Provides fast evaluation and gradient queries of the piecewise-linear
    function whose graph is the lower hull, via point location in the
    projected facet triangulation with a max-of-planes fallback (every
    lower facet plane under-estimates the surface, so the maximum over
    planes is exact inside the projection).
    """

    def __init__(self, points3, check: bool = True):
        pts = _as_points(points3, 3)
        if len(pts) < 3:
            raise DegenerateInputError("need at least 3 points for a lower hull")
        xy = pts[:, :2]
        spread = xy.max(0) - xy.min(0)
        diam = float(np.hypot(*spread)) or 1.0
        if check and np.linalg.matrix_rank(xy - xy.mean(0), tol=1e-12 * diam) < 2:
            raise DegenerateInputError("sample sites are collinear")
        zspan = float(pts[:, 2].max() - pts[:, 2].min())
        guard = np.array([[xy[:, 0].mean(), xy[:, 1].mean(),
                           pts[:, 2].max() + 3.0 * (zspan + diam)]])
        cloud = np.vstack([pts, guard])
        try:
            hull = ConvexHull(cloud)
        except QhullError:
            # fall back to joggled input for pathological coplanarities
            hull = ConvexHull(cloud, qhull_options="QJ")
        eq = hull.equations
        lower = eq[:, 2] < -_N3_TOL
        simplices = hull.simplices[lower]
        if (simplices == len(pts)).any():  # guard point never sits on the lower hull
            keep = ~(simplices == len(pts)).any(axis=1)
            simplices = simplices[keep]
            eqs = eq[lower][keep]
        else:
            eqs = eq[lower]
        if len(simplices) == 0:
            raise DegenerateInputError("no lower facets found")
        self.points = pts
        self.diameter = diam
        self.simplices = simplices
        # plane z = a x + b y + c per facet
        n = eqs[:, :3]
        self.normals = n
        a = -n[:, 0] / n[:, 2]
        b = -n[:, 1] / n[:, 2]
        c = -eqs[:, 3] / n[:, 2] - 0.0
        self.plane = np.column_stack([a, b, c])
        self._finder = None

    @cached_property
    def vertex_indices(self):
        """Indices of input points that are vertices of the lower hull."""
        return np.unique(self.simplices)

    def _get_finder(self):
        if self._finder is None:
            p = self.points
            # degenerate projected triangles confuse the trapezoid map; drop them
            t = self.simplices
            v0, v1, v2 = p[t[:, 0], :2], p[t[:, 1], :2], p[t[:, 2], :2]
            area2 = np.abs((v1 - v0)[:, 0] * (v2 - v0)[:, 1] - (v1 - v0)[:, 1] * (v2 - v0)[:, 0])
            ok = area2 > 1e-14 * self.diameter**2
            self._finder_map = np.flatnonzero(ok)
            tri = Triangulation(p[:, 0], p[:, 1], triangles=t[ok])
            self._finder = tri.get_trifinder()
        return self._finder

    def locate(self, q):
        """Facet index per query point, -1 when point location fails."""
        q = _as_points(q, 2)
        finder = self._get_finder()
        idx = finder(np.ascontiguousarray(q[:, 0]), np.ascontiguousarray(q[:, 1]))
        out = np.where(idx >= 0, self._finder_map[np.clip(idx, 0, None)], -1)
        return out

    def _max_planes(self, q, chunk=512):
        """Exact envelope evaluation: max over facet planes (argmax facet)."""
        q = _as_points(q, 2)
        vals = np.empty(len(q))
        arg = np.empty(len(q), dtype=int)
        P = self.plane
        for s in range(0, len(q), chunk):
            block = q[s:s + chunk]
            z = block @ P[:, :2].T + P[:, 2]
            arg[s:s + chunk] = np.argmax(z, axis=1)
            vals[s:s + chunk] = z[np.arange(len(block)), arg[s:s + chunk]]
        return vals, arg

    def facet_at(self, q):
        q = _as_points(q, 2)
        # direct max-of-planes beats building a point locator on small inputs
        if len(q) * len(self.plane) <= 2_000_000 and self._finder is None:
            return self._max_planes(q)[1]
        idx = self.locate(q)
        miss = idx < 0
        if miss.any():
            _, arg = self._max_planes(q[miss])
            idx = idx.copy()
            idx[miss] = arg
        return idx

    def eval(self, q):
        """Envelope value at query points (plane extension outside the hull)."""
        q = _as_points(q, 2)
        idx = self.facet_at(q)
        pl = self.plane[idx]
        return pl[:, 0] * q[:, 0] + pl[:, 1] * q[:, 1] + pl[:, 2]

    @cached_property
    def _boundary_loop(self):
        """Counterclockwise vertex loop of the projected footprint."""
        xy = self.points[self.vertex_indices, :2]
        hull2 = ConvexHull(xy)
        return xy[hull2.vertices]

    def _clamp_inside(self, q):
        """Project points onto the footprint boundary, nudged inward."""
        loop = self._boundary_loop
        a = loop[None, :, :]
        d = (np.roll(loop, -1, axis=0) - loop)[None, :, :]
        dd = np.maximum((d * d).sum(-1), 1e-300)
        rel = q[:, None, :] - a
        t = np.clip((rel * d).sum(-1) / dd, 0.0, 1.0)
        proj = a + t[..., None] * d
        k = ((proj - q[:, None, :]) ** 2).sum(-1).argmin(axis=1)
        best = proj[np.arange(len(q)), k]
        center = loop.mean(axis=0)
        return best + 1e-9 * (center[None, :] - best)

    def grad(self, q):
        """Facet gradient at query points, shape (n, 2).

        Points outside the projected footprint take the gradient of the
        facet nearest to them on the boundary, which keeps quadrature on
        clipped boundary cells stable.
        """
        q = _as_points(q, 2)
        small = len(q) * len(self.plane) <= 2_000_000 and self._finder is None
        if small:
            vals, idx = self._max_planes(q)
            # detect points the planes only reach by extension
            covered = self._covered(q)
            if covered.all():
                return self.plane[idx][:, :2].copy()
            idx2 = idx.copy()
            inner = self._clamp_inside(q[~covered])
            _, idx2[~covered] = self._max_planes(inner)
            return self.plane[idx2][:, :2].copy()
        idx = self.locate(q)
        miss = idx < 0
        if miss.any():
            idx = idx.copy()
            inner = self._clamp_inside(q[miss])
            sub = self.locate(inner)
            fix = sub < 0
            if fix.any():
                _, arg = self._max_planes(inner[fix])
                sub[fix] = arg
            idx[miss] = sub
        return self.plane[idx][:, :2].copy()

    def _covered(self, q):
        loop = self._boundary_loop
        e = np.roll(loop, -1, axis=0) - loop
        rel = q[:, None, :] - loop[None, :, :]
        cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
        return (cross >= -1e-12 * self.diameter).all(axis=1)

    @cached_property
    def node_cone_widths(self):
        """Angular width of the discrete normal cone per input point.

        The cone at a point collects the normals of all lower facets whose
        planes are active there (support the surface at the point); the
        width is the largest pairwise angle.  Points strictly above the
        lower hull, and points in facet interiors, get width zero.
        """
        pts = self.points
        tol = 1e-9 * max(1.0, float(np.ptp(pts[:, 2])), self.diameter)
        width = np.zeros(len(pts))
        P = self.plane
        N = self.normals
        chunk = max(1, int(4e6 // max(len(P), 1)))
        for s in range(0, len(pts), chunk):
            block = pts[s:s + chunk]
            z = block[:, :2] @ P[:, :2].T + P[:, 2]
            active = z >= block[:, 2:3] - tol
            on_surface = z.max(axis=1) >= block[:, 2] - tol
            for k in np.flatnonzero(on_surface):
                n = N[active[k]]
                if len(n) < 2:
                    continue
                dots = np.clip(n @ n.T, -1.0, 1.0)
                width[s + k] = float(np.arccos(dots.min()))
        return width


# ---------------------------------------------------------------------------
# GridFn


@dataclass(frozen=True)
class GridFn:
    """Function values at the domain nodes with height cap M.

    The class of admissible shapes requires 0 <= u <= M and discrete
    convexity (the lower convex envelope of the node graph reproduces the
    node values).  Values outside [0, M] are tolerated for intermediate
    constructions; use :meth:`assert_shape_class` where class membership
    matters.
    """

    domain: Domain
    values: np.ndarray
    height_cap: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.domain.nodes),):
            raise ValueError("values must have one entry per domain node")
        if not np.isfinite(v).all():
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", _freeze(v))

    @staticmethod
    def from_callable(domain, fn, height_cap) -> "GridFn":
        p = domain.nodes
        return GridFn(domain, fn(p[:, 0], p[:, 1]), float(height_cap))

    def envelope_tol(self) -> float:
        return 1e-9 * max(abs(self.height_cap), 1.0)

    @cached_property
    def envelope(self) -> LowerHull:
        p = self.domain.nodes
        return LowerHull(np.column_stack([p, self.values]))

    def convexity_gap(self) -> float:
        """Max excess of node values over their own lower convex envelope."""
        return float(np.max(self.values - self.envelope.eval(self.domain.nodes)))

    def is_discretely_convex(self, tol=None) -> bool:
        tol = self.envelope_tol() if tol is None else tol
        return self.convexity_gap() <= tol

    def assert_shape_class(self, tol=None):
        tol = self.envelope_tol() if tol is None else tol
        if self.values.min() < -tol or self.values.max() > self.height_cap + tol:
            raise ValidityError("values leave the slab [0, M]")
        if not self.is_discretely_convex(tol):
            raise ValidityError("grid function is not discretely convex")

    def eval(self, points):
        return self.envelope.eval(points)

    @cached_property
    def cell_gradients(self):
        """Gradient per domain cell from the lower-hull facet over the cell."""
        return _freeze(self.envelope.grad(self.domain.cell_quad))

    def with_values(self, values) -> "GridFn":
        return GridFn(self.domain, values, self.height_cap)


# ---------------------------------------------------------------------------
# GridFn operations


def lower_convex_envelope(domain: Domain, points, heights, height_cap=None) -> GridFn:
    """Largest convex function below the samples, restricted to grid nodes.

    Idempotent: applying it to its own node output returns the same values.
    Raises ``DegenerateInputError`` when the sample sites are collinear.
    """
    p = _as_points(points, 2)
    z = np.asarray(heights, dtype=float).reshape(-1)
    if len(p) != len(z):
        raise ValueError("points and heights must have equal length")
    if not np.isfinite(z).all():
        raise ValueError("sample heights must be finite")
    hull = LowerHull(np.column_stack([p, z]))
    vals = hull.eval(domain.nodes)
    cap = float(z.max()) if height_cap is None else float(height_cap)
    return GridFn(domain, vals, cap)


def envelope_of_values(u: GridFn) -> GridFn:
    """Re-project node values onto their own lower convex envelope."""
    vals = u.envelope.eval(u.domain.nodes)
    return GridFn(u.domain, np.minimum(vals, u.values), u.height_cap)


def singular_points(u: GridFn, angle_tol: float | None = None):
    """Indices of nodes whose discrete normal cone is wider than ``angle_tol``.

    The default tolerance is ``4 h / diameter``.  The result shrinks as the
    tolerance grows.
    """
    if angle_tol is None:
        angle_tol = 4.0 * u.domain.h / u.domain.diameter
    if angle_tol <= 0:
        raise ValueError("angle tolerance must be positive")
    width = u.envelope.node_cone_widths
    return np.flatnonzero(width > angle_tol)


# ---------------------------------------------------------------------------
# PolyBody


@dataclass(frozen=True)
class PolyBody:
    """Bounded convex polytope in 3-space (vertex representation).

    ``degenerate`` marks bodies of affine dimension < 3 (slabs, segments,
    points); they remain valid for support queries and resistance sums.
    """

    vertices: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vertices", _freeze(_as_points(self.vertices, 3)))

    @staticmethod
    def from_points(points) -> "PolyBody":
        pts = _as_points(points, 3)
        if len(pts) == 0:
            raise DegenerateInputError("empty point set")
        c = pts.mean(0)
        scale = max(float(np.abs(pts - c).max()), 1e-300)
        u, s, vt = np.linalg.svd(pts - c, full_matrices=False)
        dim = int((s > 1e-12 * scale * np.sqrt(len(pts))).sum())
        if dim == 3:
            hull = ConvexHull(pts)
            verts = pts[hull.vertices]
            return PolyBody(verts[np.lexsort(verts.T[::-1])], degenerate=False)
        if dim == 2:
            plane = vt[:2]
            flat = (pts - c) @ plane.T
            hull = ConvexHull(flat)
            verts = pts[hull.vertices]
            return PolyBody(verts[np.lexsort(verts.T[::-1])], degenerate=True)
        if dim == 1:
            axis = vt[0]
            t = (pts - c) @ axis
            verts = np.vstack([pts[np.argmin(t)], pts[np.argmax(t)]])
            return PolyBody(verts[np.lexsort(verts.T[::-1])], degenerate=True)
        return PolyBody(pts[:1], degenerate=True)

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        lo, hi = v.min(0), v.max(0)
        return max(float(np.linalg.norm(hi - lo)), 1e-300)

    @cached_property
    def centroid(self):
        return self.vertices.mean(0)

    @cached_property
    def _hull(self):
        if self.degenerate:
            return None
        return ConvexHull(self.vertices)

    @cached_property
    def facet_normals_areas(self):
        """(normals, areas) over simplicial facets; coplanar pieces not merged.

        For degenerate planar bodies the two sides of the polygon are
        reported with opposite normals, so closedness (sum area*n = 0)
        still holds.
        """
        if self.degenerate:
            v = self.vertices
            if len(v) < 3:
                return np.zeros((0, 3)), np.zeros(0)
            c = v.mean(0)
            u_, s, vt = np.linalg.svd(v - c, full_matrices=False)
            n = vt[2] / np.linalg.norm(vt[2])
            area = _polygon_area_3d(v, n)
            return np.vstack([n, -n]), np.array([area, area])
        hull = self._hull
        eq = hull.equations
        n = eq[:, :3]
        pts = self.vertices
        t = hull.simplices
        cr = np.cross(pts[t[:, 1]] - pts[t[:, 0]], pts[t[:, 2]] - pts[t[:, 0]])
        areas = 0.5 * np.linalg.norm(cr, axis=1)
        return n, areas

    @cached_property
    def facet_planes(self):
        """(normals, areas, support offsets) per simplicial facet.

        The offset is the support value of the facet plane: points of the
        body satisfy <x, n> <= offset.
        """
        if self.degenerate:
            n, a = self.facet_normals_areas
            if len(n) == 0:
                return n, a, np.zeros(0)
            off = (n @ self.vertices.T).max(axis=1)
            return n, a, off
        hull = self._hull
        n, a = self.facet_normals_areas
        return n, a, -hull.equations[:, 3]

    @cached_property
    def facets(self):
        """Merged facets as (unit normal, ordered vertex cycle, area) triples."""
        if self.degenerate:
            v = self.vertices
            if len(v) < 3:
                return ()
            normals, areas = self.facet_normals_areas
            cyc = tuple(range(len(v)))
            return ((normals[0], cyc, areas[0]), (normals[1], cyc[::-1], areas[1]))
        hull = self._hull
        eq = hull.equations
        tol = max(_PLANE_MERGE_TOL * self.diameter, 1e-13)
        groups = {}
        for fi in range(len(hull.simplices)):
            key = (tuple(np.round(eq[fi, :3] / (10 * tol))), round(eq[fi, 3] / (10 * tol * self.diameter)))
            groups.setdefault(key, []).append(fi)
        normals, areas = self.facet_normals_areas
        out = []
        for fis in groups.values():
            n = normals[fis[0]]
            verts = np.unique(np.concatenate([hull.simplices[fi] for fi in fis]))
            cycle = _order_cycle_points(hull.points, verts, n)
            # map hull-point indices back to body vertex indices
            cyc_idx = tuple(_match_vertex(self.vertices, hull.points[v]) for v in cycle)
            out.append((n, cyc_idx, float(areas[fis].sum())))
        return tuple(out)

    def validate(self, tol=1e-9):
        n, a = self.facet_normals_areas
        if len(n):
            closed = np.abs((n * a[:, None]).sum(0)).max()
            if closed > tol * max(a.sum(), 1.0):
                raise ValidityError("facet area vectors do not close up")
        return True

    def support(self, direction, face_tol=None):
        """Support value and vertex indices of the argmax face."""
        d = np.asarray(direction, dtype=float).reshape(3)
        vals = self.vertices @ d
        h = float(vals.max())
        tol = (1e-9 * self.diameter if face_tol is None else face_tol) * max(np.linalg.norm(d), 1.0)
        return h, np.flatnonzero(vals >= h - tol)

    def support_values(self, directions):
        d = _as_points(directions, 3)
        return (d @ self.vertices.T).max(axis=1)

    def translate(self, v) -> "PolyBody":
        return PolyBody(self.vertices + np.asarray(v, dtype=float).reshape(3), self.degenerate)

    def contains(self, points, tol=None) -> np.ndarray:
        p = _as_points(points, 3)
        tol = 1e-9 * self.diameter if tol is None else tol
        if self.degenerate:
            # fall back to a distance check against the vertex hull via support gaps
            dirs = _sphere_directions(64)
            h = self.support_values(dirs)
            return ((p @ dirs.T) <= h[None, :] + tol).all(axis=1)
        eq = self._hull.equations
        return (p @ eq[:, :3].T + eq[:, 3] <= tol).all(axis=1)

    @cached_property
    def lower(self) -> LowerHull:
        """The body's lower surface as a piecewise-linear function."""
        return LowerHull(self.vertices)

    @cached_property
    def projection_hull(self):
        """2D hull equations (a, b, c): inside iff a x + b y + c <= 0."""
        xy = self.vertices[:, :2]
        try:
            hull2 = ConvexHull(xy)
        except QhullError:
            raise DegenerateInputError("projection of body is degenerate")
        return hull2.equations


def _polygon_area_3d(v, n):
    c = v.mean(0)
    basis = _plane_basis(n)
    q = (v - c) @ basis.T
    order = np.argsort(np.arctan2(q[:, 1], q[:, 0]))
    q = q[order]
    x, y = q[:, 0], q[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _plane_basis(n):
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(n, a)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(n, b1)
    return np.vstack([b1, b2])


def _order_cycle_points(points, idx, n):
    v = points[idx]
    c = v.mean(0)
    basis = _plane_basis(n)
    q = (v - c) @ basis.T
    order = np.argsort(np.arctan2(q[:, 1], q[:, 0]))
    return [int(idx[k]) for k in order]


def _match_vertex(vertices, p):
    d = np.abs(vertices - p).sum(axis=1)
    return int(np.argmin(d))


def _sphere_directions(n):
    golden = (1 + 5 ** 0.5) / 2
    k = np.arange(n)
    z = 1 - 2 * (k + 0.5) / n
    r = np.sqrt(np.clip(1 - z * z, 0, None))
    phi = 2 * np.pi * k / golden
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


# ---------------------------------------------------------------------------
# PolyBody operations


def epigraph_body(u: GridFn) -> PolyBody:
    """Body between the graph of u and the plane z = M over the domain."""
    p = u.domain.nodes
    M = u.height_cap
    tol = u.envelope_tol()
    if u.values.max() > M + tol:
        raise ValidityError("function exceeds its height cap")
    graph = np.column_stack([p, u.values])
    rim = p[u.domain.boundary_node_mask]
    top = np.column_stack([rim, np.full(len(rim), M)])
    return PolyBody.from_points(np.vstack([graph, top]))


def body_to_fn(C: PolyBody, domain: Domain) -> GridFn:
    """Lower function of the body sampled at the domain nodes."""
    nodes = domain.nodes
    eq = C.projection_hull
    dist = nodes @ eq[:, :2].T + eq[:, 2]
    tol = 1e-7 * C.diameter
    outside = dist.max(axis=1) > tol
    if outside.any():
        k = int(np.flatnonzero(outside)[0])
        raise CoverageError(f"node {nodes[k]} outside the body projection")
    vals = C.lower.eval(nodes)
    return GridFn(domain, vals, float(C.vertices[:, 2].max()))


def minkowski_blend(C: PolyBody, D: PolyBody, s: float) -> PolyBody:
    """Convex combination (1-s) C + s D of two bodies, 0 <= s <= 1."""
    if not (0.0 <= s <= 1.0):
        raise ValueError("blend parameter s must lie in [0, 1]")
    if s == 0.0:
        return C
    if s == 1.0:
        return D
    V, W = C.vertices, D.vertices
    if len(V) * len(W) > 4_000_000:
        raise ValueError("blend vertex product too large; use a specialized family")
    sums = ((1 - s) * V)[:, None, :] + (s * W)[None, :, :]
    return PolyBody.from_points(sums.reshape(-1, 3))


def homothety(C: PolyBody, ratio: float, center) -> PolyBody:
    """Scale the body about a center; resistance scales as ratio^2."""
    if ratio <= 0:
        raise ValueError("homothety ratio must be positive")
    c = np.asarray(center, dtype=float).reshape(3)
    return PolyBody(c + ratio * (C.vertices - c), C.degenerate)


@dataclass(frozen=True)
class Segment3:
    """Closed segment [A, B] in 3-space; A == B is the degenerate point nose."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _freeze(np.asarray(self.a, dtype=float).reshape(3)))
        object.__setattr__(self, "b", _freeze(np.asarray(self.b, dtype=float).reshape(3)))

    @property
    def is_degenerate(self) -> bool:
        return bool(np.allclose(self.a, self.b))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))


def conv_with_segment(C: PolyBody, seg: Segment3) -> PolyBody:
    """Convex hull of the body and a segment; equals C when the segment is inside."""
    return PolyBody.from_points(np.vstack([C.vertices, seg.a[None, :], seg.b[None, :]]))


def shrink_family_negative(u: GridFn, A, B, s: float) -> GridFn:
    """Inner family member for s < 0: max of u and its two expanded homotheties.

    The homothety of the epigraph about a nose endpoint P = (p, z0) with
    ratio (1 - s) > 1 has lower function (1-s) u((x - s p)/(1-s)) + s z0.
    Queries falling outside the node hull after rescaling are answered by
    the extended envelope planes, which impose no extra constraint.
    """
    if s == 0.0:
        return u
    if s > 0:
        raise ValueError("shrink family is defined for s <= 0")
    A = np.asarray(A, dtype=float).reshape(3)
    B = np.asarray(B, dtype=float).reshape(3)
    nodes = u.domain.nodes
    vals = u.values.copy()
    for P in (A, B):
        ref = u.eval(P[:2][None, :])[0]
        if P[2] >= ref:
            raise ValidityError("nose point must lie strictly below the graph")
        y = (nodes - s * P[:2][None, :]) / (1.0 - s)
        cand = (1.0 - s) * u.envelope.eval(y) + s * P[2]
        vals = np.maximum(vals, cand)
    return GridFn(u.domain, vals, u.height_cap)


def support_function(C: PolyBody, n):
    """Support value of the body in direction n plus the argmax face vertices."""
    return C.support(n)


def extreme_vertices(C: PolyBody) -> np.ndarray:
    """Extreme points of the body; for polytopes these are the stored vertices."""
    return C.vertices
