"""Nose stretching: two-sided variation families around an extreme point.

Given a convex grid function u, a check point where the pressure Hessian
has a negative eigenvalue, and a closeness budget eps, the construction
places a short horizontal segment I = [A, B] just below the graph and
interpolates between the epigraph body C and C~ = conv(C u I):

    C_s = (1-s) C + s C~              for 0 <= s <= 1,
    C_s = C n [(1-s)C + sA] n [(1-s)C + sB]   for s < 0.

For the blend range the identity (1-s)C + s conv(C u I) =
conv(C u h_A(C) u h_B(C)), with h_P the ratio-(1-s) homothety about P,
reduces the family to a single hull of three vertex clouds.  The
resistance along the family obeys an exact quadratic law whose
coefficients have closed forms over the profile w(x1) = inf_x2 u(x1, x2).

Sites are prepared in a working frame: coordinates are rotated so (1, 0)
is an eigenvector of the negative eigenvalue and a shear removes the
x2-derivative at the anchor.  Shear is exact on grids; rotation falls
back to polyhedral resampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import FitError, PreconditionError, ResolutionError, ValidityError
from .geometry import (
    Domain,
    GridFn,
    LowerHull,
    PolyBody,
    Segment3,
    conv_with_segment,
    epigraph_body,
    shrink_family_negative,
    singular_points,
)
from .pressure import HessianClass, PressureModel, classify_hessian, eval_F, eval_F_body


# ---------------------------------------------------------------------------
# Site frame


def _rotation_for(eigvec):
    e = np.asarray(eigvec, dtype=float)
    e = e / np.linalg.norm(e)
    if abs(abs(e[0]) - 1.0) < 1e-12:
        return np.eye(2)
    return np.column_stack([e, [-e[1], e[0]]])


def _transform_pressure(f: PressureModel, rot, b) -> PressureModel:
    """Pressure in the sheared-rotated frame: f'(xi) = f(R (xi + (0, b)))."""
    if np.allclose(rot, np.eye(2)) and b == 0.0:
        return f
    shift = np.array([0.0, b])

    def push(xi):
        return (np.asarray(xi, dtype=float) + shift) @ rot.T

    grad = None if f.grad_fn is None else (lambda xi: f.grad(push(xi)) @ rot)
    hess = None
    if f.hess_fn is not None:
        def hess(xi):
            return np.einsum("ab,...bc,cd->...ad", rot.T, f.hess(push(xi)), rot)
    smooth = None if f.smooth_at_fn is None else (lambda xi: f.is_smooth_at(push(xi)))
    g_h = None
    if f.g_horizontal_fn is not None:
        # the bounded shear shift drops out of the radial limit; only the
        # rotation of the horizontal direction survives
        def g_h(n):
            n = np.asarray(n, dtype=float)
            m = n.copy()
            m[..., :2] = n[..., :2] @ rot.T
            return f.g_horizontal_fn(m)
    return PressureModel("custom", lambda xi: f.value(push(xi)), grad, hess, smooth, g_h)


def _rotate_domain(domain: Domain, rot) -> Domain:
    if np.allclose(rot, np.eye(2)):
        return domain
    if domain.kind == "disk":
        return Domain.disk(rot.T @ domain.center, domain.radius, domain.h)
    return Domain.polygon(domain.vertices @ rot, domain.h)


@dataclass(frozen=True)
class StretchSite:
    """Validated nose-stretch configuration at one extreme point.

    Geometry lives in the site frame (rotated so the concavity direction
    is the x1-axis, sheared so the x2-derivative vanishes at the anchor);
    ``rot`` and ``shear_b`` map back to the original frame.
    """

    x_check: np.ndarray
    eps: float
    rot: np.ndarray
    shear_b: float
    x0: np.ndarray
    z0: float
    delta: float
    seg: Segment3
    window: tuple
    radius: float
    s_min: float
    grad_at_check: np.ndarray
    _us: GridFn = field(repr=False, default=None)
    _fingerprint: float = field(repr=False, default=0.0)

    @property
    def depth(self) -> float:
        """Gap between the anchor height and the nose height."""
        return float(self._us.eval(self.x0[None, :])[0] - self.z0)

    def site_function(self, u: GridFn) -> GridFn:
        self._check_fingerprint(u)
        return self._us

    def _check_fingerprint(self, u: GridFn):
        if abs(_fingerprint(u) - self._fingerprint) > 1e-9 * (1 + abs(self._fingerprint)):
            raise ValidityError("site was prepared for a different grid function")

    def in_window(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        xlo, xhi, ylo, yhi = self.window
        return (p[:, 0] >= xlo) & (p[:, 0] <= xhi) & (p[:, 1] >= ylo) & (p[:, 1] <= yhi)

    @cached_property
    def body(self) -> PolyBody:
        """Epigraph body in the site frame (shear applied exactly)."""
        return _site_body(self._us)

    @cached_property
    def body_stretched(self) -> PolyBody:
        return conv_with_segment(self.body, self.seg)

    def to_original(self, vals_site: np.ndarray, u: GridFn) -> GridFn:
        """Map site-frame node values back to the original frame.

        Exact for shear-only sites; rotated sites resample through the
        site envelope (one chord-height of error).
        """
        if np.allclose(self.rot, np.eye(2)):
            nodes = u.domain.nodes
            return GridFn(u.domain, vals_site + self.shear_b * nodes[:, 1], u.height_cap)
        us = GridFn(self._us.domain, vals_site, self._us.height_cap)
        p = u.domain.nodes @ self.rot  # original nodes in site coords
        vals = us.envelope.eval(p) + self.shear_b * p[:, 1]
        return GridFn(u.domain, vals, u.height_cap)


def _fingerprint(u: GridFn) -> float:
    return float(u.values.sum() + 0.618 * np.abs(u.values).sum())


def _site_body(us: GridFn) -> PolyBody:
    return epigraph_body(us)


def _site_values(u: GridFn, rot, b):
    """Site-frame domain and node values (exact when no rotation)."""
    if np.allclose(rot, np.eye(2)):
        nodes = u.domain.nodes
        return u.domain, u.values - b * nodes[:, 1]
    dom = _rotate_domain(u.domain, rot)
    # site coords x' satisfy x = R x', so the original coords are nodes @ R^T
    nodes_orig = dom.nodes @ rot.T
    vals = u.eval(nodes_orig) - b * dom.nodes[:, 1]
    return dom, vals


# ---------------------------------------------------------------------------
# Profile


@dataclass(frozen=True)
class ProfileW:
    """Side profile w(x1) = inf over x2 of u, with nose tangency data.

    ``x1s``/``ws`` hold the exact profile of the polytope (lower hull of
    the projected vertices).  Contact extents come from grid flatness
    scans: ``a_minus``/``a_plus`` are contact half-lengths at the tangency
    abscissas and ``contact_len`` maps interior columns to the width of
    the flat bottom [A(x1), B(x1)].
    """

    x1s: np.ndarray
    ws: np.ndarray
    xi_minus: float
    xi_plus: float
    x1_minus: float
    x1_plus: float
    a_minus: float
    a_plus: float
    x2_minus: float
    x2_plus: float
    col_x1: np.ndarray
    col_len: np.ndarray
    x0: np.ndarray
    z0: float
    delta: float

    def w(self, x):
        return np.interp(x, self.x1s, self.ws)

    @property
    def slopes(self):
        return np.diff(self.ws) / np.diff(self.x1s)


def _profile_curve(body: PolyBody):
    """Exact profile: lower boundary of the body projected to (x1, z)."""
    v = body.vertices
    pts = np.column_stack([v[:, 0], v[:, 2]])
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = np.concatenate([[True], np.diff(pts[:, 0]) > 0])
    pts = pts[keep]
    hx, hy = [], []
    for x, y in pts:
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (y - hy[-2]) - (hy[-1] - hy[-2]) * (x - hx[-2])
            if cross <= 0:
                hx.pop(); hy.pop()
            else:
                break
        hx.append(x); hy.append(y)
    return np.array(hx), np.array(hy)


def _tangency_1d(xs, ws, x0, z0):
    """Support slopes and outermost contact abscissas from (x0, z0)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (ws - z0) / (xs - x0)
    right = xs > x0 + 1e-300
    left = xs < x0 - 1e-300
    if not right.any() or not left.any():
        raise ValidityError("nose anchor sits at the edge of the profile")
    xi_p = np.nanmin(np.where(right, k, np.nan))
    xi_m = np.nanmax(np.where(left, k, np.nan))
    if not np.isfinite(xi_p) or not np.isfinite(xi_m):
        raise ValidityError("profile support slopes are undefined")
    if xi_m >= xi_p:
        raise ValidityError("nose point is not below the profile hull")
    tol = 1e-11 * max(1.0, abs(xi_p), abs(xi_m))
    iP = int(np.flatnonzero(right & (np.abs(k - xi_p) <= tol))[-1])
    iM = int(np.flatnonzero(left & (np.abs(k - xi_m) <= tol))[0])
    return float(xi_m), float(xi_p), float(xs[iM]), float(xs[iP]), iM, iP


def _columns(us: GridFn):
    """Nodes grouped by lattice column abscissa."""
    dom = us.domain
    on_lattice = dom.node_ij[:, 0] >= 0
    xs_all = dom.nodes[:, 0]
    tol = 1e-9 * dom.h
    cols = {}
    for k in np.flatnonzero(on_lattice):
        key = round(xs_all[k] / tol)
        cols.setdefault(key, []).append(k)
    # off-lattice boundary extras still sit on x grid lines when produced
    # by vertical lines; match them to existing columns by coordinate
    for k in np.flatnonzero(~on_lattice):
        key = round(xs_all[k] / tol)
        if key in cols:
            cols[key].append(k)
    out = sorted((xs_all[v[0]], np.array(v)) for v in cols.values())
    return out


def profile_w(u: GridFn, site: StretchSite) -> ProfileW:
    """Profile of the site body with tangency and contact-extent data."""
    us = site.site_function(u)
    body = site.body
    px, pw = _profile_curve(body)
    x0 = float(site.x0[0])
    z0 = site.z0
    xi_m, xi_p, x1_m, x1_p, iM, iP = _tangency_1d(px, pw, x0, z0)
    if iM == 0 or iP == len(px) - 1:
        raise ValidityError("support line touches the working-set boundary")
    flat_tol = 1e-7 * max(1.0, float(np.ptp(us.values)))
    cols = _columns(us)
    col_x, col_len = [], []
    a_pm = {}
    x2_pm = {}
    for cx, idx in cols:
        if cx < x1_m - 1e-12 or cx > x1_p + 1e-12:
            continue
        height = np.interp(cx, px, pw)
        ys = us.domain.nodes[idx, 1]
        vs = us.values[idx]
        flat = vs <= height + flat_tol
        if flat.any():
            lo, hi = ys[flat].min(), ys[flat].max()
            length, center = hi - lo, 0.5 * (lo + hi)
        else:
            length, center = 0.0, float(ys[np.argmin(vs)])
        col_x.append(cx)
        col_len.append(length)
        for key, xt in (("m", x1_m), ("p", x1_p)):
            if abs(cx - xt) <= 1e-9 * max(1.0, abs(xt)):
                a_pm[key] = length / 2
                x2_pm[key] = center
    return ProfileW(px, pw, xi_m, xi_p, x1_m, x1_p,
                    a_pm.get("m", 0.0), a_pm.get("p", 0.0),
                    x2_pm.get("m", float(site.x0[1])), x2_pm.get("p", float(site.x0[1])),
                    np.array(col_x), np.array(col_len),
                    np.asarray(site.x0), z0, site.delta)


# ---------------------------------------------------------------------------
# Site preparation


def _grad_near(u: GridFn, point, radius):
    """Mean facet gradient at a point (centroid of the active subgradients)."""
    hull = u.envelope
    p = np.asarray(point, dtype=float).reshape(1, 2)
    val = hull.eval(p)[0]
    tol = 1e-9 * max(1.0, float(np.ptp(u.values)))
    z = p @ hull.plane[:, :2].T + hull.plane[:, 2]
    active = z[0] >= val - tol
    return hull.plane[active][:, :2].mean(axis=0)


def prepare_site(u: GridFn, f: PressureModel, x_check, eps: float, *,
                 z0: float | None = None, delta: float | None = None,
                 radius: float | None = None, angle_tol: float | None = None,
                 max_shrink: int = 20) -> StretchSite:
    """Validate the stretch hypotheses at a check point and size the nose.

    Preconditions, each reported by name on failure: the check point is a
    vertex of the lower hull (extreme), the pressure Hessian at its
    gradient has a negative eigenvalue, and no singular node lies within
    the working radius.  The nose depth and half-width start at eps/2 and
    a quarter of the tangency span and are halved until the validity
    predicates pass (segment below the graph, strict concavity samples,
    working box inside the domain).
    """
    x_check = np.asarray(x_check, dtype=float).reshape(2)
    dom = u.domain
    h = dom.h
    # snap to the nearest node
    d2 = ((dom.nodes - x_check) ** 2).sum(axis=1)
    ni = int(np.argmin(d2))
    if d2[ni] > (0.75 * h) ** 2:
        raise PreconditionError("check point off-grid",
                                f"nearest node {dom.nodes[ni]} is too far")
    x_check = dom.nodes[ni].copy()
    if dom.boundary_node_mask[ni]:
        raise PreconditionError("not extreme", "check point lies on the domain boundary")
    if ni not in u.envelope.vertex_indices:
        raise PreconditionError("not extreme",
                                "check point is not a vertex of the lower hull")

    g0 = _grad_near(u, x_check, h)
    label = classify_hessian(f, g0)
    if label is HessianClass.POS:
        raise PreconditionError("no negative eigenvalue")
    if label is HessianClass.DEGEN:
        raise PreconditionError("degenerate hessian at the check gradient")
    H = np.asarray(f.hess(g0[None, :]))[0]
    evals, evecs = np.linalg.eigh(H)
    rot = _rotation_for(evecs[:, int(np.argmin(evals))])

    dom_site, vals_site_pre = _site_values(u, rot, 0.0)
    x0 = rot.T @ x_check
    us_pre = GridFn(dom_site, vals_site_pre, u.height_cap)
    b = float(_grad_near(us_pre, x0, h)[1])
    dom_site, vals_site = _site_values(u, rot, b)
    us = GridFn(dom_site, vals_site, max(u.height_cap, float(vals_site.max())))

    radius0 = radius if radius is not None else max(6 * h, 0.05 * dom.diameter)
    if angle_tol is None:
        angle_tol = 4.0 * h / dom.diameter

    # no singular nodes near the check point (discrete C^1 hypothesis).
    # Smooth but strongly curved graphs carry cone widths of order
    # h * curvature at every node, so a crease is a width of dihedral
    # size: above pi/5 (a unit slope jump gives pi/4) and above the
    # curvature-induced level of the neighborhood.
    widths = u.envelope.node_cone_widths
    ds = np.hypot(*(dom.nodes - x_check).T)
    near = ds < radius0
    local = widths[near]
    med = float(np.median(local)) if len(local) else 0.0
    crease_tol = max(np.pi / 5, angle_tol + 3.0 * med)
    flagged = near & (widths > crease_tol)
    if flagged.any():
        worst = float(ds[flagged].min())
        raise PreconditionError("singular nearby",
                                f"crease-like node within {worst:.3g}")

    u0 = float(us.eval(x0[None, :])[0])
    body = _site_body(us)
    px, pw = _profile_curve(body)

    depth = (u0 - z0) if z0 is not None else eps / 2
    if z0 is not None and not (0 < depth < eps):
        raise ValidityError("z0 must satisfy u(x0) - eps < z0 < u(x0)")
    pinned = z0 is not None and delta is not None
    r = radius0
    last_err = "unspecified"
    for _ in range(max_shrink):
        z0_try = u0 - depth
        try:
            xi_m, xi_p, x1_m, x1_p, iM, iP = _tangency_1d(px, pw, float(x0[0]), z0_try)
        except ValidityError as e:
            last_err = str(e)
        else:
            d_try = delta if delta is not None else (x1_p - x1_m) / 4
            if d_try < h / 2:
                raise ResolutionError("nose half-width fell below the grid resolution")
            ok, last_err = _site_predicates(us, f, rot, b, x0, z0_try, d_try, r, body)
            if ok:
                seg = Segment3(np.array([x0[0], x0[1] - d_try, z0_try]),
                               np.array([x0[0], x0[1] + d_try, z0_try]))
                window = _working_box(us, seg, x0, r)
                if window is None:
                    last_err = "working box leaves the domain"
                else:
                    s_min = _probe_s_min(us, seg, window, eps)
                    return StretchSite(
                        x_check=x_check, eps=float(eps), rot=rot, shear_b=b,
                        x0=np.asarray(x0), z0=float(z0_try), delta=float(d_try),
                        seg=seg, window=window, radius=float(r), s_min=float(s_min),
                        grad_at_check=np.asarray(g0), _us=us, _fingerprint=_fingerprint(u))
        if pinned:
            raise ValidityError(f"requested site is invalid: {last_err}")
        if delta is not None:
            # only the depth is free to move
            depth /= 2
        else:
            if z0 is None:
                depth /= 2
            r = max(r * 0.75, 3 * h)
    raise ResolutionError(f"no valid site above grid resolution: {last_err}")


def _site_predicates(us, f, rot, b, x0, z0, delta, r, body):
    # segment strictly below the sheared graph over its projection
    ts = np.linspace(-delta, delta, 33)
    above = us.eval(np.column_stack([np.full_like(ts, x0[0]), x0[1] + ts]))
    if not (z0 < above - 1e-12 * max(1.0, float(np.ptp(us.values)))).all():
        return False, "segment not strictly below the graph"
    f_site = _transform_pressure(f, rot, b)
    ok, msg = _beta_concavity(us, f_site, x0, r)
    if not ok:
        return False, msg
    return True, ""


def _beta_concavity(us, f_site, x0, r, n_pairs=32, angle_tol=0.12):
    """Sampled form of the strict-concavity condition along the x1-axis."""
    dom = us.domain
    mids = dom.cell_mid
    near = np.hypot(mids[:, 0] - x0[0], mids[:, 1] - x0[1]) <= r
    g = us.cell_gradients[near]
    if len(g) < 2:
        return False, "no cells inside the concavity radius"
    rng = np.random.default_rng(12345)
    tried = 0
    for widen in (1.0, 2.0, 4.0):
        tol = angle_tol * widen
        idx = rng.integers(0, len(g), size=(8 * n_pairs, 2))
        dg = g[idx[:, 0]] - g[idx[:, 1]]
        norm = np.hypot(dg[:, 0], dg[:, 1])
        valid = norm > 1e-9
        ang = np.abs(np.arctan2(dg[:, 1], np.abs(dg[:, 0]) + 1e-300))
        valid &= ang <= tol
        pairs = idx[valid][:n_pairs]
        if len(pairs) < 4:
            continue
        g1, g2 = g[pairs[:, 0]], g[pairs[:, 1]]
        mid = 0.5 * (g1 + g2)
        gap = f_site.value(mid) - 0.5 * (f_site.value(g1) + f_site.value(g2))
        tried = len(pairs)
        if (gap > 0).all():
            return True, ""
        return False, "strict concavity (beta) fails on a sampled pair"
    if tried == 0:
        # no gradient pairs aligned with the axis: test the 1d restriction
        g0 = us.envelope.grad(np.asarray(x0, dtype=float).reshape(1, 2))[0]
        t = 1e-3
        vals = f_site.value(np.array([g0 - [t, 0], g0, g0 + [t, 0]]))
        if vals[1] > 0.5 * (vals[0] + vals[2]):
            return True, ""
        return False, "strict concavity (beta) fails along the axis"
    return False, "strict concavity (beta) inconclusive"


def _working_box(us, seg, x0, r):
    """Bounding box of the s=1 change set, padded, or None if it leaves Omega."""
    dom = us.domain
    nodes = dom.nodes
    tilde = _family_blend_values(us, seg, 1.0)
    changed = np.abs(tilde - us.values) > 1e-11 * max(1.0, float(np.ptp(us.values)))
    pad = 2 * dom.h
    if changed.any():
        ch = nodes[changed]
        xlo, xhi = ch[:, 0].min() - pad, ch[:, 0].max() + pad
        ylo, yhi = ch[:, 1].min() - pad, ch[:, 1].max() + pad
    else:
        xlo = xhi = x0[0]
        ylo = yhi = x0[1]
    xlo = min(xlo, x0[0] - r); xhi = max(xhi, x0[0] + r)
    ylo = min(ylo, x0[1] - r); yhi = max(yhi, x0[1] + r)
    corners = np.array([[xlo, ylo], [xhi, ylo], [xhi, yhi], [xlo, yhi]])
    if not dom.contains(corners).all():
        return None
    # the box must not absorb the boundary nodes
    onb = dom.boundary_node_mask
    inside = ((nodes[:, 0] >= xlo) & (nodes[:, 0] <= xhi)
              & (nodes[:, 1] >= ylo) & (nodes[:, 1] <= yhi))
    if (inside & onb).any():
        return None
    return (float(xlo), float(xhi), float(ylo), float(yhi))


def _probe_s_min(us, seg, window, eps):
    """Largest |s| (s < 0) whose family member stays inside the window."""
    xlo, xhi, ylo, yhi = window
    nodes = us.domain.nodes
    outside = ~((nodes[:, 0] >= xlo) & (nodes[:, 0] <= xhi)
                & (nodes[:, 1] >= ylo) & (nodes[:, 1] <= yhi))
    tol = 1e-11 * max(1.0, float(np.ptp(us.values)))
    s_ok = 0.0
    for k in range(1, 13):
        s = -(2.0 ** -k)
        try:
            fam = shrink_family_negative(us, seg.a, seg.b, s)
        except ValidityError:
            continue
        if (np.abs(fam.values - us.values)[outside] <= tol).all() \
                and np.abs(fam.values - us.values).max() < eps:
            s_ok = s
            break
    return s_ok


# ---------------------------------------------------------------------------
# The family


def _family_blend_values(us: GridFn, seg: Segment3, s: float,
                         body: PolyBody | None = None) -> np.ndarray:
    """Site-frame node values of the blend member via the three-cloud hull.

    Uses (1-s)C + s conv(C u I) = conv(C u h_A(C) u h_B(C)); homothety
    images that stay inside the body are pruned before hulling.
    """
    if body is None:
        body = _site_body(us)
    V = body.vertices
    env = us.envelope
    clouds = [V]
    for P in (seg.a, seg.b):
        img = (1 - s) * V + s * P[None, :]
        below = img[:, 2] < env.eval(img[:, :2]) - 1e-12 * max(1.0, float(np.ptp(us.values)))
        if below.any():
            clouds.append(img[below])
    if len(clouds) == 1:
        return us.values.copy()
    hull = LowerHull(np.vstack(clouds))
    vals = hull.eval(us.domain.nodes)
    return np.minimum(vals, us.values)


def family_at(u: GridFn, site: StretchSite, s: float) -> GridFn:
    """Family member u^(s); blend for s in [0, 1], intersections for s < 0."""
    us = site.site_function(u)
    if s == 0.0:
        return u
    if s > 1.0 or s < site.s_min - 1e-12:
        raise ValidityError(f"family parameter {s} outside [{site.s_min}, 1]")
    if s > 0:
        vals = _family_blend_values(us, site.seg, s, body=site.body)
    else:
        vals = shrink_family_negative(us, site.seg.a, site.seg.b, s).values
    return site.to_original(vals, u)


def family_body_at(u: GridFn, site: StretchSite, s: float) -> PolyBody:
    """Exact blend body C_s in the site frame, for surface-form evaluation."""
    us = site.site_function(u)
    if not (0.0 <= s <= 1.0):
        raise ValidityError("body form exists for the blend range [0, 1] only")
    body = site.body
    if s == 0.0:
        return body
    V = body.vertices
    env = us.envelope
    clouds = [V]
    for P in (site.seg.a, site.seg.b):
        img = (1 - s) * V + s * P[None, :]
        below = img[:, 2] < env.eval(img[:, :2]) - 1e-12 * max(1.0, float(np.ptp(us.values)))
        if below.any():
            clouds.append(img[below])
    return PolyBody.from_points(np.vstack(clouds))


def family_validity(u: GridFn, site: StretchSite, member: GridFn) -> dict:
    """Node-wise checks of the closeness statements for a family member."""
    us = site.site_function(u)
    nodes = u.domain.nodes
    if np.allclose(site.rot, np.eye(2)):
        site_nodes = nodes
    else:
        site_nodes = nodes @ site.rot
    inside = site.in_window(site_nodes)
    diff = member.values - u.values
    tol = 1e-9 * max(1.0, float(np.ptp(u.values)))
    return {
        "equal_outside": bool((np.abs(diff[~inside]) <= tol).all()),
        "max_change_outside": float(np.abs(diff[~inside]).max() if (~inside).any() else 0.0),
        "max_change": float(np.abs(diff).max()),
        "within_eps": bool(np.abs(diff).max() < site.eps),
    }


def sweep_resistance(u: GridFn, site: StretchSite, f: PressureModel,
                     s_values, threads: int = 1, method: str = "grid"):
    """Resistance along the family at the requested parameters.

    ``method="grid"`` samples each member on the grid and applies the
    cell quadrature; ``method="body"`` sums the surface density over the
    exact blend polytope (no resampling, blend range only).  Both
    evaluate the same functional; the surface form is free of the
    one-point-per-cell quadrature noise.
    """
    s_values = [float(s) for s in s_values]
    for s in s_values:
        if s < site.s_min - 1e-12 or s > 1.0:
            raise ValidityError(f"sweep value {s} outside [{site.s_min}, 1]")
    if method == "body":
        f_site = _transform_pressure(f, site.rot, site.shear_b)

        def one(s):
            return s, eval_F_body(family_body_at(u, site, s), f_site)
    elif method == "grid":
        def one(s):
            return s, eval_F(family_at(u, site, s), f)
    else:
        raise ValueError(f"unknown sweep method {method!r}")

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(one, s_values))
    else:
        out = [one(s) for s in s_values]
    return out


# ---------------------------------------------------------------------------
# Quadratic law


@dataclass(frozen=True)
class QuadCoeffs:
    """Closed-form coefficients of the resistance law along the family.

    F(u^(s)) = c0 + c1/2 (1-s)^2 + a3 s (1-s) + a4/2 s^2 on [0, 1], with
    c0 = a0 + b2 + b4 and c1 = a1 - a2 + b3 - 2 b4; the derivative at 0
    from either side equals a3 - c1.
    """

    a0: float
    a1: float
    a2: float
    a3: float
    a4: float
    b2: float
    b3: float
    b4: float
    warnings: tuple = ()

    @property
    def c0(self) -> float:
        return self.a0 + self.b2 + self.b4

    @property
    def c1(self) -> float:
        return self.a1 - self.a2 + self.b3 - 2 * self.b4

    @property
    def F_at_0(self) -> float:
        return self.c0 + self.c1 / 2

    @property
    def derivative_at_0(self) -> float:
        return self.a3 - self.c1

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return self.c0 + self.c1 / 2 * (1 - s) ** 2 + self.a3 * s * (1 - s) + self.a4 / 2 * s ** 2

    def predict(self, s):
        """Law value on [0, 1]; first-order continuation for s < 0."""
        s = np.asarray(s, dtype=float)
        lin = self.F_at_0 + self.derivative_at_0 * s
        return np.where(s < 0, lin, self.value(np.clip(s, 0, 1)))


@dataclass(frozen=True)
class QuadFit:
    """Least-squares quadratic p0 + p1 s + p2 s^2 through sweep samples.

    Individual law coefficients are under-determined by the curve alone;
    the fit exposes the identifiable combinations (p1 = a3 - c1 is the
    derivative at 0, p1 + 2 p2 = a4 - a3) and completes a3 given an
    analytic a4 anchor.
    """

    p0: float
    p1: float
    p2: float
    residual_max: float
    residual_rms: float

    @property
    def derivative_at_0(self) -> float:
        return self.p1

    @property
    def a3_minus_a4(self) -> float:
        return -(self.p1 + 2 * self.p2)

    def a3_given_a4(self, a4: float) -> float:
        return a4 + self.a3_minus_a4

    def c1_given_a3(self, a3: float) -> float:
        return a3 - self.p1

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return self.p0 + self.p1 * s + self.p2 * s ** 2


def fit_quadratic(samples) -> QuadFit:
    """Fit the quadratic law to (s, F) samples from the blend range."""
    pts = [(float(s), float(F)) for s, F in samples]
    svals = np.array([p[0] for p in pts])
    Fvals = np.array([p[1] for p in pts])
    if len(pts) < 4:
        raise FitError("need at least 4 samples")
    if (svals < -1e-12).any() or (svals > 1 + 1e-12).any():
        raise FitError("fit samples must lie in [0, 1]")
    if len(np.unique(np.round(svals, 12))) < 3:
        raise FitError("need at least 3 distinct parameters")
    A = np.column_stack([np.ones_like(svals), svals, svals ** 2])
    coef, _, rank, _ = np.linalg.lstsq(A, Fvals, rcond=None)
    if rank < 3:
        raise FitError("rank-deficient sample set")
    resid = Fvals - A @ coef
    return QuadFit(float(coef[0]), float(coef[1]), float(coef[2]),
                   float(np.abs(resid).max()), float(np.sqrt((resid ** 2).mean())))


# ---------------------------------------------------------------------------
# Analytic coefficients


def _class_sums(body: PolyBody, A, B, f_site, tol, is_base: bool):
    """Per-class resistance sums over the facets of ``body``.

    A facet normal n is classified by the incidence of the support plane
    of the stretched hull at n: whether it still touches the base body C
    and whether it passes through the nose endpoints A, B.  Classes:
    0 = body only (A0), 1/2 = endpoint only (A1 sides), 3/4 = endpoint
    and body (A2 sides), 5 = whole segment only (A3), 6 = segment and
    body (A4).

    For the base body the plane offset is the support value of C, so
    the stretched support is max(offset, <A,n>, <B,n>).  For the
    stretched hull every positive-area facet carries a vertex of C, so
    its plane always touches C.
    """
    normals, areas, offs = body.facet_planes
    g = f_site.g(normals)
    dotA = normals @ A
    dotB = normals @ B
    if is_base:
        hCt = np.maximum(offs, np.maximum(dotA, dotB))
        touches = hCt - offs <= tol
    else:
        hCt = offs
        touches = np.ones(len(normals), bool)
    inA = dotA >= hCt - tol
    inB = dotB >= hCt - tol
    labels = np.empty(len(normals), dtype=int)
    labels[touches & ~inA & ~inB] = 0
    labels[~touches & inA & ~inB] = 1
    labels[~touches & ~inA & inB] = 2
    labels[touches & inA & ~inB] = 3
    labels[touches & ~inA & inB] = 4
    labels[~touches & inA & inB] = 5
    labels[touches & inA & inB] = 6
    # a support plane through neither the body nor the segment is impossible
    bad = ~touches & ~inA & ~inB
    labels[bad] = 0
    # facets within a decade of the incidence tolerance are worth a warning
    gapA = hCt - dotA
    gapB = hCt - dotB
    near = ((gapA > tol) & (gapA < 10 * tol)) | ((gapB > tol) & (gapB < 10 * tol))
    if is_base:
        gapT = hCt - offs
        near |= (gapT > tol) & (gapT < 10 * tol)
    sums = np.zeros(7)
    for c in range(7):
        m = labels == c
        sums[c] = float((g[m] * areas[m]).sum())
    return sums, int(bad.sum()), int(near.sum())


def analytic_coeffs(u: GridFn, site: StretchSite, f: PressureModel,
                    profile: ProfileW | None = None) -> QuadCoeffs:
    """Closed-form law coefficients from facet classes and the profile.

    a3 and b3 are 1D quadratures over the profile; a4 and b4 are the
    tangency closed forms; a0, a1, a2, b2 sum the surface density over
    facet classes of the body and its stretched hull.
    """
    us = site.site_function(u)
    if profile is None:
        profile = profile_w(u, site)
    f_site = _transform_pressure(f, site.rot, site.shear_b)
    C = site.body
    Ct = site.body_stretched
    A, B = site.seg.a, site.seg.b
    tol = 1e-9 * C.diameter
    sums_C, badC, nearC = _class_sums(C, A, B, f_site, tol, is_base=True)
    sums_Ct, badT, nearT = _class_sums(Ct, A, B, f_site, tol, is_base=False)

    a0 = sums_C[0]
    F1C = sums_C[1] + sums_C[2]
    a1 = 2 * F1C
    F2C = sums_C[3] + sums_C[4]
    F2Ct = sums_Ct[3] + sums_Ct[4]
    a2 = 2 * (F2Ct - F2C)
    b2 = F2Ct

    # profile quadratures over [x1-, x1+]
    xi_m, xi_p = profile.xi_minus, profile.xi_plus
    x1_m, x1_p = profile.x1_minus, profile.x1_plus
    xs, ws = profile.x1s, profile.ws
    a3 = 2 * site.delta * _segment_integral(xs, ws, x1_m, x1_p, f_site)
    if len(profile.col_x1) >= 2:
        slopes = np.interp(profile.col_x1, 0.5 * (xs[1:] + xs[:-1]),
                           np.diff(ws) / np.diff(xs))
        vals = profile.col_len * f_site.value(np.column_stack([slopes, np.zeros_like(slopes)]))
        trapezoid = getattr(np, "trapezoid", None) or np.trapz
        b3 = 2 * float(trapezoid(vals, profile.col_x1))
    else:
        b3 = 0.0
    x10 = float(site.x0[0])
    fm = float(f_site.value(np.array([[xi_m, 0.0]]))[0])
    fp = float(f_site.value(np.array([[xi_p, 0.0]]))[0])
    a4 = 2 * site.delta * (fm * (x10 - x1_m) + fp * (x1_p - x10))
    b4 = fm * (x10 - x1_m) * profile.a_minus + fp * (x1_p - x10) * profile.a_plus

    warnings = []
    if badC or badT:
        warnings.append(f"unclassifiable facets: {badC + badT}")
    if nearC + nearT:
        warnings.append(f"classification-tolerance ambiguity on {nearC + nearT} facets")
    F3C = sums_C[5]
    if abs(F3C - b3 / 2) > max(1e-3 * max(abs(b3), 1e-12), 20 * u.domain.h ** 2):
        warnings.append(f"profile b3/2 = {b3 / 2:.6g} vs facet-class value {F3C:.6g}")
    F_body = eval_F_body(C, f_site)
    consistency = a0 + a1 / 2 + b2 - a2 / 2 + F3C + sums_C[6] - F_body
    if abs(consistency) > 1e-8 * max(1.0, abs(F_body)):
        warnings.append(f"class sums miss the body total by {consistency:.3g}")
    return QuadCoeffs(float(a0), float(a1), float(a2), float(a3), float(a4),
                      float(b2), float(b3), float(b4), tuple(warnings))


def _segment_integral(xs, ws, lo, hi, f_site):
    """Integral of f(w'(x), 0) over [lo, hi] for the piecewise-linear profile."""
    total = 0.0
    slopes = np.diff(ws) / np.diff(xs)
    for k, m in enumerate(slopes):
        a, b = xs[k], xs[k + 1]
        seg_lo, seg_hi = max(a, lo), min(b, hi)
        if seg_hi <= seg_lo:
            continue
        total += float(f_site.value(np.array([[m, 0.0]]))[0]) * (seg_hi - seg_lo)
    return total


# ---------------------------------------------------------------------------
# Improvement step


@dataclass(frozen=True)
class StretchOutcome:
    """Result of the improvement search along the family."""

    u_new: GridFn | None
    delta_F: float
    s: float
    reason: str
    coeffs: QuadCoeffs
    evaluations: tuple

    @property
    def improved(self) -> bool:
        return self.u_new is not None


def improvement_step(u: GridFn, site: StretchSite, f: PressureModel, *,
                     max_k: int = 6, abs_tol: float | None = None) -> StretchOutcome:
    """Search the family for a strict resistance decrease.

    Candidates cover geometric steps on the side favored by the analytic
    derivative a3 - c1 plus the near-1 range (where the law guarantees
    the drop (a3 - a4)/2 when the derivative vanishes).  They are tried
    in the order of the law's own prediction, so the first valid strict
    decrease is returned; a report with reason comes back when no
    sampled parameter qualifies.
    """
    coeffs = analytic_coeffs(u, site, f)
    F0 = eval_F(u, f)
    if abs_tol is None:
        abs_tol = max(1e-10 * abs(F0), 1e-14)
    d0 = coeffs.derivative_at_0
    candidates = {1.0, 0.875, 0.75, 0.5, 0.25}
    direction = -1.0 if d0 > 0 else 1.0
    for k in range(1, max_k + 1):
        candidates.add(float(direction * 2.0 ** (-k)))
    candidates = [s for s in candidates if site.s_min <= s <= 1.0 and s != 0.0]
    order = np.argsort([float(coeffs.predict(s)) for s in candidates])
    evals = []
    for idx in order:
        s = candidates[int(idx)]
        member = family_at(u, site, s)
        checks = family_validity(u, site, member)
        ok = checks["equal_outside"] and checks["within_eps"]
        if not ok:
            evals.append((s, np.nan, False))
            continue
        Fs = eval_F(member, f)
        evals.append((s, Fs, True))
        if Fs < F0 - abs_tol:
            return StretchOutcome(member, Fs - F0, s, "", coeffs, tuple(evals))
    reason = "no sampled parameter decreased the resistance beyond tolerance"
    return StretchOutcome(None, 0.0, 0.0, reason, coeffs, tuple(evals))
