import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leastres.errors import CoverageError, DegenerateInputError, ValidityError
from leastres.geometry import (
    Domain,
    GridFn,
    PolyBody,
    Segment3,
    body_to_fn,
    conv_with_segment,
    epigraph_body,
    extreme_vertices,
    homothety,
    lower_convex_envelope,
    minkowski_blend,
    shrink_family_negative,
    singular_points,
    support_function,
)


def unit_square(h=0.125):
    return Domain.square(0.0, 1.0, h)


def sym_square(h=0.125):
    return Domain.square(-1.0, 1.0, h)


def unit_disk(h=0.1):
    return Domain.disk((0.0, 0.0), 1.0, h)


def cube_body(lo=0.0, hi=1.0):
    g = np.array([lo, hi])
    pts = np.array([[x, y, z] for x in g for y in g for z in g])
    return PolyBody.from_points(pts)


# ---------------------------------------------------------------------------
# Domain


class TestDomain:
    def test_disk_nodes_inside(self):
        d = unit_disk()
        r = np.hypot(d.nodes[:, 0], d.nodes[:, 1])
        assert (r <= 1.0 + 1e-9).all()
        assert d.contains([[0.0, 0.0]])[0]
        assert not d.contains([[1.2, 0.0]])[0]

    def test_disk_boundary_nodes_on_circle(self):
        d = unit_disk()
        b = d.nodes[d.boundary_node_mask]
        assert len(b) > 8
        r = np.hypot(b[:, 0], b[:, 1])
        assert np.allclose(r, 1.0, atol=1e-9)

    def test_square_area_weights(self):
        d = unit_square()
        assert d.area == pytest.approx(1.0, abs=1e-9)

    def test_disk_area_weights(self):
        d = unit_disk(h=0.05)
        assert d.area == pytest.approx(np.pi, rel=2e-4)

    def test_too_coarse_grid_rejected(self):
        with pytest.raises(ValueError):
            Domain.disk((0, 0), 1.0, 0.6)

    def test_polygon_must_be_convex_ccw(self):
        with pytest.raises(ValueError):
            Domain.polygon([[0, 0], [0, 1], [1, 1], [1, 0]], 0.1)  # clockwise
        with pytest.raises(ValueError):
            Domain.polygon([[0, 0], [1, 0], [0.5, 0.1], [0.5, 1]], 0.1)  # reflex

    def test_grid_contains_center_column(self):
        d = unit_disk()
        assert 0.0 in d.grid_x
        assert 0.0 in d.grid_y


# ---------------------------------------------------------------------------
# lower_convex_envelope


class TestEnvelope:
    def test_convex_function_is_its_own_envelope(self):
        # paraboloid samples over a disk: envelope reproduces |x|^2 at nodes
        d = unit_disk(h=0.1)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(4000, 2))
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= 1.0]
        ang = np.linspace(0, 2 * np.pi, 400, endpoint=False)
        pts = np.vstack([pts, np.column_stack([np.cos(ang), np.sin(ang)])])
        z = (pts ** 2).sum(1)
        env = lower_convex_envelope(d, pts, z)
        exact = (d.nodes ** 2).sum(1)
        err = np.abs(env.values - exact)
        # O(spacing^2) of the random sample cloud
        assert err.max() < 0.02

    def test_five_point_pyramid_midvalue(self):
        # hull of {(+-1, +-1, 1), (0,0,0)}: value at (0.5, 0.5) is 0.5
        d = sym_square(h=0.25)
        pts = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1], [0, 0]], float)
        z = np.array([1, 1, 1, 1, 0], float)
        env = lower_convex_envelope(d, pts, z)
        got = env.eval(np.array([[0.5, 0.5]]))[0]
        assert got == pytest.approx(0.5, abs=1e-12)

    def test_saddle_collapses_to_chords(self):
        d = sym_square(h=0.125)
        n = d.nodes
        z = n[:, 0] ** 2 - n[:, 1] ** 2
        env = lower_convex_envelope(d, n, z)
        at0 = env.eval(np.array([[0.0, 0.0]]))[0]
        assert at0 == pytest.approx(-1.0, abs=1e-9)

    def test_collinear_samples_rejected(self):
        d = unit_square()
        pts = np.column_stack([np.linspace(0, 1, 10), np.linspace(0, 1, 10)])
        with pytest.raises(DegenerateInputError):
            lower_convex_envelope(d, pts, np.zeros(10))

    def test_idempotent(self):
        d = sym_square(h=0.25)
        n = d.nodes
        z = np.abs(n[:, 0]) + 0.3 * n[:, 1] ** 2
        e1 = lower_convex_envelope(d, n, z)
        e2 = lower_convex_envelope(d, n, e1.values)
        assert np.allclose(e1.values, e2.values, atol=1e-12)

    @settings(max_examples=20, deadline=None, derandomize=True)
    @given(st.integers(0, 10_000))
    def test_idempotent_random(self, seed):
        d = Domain.square(-1.0, 1.0, 0.5)
        rng = np.random.default_rng(seed)
        z = rng.uniform(0, 1, len(d.nodes))
        e1 = lower_convex_envelope(d, d.nodes, z)
        e2 = lower_convex_envelope(d, d.nodes, e1.values)
        assert np.allclose(e1.values, e2.values, atol=1e-10)

    def test_gridfn_convexity_check(self):
        d = sym_square(0.25)
        u = GridFn.from_callable(d, lambda x, y: x ** 2 + y ** 2, 2.0)
        assert u.is_discretely_convex()
        bad = u.values.copy()
        bad[len(bad) // 2] += 0.5
        assert not GridFn(d, bad, 2.0).is_discretely_convex()


# ---------------------------------------------------------------------------
# epigraph_body / body_to_fn


class TestEpigraph:
    def test_flat_zero_is_cube(self):
        d = unit_square(h=0.25)
        u = GridFn.from_callable(d, lambda x, y: 0.0 * x, 1.0)
        C = epigraph_body(u)
        assert not C.degenerate
        assert len(C.vertices) == 8
        assert C.vertices[:, 2].min() == 0.0 and C.vertices[:, 2].max() == 1.0

    def test_pyramid_apex(self):
        d = sym_square(h=0.25)
        u = GridFn.from_callable(d, lambda x, y: np.maximum(np.abs(x), np.abs(y)), 1.0)
        C = epigraph_body(u)
        low = C.vertices[np.argmin(C.vertices[:, 2])]
        assert np.allclose(low, [0, 0, 0], atol=1e-12)

    def test_flat_cap_degenerate(self):
        d = unit_square(h=0.25)
        u = GridFn.from_callable(d, lambda x, y: 1.0 + 0.0 * x, 1.0)
        C = epigraph_body(u)
        assert C.degenerate

    def test_roundtrip_body_to_fn(self):
        d = sym_square(h=0.25)
        u = GridFn.from_callable(d, lambda x, y: x ** 2 + y ** 2 / 2, 3.0)
        C = epigraph_body(u)
        back = body_to_fn(C, d)
        assert np.allclose(back.values, u.values, atol=1e-9)

    def test_coverage_error(self):
        small = cube_body(0.0, 0.5)
        d = unit_square(h=0.125)
        with pytest.raises(CoverageError):
            body_to_fn(small, d)


# ---------------------------------------------------------------------------
# blend / homothety / conv_with_segment


class TestBodyOps:
    def test_blend_endpoints(self):
        C = cube_body()
        D = homothety(C, 2.0, (0, 0, 0))
        assert np.allclose(minkowski_blend(C, D, 0.0).vertices, C.vertices)
        assert np.allclose(minkowski_blend(C, D, 1.0).vertices, D.vertices)

    def test_blend_of_segments_makes_square(self):
        A = PolyBody.from_points([[0, 0, 0], [1, 0, 0]])
        B = PolyBody.from_points([[0, 0, 0], [0, 1, 0]])
        S = minkowski_blend(A, B, 0.5)
        expect = {(0, 0), (0.5, 0), (0, 0.5), (0.5, 0.5)}
        got = {(round(v[0], 12), round(v[1], 12)) for v in S.vertices}
        assert got == expect

    def test_blend_of_translates(self):
        C = cube_body()
        D = C.translate((1.0, 0.0, 0.0))
        s = 0.25
        S = minkowski_blend(C, D, s)
        assert np.allclose(np.sort(S.vertices[:, 0]), np.sort(C.vertices[:, 0] + s))

    def test_blend_range_error(self):
        C = cube_body()
        with pytest.raises(ValueError):
            minkowski_blend(C, C, -0.1)
        with pytest.raises(ValueError):
            minkowski_blend(C, C, 1.1)

    @settings(max_examples=15, deadline=None, derandomize=True)
    @given(st.integers(0, 10_000))
    def test_blend_support_linearity(self, seed):
        rng = np.random.default_rng(seed)
        C = PolyBody.from_points(rng.standard_normal((12, 3)))
        D = PolyBody.from_points(rng.standard_normal((12, 3)) + 0.5)
        dirs = rng.standard_normal((100, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for s in (0.0, 0.25, 0.5, 0.75, 1.0):
            S = minkowski_blend(C, D, s)
            h = S.support_values(dirs)
            want = (1 - s) * C.support_values(dirs) + s * D.support_values(dirs)
            assert np.abs(h - want).max() <= 1e-9 * max(C.diameter, D.diameter)

    def test_blend_argmax_face_combines(self):
        rng = np.random.default_rng(3)
        C = PolyBody.from_points(rng.standard_normal((10, 3)))
        D = PolyBody.from_points(rng.standard_normal((10, 3)))
        s = 0.5
        S = minkowski_blend(C, D, s)
        for n in rng.standard_normal((20, 3)):
            n /= np.linalg.norm(n)
            _, fc = C.support(n)
            _, fd = D.support(n)
            _, fs = S.support(n)
            combo = ((1 - s) * C.vertices[fc][:, None, :] + s * D.vertices[fd][None, :, :]).reshape(-1, 3)
            got = S.vertices[fs]
            for v in got:
                assert np.min(np.linalg.norm(combo - v, axis=1)) < 1e-8

    def test_homothety_identity_and_scaling(self):
        C = cube_body()
        assert np.allclose(homothety(C, 1.0, (5, 5, 5)).vertices, C.vertices)
        D = homothety(C, 2.0, (0, 0, 0))
        assert D.vertices.max() == 2.0
        with pytest.raises(ValueError):
            homothety(C, 0.0, (0, 0, 0))

    def test_homothety_about_centroid_contained(self):
        rng = np.random.default_rng(5)
        C = PolyBody.from_points(rng.standard_normal((30, 3)))
        D = homothety(C, 0.5, C.centroid)
        assert C.contains(D.vertices).all()

    def test_conv_with_inner_segment_is_identity(self):
        C = cube_body()
        seg = Segment3((0.4, 0.4, 0.4), (0.6, 0.6, 0.6))
        D = conv_with_segment(C, seg)
        assert len(D.vertices) == 8
        assert np.allclose(np.sort(D.vertices, axis=0), np.sort(C.vertices, axis=0))

    def test_conv_with_segment_below_cube(self):
        C = cube_body()
        seg = Segment3((0.5, 0.4, -0.5), (0.5, 0.6, -0.5))
        D = conv_with_segment(C, seg)
        assert len(D.vertices) == 10
        # two lower side facets are trapezoids: 4 facet normals with n3<0
        n, a = D.facet_normals_areas
        lower = n[:, 2] < -1e-9
        assert a[lower].sum() > 1.0  # strictly more lower area than the flat bottom

    def test_conv_with_degenerate_segment_matches_point(self):
        C = cube_body()
        p = (0.5, 0.5, -0.3)
        seg = Segment3(p, p)
        D = conv_with_segment(C, seg)
        E = PolyBody.from_points(np.vstack([C.vertices, np.asarray(p)[None, :]]))
        assert np.allclose(np.sort(D.vertices, axis=0), np.sort(E.vertices, axis=0))


# ---------------------------------------------------------------------------
# support / extreme


class TestSupport:
    def test_cube_bottom_face(self):
        C = cube_body()
        h, face = support_function(C, (0.0, 0.0, -1.0))
        assert h == pytest.approx(0.0, abs=1e-12)
        assert len(face) == 4

    def test_generic_direction_vertex(self):
        C = PolyBody.from_points([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        h, face = support_function(C, np.array([0.3, 0.2, 0.9]) / np.linalg.norm([0.3, 0.2, 0.9]))
        assert len(face) == 1

    def test_extreme_vertices_cube_with_interior_points(self):
        rng = np.random.default_rng(1)
        inner = rng.uniform(0.2, 0.8, size=(100, 3))
        g = np.array([0.0, 1.0])
        corners = np.array([[x, y, z] for x in g for y in g for z in g])
        C = PolyBody.from_points(np.vstack([corners, inner]))
        assert len(extreme_vertices(C)) == 8

    def test_extreme_vertices_segment(self):
        C = PolyBody.from_points([[0, 0, 0], [0.5, 0.5, 0.5], [1, 1, 1]])
        assert C.degenerate
        v = extreme_vertices(C)
        assert len(v) == 2

    def test_closedness(self):
        rng = np.random.default_rng(7)
        C = PolyBody.from_points(rng.standard_normal((40, 3)))
        C.validate()


# ---------------------------------------------------------------------------
# shrink family (s < 0)


class TestShrinkFamily:
    def setup_method(self):
        self.d = unit_disk(h=0.05)
        self.u = GridFn.from_callable(self.d, lambda x, y: x ** 2 + y ** 2, 1.0)

    def test_s_zero_identity(self):
        out = shrink_family_negative(self.u, (0, 0, -0.1), (0, 0, -0.1), 0.0)
        assert out is self.u

    def test_closed_form_depth(self):
        # closed form: max(|x|^2, |x|^2 / 1.05 + 0.005), flip radius 0.3241
        out = shrink_family_negative(self.u, (0, 0, -0.1), (0, 0, -0.1), -0.05)
        at0 = out.eval(np.array([[0.0, 0.0]]))[0]
        assert at0 == pytest.approx(0.005, abs=1e-9)
        r = np.hypot(self.d.nodes[:, 0], self.d.nodes[:, 1])
        closed = np.maximum(r ** 2, r ** 2 / 1.05 + 0.005)
        # chord error of the node-hull surface: lambda_max * edge^2 / 8, edges up to sqrt(2) h
        chord = 1.05 * 2 * (np.sqrt(2) * self.d.h) ** 2 / 8
        assert np.abs(out.values - closed).max() <= chord + 1e-9
        far = r >= 0.36
        assert np.allclose(out.values[far], self.u.values[far], atol=1e-12)
        near = r <= 0.31
        assert (out.values[near] > self.u.values[near] + 1e-12).all()

    def test_smaller_s(self):
        out = shrink_family_negative(self.u, (0, 0, -0.1), (0, 0, -0.1), -0.01)
        assert out.eval(np.array([[0.0, 0.0]]))[0] == pytest.approx(0.001, abs=1e-9)

    def test_depth_bound(self):
        # u <= u^{(s)} <= u - s * eps with eps = u(x0) - z0
        s = -0.05
        out = shrink_family_negative(self.u, (0, -0.1, -0.1), (0, 0.1, -0.1), s)
        eps = 0.01 - (-0.1)
        assert (out.values >= self.u.values - 1e-12).all()
        assert (out.values <= self.u.values - s * eps + 1e-12).all()

    def test_nose_above_graph_rejected(self):
        with pytest.raises(ValidityError):
            shrink_family_negative(self.u, (0, 0, 0.5), (0, 0, 0.5), -0.1)

    def test_matches_explicit_intersection(self):
        # intersection semantics: C cap homothety(C about A) cap homothety(C about B)
        d = sym_square(h=0.125)
        u = GridFn.from_callable(d, lambda x, y: 0.5 * x ** 2 + 0.8 * y ** 2, 3.0)
        C = epigraph_body(u)
        s = -0.1
        A = np.array([0.0, -0.05, -0.05])
        B = np.array([0.0, 0.05, -0.05])
        out = shrink_family_negative(u, A, B, s)
        CA = homothety(C, 1 - s, A)
        CB = homothety(C, 1 - s, B)
        # node-wise max of the three lower functions is the intersection's floor
        want = np.maximum.reduce([
            C.lower.eval(d.nodes), CA.lower.eval(d.nodes), CB.lower.eval(d.nodes)])
        slope = 2 * np.abs(u.cell_gradients).max()
        assert np.abs(out.values - want).max() <= 2 * d.h * slope


# ---------------------------------------------------------------------------
# singular points


class TestSingular:
    def test_cone_apex_flagged(self):
        d = unit_disk(h=0.05)
        u = GridFn.from_callable(d, lambda x, y: np.hypot(x, y), 1.0)
        idx = singular_points(u, angle_tol=np.pi / 3)
        flagged = d.nodes[idx]
        assert any(np.hypot(*p) < 1e-9 for p in flagged)

    def test_smooth_function_unflagged_at_fixed_tol(self):
        for h in (0.1, 0.05):
            d = unit_disk(h=h)
            u = GridFn.from_callable(d, lambda x, y: x ** 2 + y ** 2, 1.0)
            idx = singular_points(u, angle_tol=0.5)
            interior = np.hypot(*d.nodes[idx].T) < 0.8 if len(idx) else np.array([], bool)
            assert interior.sum() == 0

    def test_crease_lines_flagged(self):
        d = sym_square(h=0.1)
        u = GridFn.from_callable(d, lambda x, y: np.maximum(np.abs(x), 0.2) - 0.2 + 0.0 * y, 1.0)
        idx = singular_points(u, angle_tol=0.1)
        flagged = d.nodes[idx]
        on_ridge = np.isclose(np.abs(flagged[:, 0]), 0.2, atol=1e-9)
        assert on_ridge.sum() >= 10

    def test_monotone_in_tol(self):
        d = unit_disk(h=0.1)
        u = GridFn.from_callable(d, lambda x, y: np.hypot(x, y), 1.0)
        small = set(singular_points(u, angle_tol=0.2).tolist())
        large = set(singular_points(u, angle_tol=0.8).tolist())
        assert large <= small
