import numpy as np
import pytest

from leastres.errors import PreconditionError, ValidityError
from leastres.geometry import Domain, GridFn, minkowski_blend, conv_with_segment, epigraph_body, body_to_fn
from leastres.pressure import PressureModel, eval_F
from leastres.stretch import (
    analytic_coeffs,
    family_at,
    family_validity,
    fit_quadratic,
    improvement_step,
    prepare_site,
    profile_w,
    sweep_resistance,
)

NEWTON = PressureModel.newton()


@pytest.fixture(scope="module")
def parab():
    d = Domain.square(-1.0, 1.0, 1 / 32)
    u = GridFn.from_callable(d, lambda x, y: x ** 2 + 10 * y ** 2, 12.0)
    return u


@pytest.fixture(scope="module")
def parab_site(parab):
    return prepare_site(parab, NEWTON, (0.0, 0.0), 0.02)


@pytest.fixture(scope="module")
def sweep(parab, parab_site):
    svals = np.linspace(0, 1, 11)
    return sweep_resistance(parab, parab_site, NEWTON, svals)


class TestPrepareSite:
    def test_fixture_parameters(self, parab, parab_site):
        site = parab_site
        assert site.shear_b == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(site.rot, np.eye(2))
        assert site.z0 == pytest.approx(-0.01, abs=1e-12)
        assert site.delta == pytest.approx(0.05, rel=0.1)
        prof = profile_w(parab, site)
        assert prof.xi_plus == pytest.approx(0.2, rel=0.05)
        assert prof.xi_minus == pytest.approx(-0.2, rel=0.05)
        assert prof.x1_plus == pytest.approx(0.1, abs=parab.domain.h)
        assert prof.x1_minus == pytest.approx(-0.1, abs=parab.domain.h)
        assert prof.a_plus == pytest.approx(0.0, abs=1e-12)
        assert prof.a_minus == pytest.approx(0.0, abs=1e-12)

    def test_flat_spot_not_extreme(self):
        d = Domain.square(-1.0, 1.0, 1 / 16)
        u = GridFn.from_callable(d, lambda x, y: np.maximum(np.abs(x) - 0.3, 0.0) + y ** 2, 4.0)
        with pytest.raises(PreconditionError, match="not extreme"):
            prepare_site(u, NEWTON, (0.0, 0.0), 0.02)

    def test_positive_hessian_rejected(self, parab):
        with pytest.raises(PreconditionError, match="no negative eigenvalue"):
            prepare_site(parab, PressureModel.quadratic(), (0.0, 0.0), 0.02)

    def test_boundary_point_rejected(self, parab):
        with pytest.raises(PreconditionError):
            prepare_site(parab, NEWTON, (1.0, 0.0), 0.02)

    def test_shear_only_site(self):
        d = Domain.square(-1.0, 1.0, 1 / 32)
        u = GridFn.from_callable(d, lambda x, y: x ** 2 + 10 * y ** 2 + 0.5 * y + 2, 16.0)
        site = prepare_site(u, NEWTON, (0.0, 0.0), 0.02)
        # x2-derivative at the anchor should vanish after the shear
        assert abs(site.shear_b) > 0.1
        us = site.site_function(u)
        g = us.envelope.grad(site.x0[None, :] + [[0.0, 1e-6]])[0]
        # discrete slopes quantize at curvature * h / 2 around the anchor
        assert abs(g[1]) <= 10 * d.h + 1e-9


class TestFamily:
    def test_s_zero_identity(self, parab, parab_site):
        assert family_at(parab, parab_site, 0.0) is parab

    def test_s_one_matches_conv_segment(self, parab, parab_site):
        got = family_at(parab, parab_site, 1.0)
        C = epigraph_body(parab)
        Ct = conv_with_segment(C, parab_site.seg)
        want = body_to_fn(Ct, parab.domain)
        assert np.abs(got.values - want.values).max() < 1e-9

    def test_blend_matches_general_minkowski(self):
        # coarse fixture: the specialized family equals the generic blend
        d = Domain.square(-1.0, 1.0, 1 / 8)
        u = GridFn.from_callable(d, lambda x, y: x ** 2 + 2 * y ** 2, 8.0)
        site = prepare_site(u, NEWTON, (0.0, 0.0), 0.1)
        C = epigraph_body(site.site_function(u))
        Ct = conv_with_segment(C, site.seg)
        for s in (0.25, 0.5, 0.75):
            fam = family_at(u, site, s)
            blend = minkowski_blend(C, Ct, s)
            want = body_to_fn(blend, d)
            assert np.abs(fam.values - want.values).max() < 1e-9

    def test_monotone_nesting(self, parab, parab_site):
        svals = [parab_site.s_min, parab_site.s_min / 2, 0.0, 0.3, 0.6, 1.0]
        prev = None
        for s in svals:
            vals = family_at(parab, parab_site, s).values
            if prev is not None:
                assert (vals <= prev + 1e-11).all()
            prev = vals

    def test_validity_statements(self, parab, parab_site):
        for s in (parab_site.s_min, -0.01, 0.25, 1.0):
            member = family_at(parab, parab_site, s)
            checks = family_validity(parab, parab_site, member)
            assert checks["equal_outside"], s
            if abs(s) < 0.2:
                assert checks["within_eps"], s

    def test_out_of_range_rejected(self, parab, parab_site):
        with pytest.raises(ValidityError):
            family_at(parab, parab_site, 1.5)
        with pytest.raises(ValidityError):
            family_at(parab, parab_site, -1.0)


class TestQuadraticLaw:
    def test_fit_residual_small(self, parab, sweep):
        fit = fit_quadratic(sweep)
        F0 = sweep[0][1]
        assert fit.residual_max <= 1e-3 * abs(F0)

    def test_exact_quadratic_recovery(self):
        svals = np.linspace(0, 1, 7)
        F = 2.0 - 0.3 * svals + 0.07 * svals ** 2
        fit = fit_quadratic(list(zip(svals, F)))
        assert fit.p0 == pytest.approx(2.0, abs=1e-10)
        assert fit.p1 == pytest.approx(-0.3, abs=1e-10)
        assert fit.p2 == pytest.approx(0.07, abs=1e-10)

    def test_constant_samples(self):
        svals = np.linspace(0, 1, 5)
        fit = fit_quadratic([(s, 3.0) for s in svals])
        assert fit.p1 == pytest.approx(0.0, abs=1e-12)
        assert fit.a3_minus_a4 == pytest.approx(0.0, abs=1e-12)

    def test_fit_preconditions(self):
        from leastres.errors import FitError
        with pytest.raises(FitError):
            fit_quadratic([(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)])
        with pytest.raises(FitError):
            fit_quadratic([(0.0, 1.0), (0.0, 1.0), (1.0, 1.0), (1.0, 2.0)])
        with pytest.raises(FitError):
            fit_quadratic([(0.0, 1.0), (0.3, 1.0), (0.9, 1.0), (1.5, 2.0)])

    def test_analytic_vs_fit(self, parab, parab_site, sweep):
        # resampling noise at h = 1/32 costs ~1e-3 absolute and shrinks
        # O(h^2); the acceptance suite enforces 2% at h = 1/128
        coeffs = analytic_coeffs(parab, parab_site, NEWTON)
        fit = fit_quadratic(sweep)
        assert fit.a3_minus_a4 == pytest.approx(coeffs.a3 - coeffs.a4, abs=1e-3)
        a3_fit = fit.a3_given_a4(coeffs.a4)
        assert a3_fit == pytest.approx(coeffs.a3, rel=0.08)

    def test_coefficients_against_closed_forms(self, parab, parab_site):
        coeffs = analytic_coeffs(parab, parab_site, NEWTON)
        prof = profile_w(parab, parab_site)
        # continuum closed form; the piecewise-linear profile differs O(h^2)
        c = prof.x1_plus
        want_a3 = 2 * parab_site.delta * np.arctan(2 * c)
        assert coeffs.a3 == pytest.approx(want_a3, rel=2 * parab.domain.h ** 2 / abs(want_a3) * 0.1 + 1e-3)
        want_a4 = 2 * parab_site.delta * (
            (prof.x1_plus) / (1 + prof.xi_plus ** 2) - (prof.x1_minus) / (1 + prof.xi_minus ** 2))
        assert coeffs.a4 == pytest.approx(want_a4, rel=1e-9)
        assert coeffs.b4 == pytest.approx(0.0, abs=1e-12)
        assert coeffs.a3 > coeffs.a4

    def test_law_consistency_at_zero(self, parab, parab_site):
        coeffs = analytic_coeffs(parab, parab_site, NEWTON)
        F0 = eval_F(parab, NEWTON)
        assert coeffs.F_at_0 == pytest.approx(F0, rel=5e-3)

    def test_two_sided_derivative(self, parab, parab_site):
        # numeric form of the left/right derivative match: the gap is
        # bounded by C (h + ds) with the quadrature noise inside C
        ds = 2 * parab.domain.h
        F = {s: eval_F(family_at(parab, parab_site, s), NEWTON)
             for s in (-ds, 0.0, ds)}
        right = (F[ds] - F[0.0]) / ds
        left = (F[0.0] - F[-ds]) / ds
        assert abs(left - right) <= 0.15 * (parab.domain.h + ds)


class TestImprovement:
    def test_improves_paraboloid(self, parab, parab_site):
        out = improvement_step(parab, parab_site, NEWTON)
        assert out.improved
        assert out.delta_F < 0
        checks = family_validity(parab, parab_site, out.u_new)
        assert checks["equal_outside"] and checks["within_eps"]

    def test_no_improvement_for_affine_model(self):
        # affine f on the relevant gradient range: resistance is constant
        d = Domain.square(-1.0, 1.0, 1 / 16)
        u = GridFn.from_callable(d, lambda x, y: x ** 2 + 10 * y ** 2, 12.0)
        f = PressureModel.custom(
            value=lambda xi: 10.0 - xi[..., 0],
            gradient=lambda xi: np.broadcast_to(np.array([-1.0, 0.0]), xi.shape).copy(),
            hessian=lambda xi: np.zeros(xi.shape[:-1] + (2, 2)),
            g_horizontal=lambda n: np.zeros(n.shape[:-1]),
        )
        with pytest.raises(PreconditionError):
            prepare_site(u, f, (0.0, 0.0), 0.02)
