"""Pressure models and the resistance functionals they induce.

A pressure model is a function f of the surface gradient; the drag of a
shape u over a domain is F(u) = integral of f(grad u).  The same drag can
be computed over the boundary of the solid body via the surface density
g(n) = f(n1/|n3|, n2/|n3|) |n3| for downward normals and 0 otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import NonSmoothModelError
from .geometry import Domain, GridFn, PolyBody

_FD_STEP = 1e-5
# second differences balance truncation against roundoff near eps^(1/4)
_FD_STEP2 = 2e-4


class HessianClass(Enum):
    POS = "POS"
    NEG = "NEG"
    DEGEN = "DEGEN"


@dataclass(frozen=True)
class PressureModel:
    """Pressure as a function of the gradient, with derivatives when smooth.

    ``g_horizontal`` supplies the limit of the surface density on
    horizontal normals (n3 = 0); models without a declared limit raise
    there.
    """

    kind: str
    value_fn: Callable
    grad_fn: Callable | None = None
    hess_fn: Callable | None = None
    smooth_at_fn: Callable | None = None
    g_horizontal_fn: Callable | None = None
    params: tuple = ()

    # -- constructors --------------------------------------------------------

    @staticmethod
    def newton() -> "PressureModel":
        """Classical model f(xi) = 1 / (1 + |xi|^2); g = |n3|^3 on the sphere."""
        def val(xi):
            return 1.0 / (1.0 + (xi ** 2).sum(axis=-1))

        def grad(xi):
            d = (1.0 + (xi ** 2).sum(axis=-1, keepdims=True)) ** 2
            return -2.0 * xi / d

        def hess(xi):
            r2 = (xi ** 2).sum(axis=-1)
            d2 = (1.0 + r2) ** 2
            d3 = (1.0 + r2) ** 3
            eye = np.eye(2)
            outer = xi[..., :, None] * xi[..., None, :]
            return (-2.0 / d2)[..., None, None] * eye + (8.0 / d3)[..., None, None] * outer

        return PressureModel("newton", val, grad, hess,
                             smooth_at_fn=lambda xi: np.ones(xi.shape[:-1], bool),
                             g_horizontal_fn=lambda n: np.zeros(n.shape[:-1]))

    @staticmethod
    def quadratic() -> "PressureModel":
        def val(xi):
            return (xi ** 2).sum(axis=-1)

        return PressureModel("quadratic", val,
                             grad_fn=lambda xi: 2.0 * xi,
                             hess_fn=lambda xi: np.broadcast_to(2.0 * np.eye(2), xi.shape[:-1] + (2, 2)).copy(),
                             smooth_at_fn=lambda xi: np.ones(xi.shape[:-1], bool))

    @staticmethod
    def affine_plus(a, b: float) -> "PressureModel":
        """f(xi) = max(0, b - <a, xi>): particles sticking to the surface."""
        a = np.asarray(a, dtype=float).reshape(2)

        def val(xi):
            return np.maximum(0.0, b - xi @ a)

        def grad(xi):
            act = (b - xi @ a) > 0
            return np.where(act[..., None], -a, 0.0)

        def hess(xi):
            return np.zeros(xi.shape[:-1] + (2, 2))

        def smooth_at(xi):
            crease = np.abs(b - xi @ a) <= 1e-9 * (1.0 + abs(b))
            return ~crease

        def g_h(n):
            return np.maximum(0.0, -(n[..., :2] @ a))

        return PressureModel("affine_plus", val, grad, hess, smooth_at, g_h,
                             params=(tuple(a), float(b)))

    @staticmethod
    def flat_disk(r: float) -> "PressureModel":
        """f = (|xi| - r)_+^2: vanishes on the disk |xi| <= r (degenerate fixture)."""
        def val(xi):
            rho = np.sqrt((xi ** 2).sum(axis=-1))
            return np.maximum(0.0, rho - r) ** 2

        def grad(xi):
            rho = np.sqrt((xi ** 2).sum(axis=-1))
            safe = np.maximum(rho, 1e-300)
            coef = 2.0 * np.maximum(0.0, rho - r) / safe
            return coef[..., None] * xi

        def smooth_at(xi):
            rho = np.sqrt((xi ** 2).sum(axis=-1))
            return np.abs(rho - r) > 1e-9 * (1.0 + r)

        return PressureModel("flat_disk", val, grad, None, smooth_at, None,
                             params=(float(r),))

    @staticmethod
    def custom(value, gradient=None, hessian=None, smooth_at=None,
               g_horizontal=None) -> "PressureModel":
        return PressureModel("custom", value, gradient, hessian, smooth_at, g_horizontal)

    # -- evaluation ------------------------------------------------------------

    def value(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.value_fn(xi)

    def grad(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.grad_fn is not None:
            return self.grad_fn(xi)
        return self._fd_grad(xi)

    def hess(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.hess_fn is not None:
            return self.hess_fn(xi)
        return self.hess_fd(xi)

    def _fd_grad(self, xi, h=_FD_STEP):
        g = np.empty(xi.shape)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            g[..., k] = (self.value(xi + e) - self.value(xi - e)) / (2 * h)
        return g

    def hess_fd(self, xi, h=_FD_STEP2):
        """Central finite-difference Hessian; the cross-check for analytics."""
        xi = np.asarray(xi, dtype=float)
        H = np.empty(xi.shape[:-1] + (2, 2))
        for i in range(2):
            for j in range(2):
                ei = np.zeros(2); ei[i] = h
                ej = np.zeros(2); ej[j] = h
                H[..., i, j] = (self.value(xi + ei + ej) - self.value(xi + ei - ej)
                                - self.value(xi - ei + ej) + self.value(xi - ei - ej)) / (4 * h * h)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def is_smooth_at(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.smooth_at_fn is None:
            return np.ones(xi.shape[:-1], bool)
        return self.smooth_at_fn(xi)

    def g(self, n):
        """Surface density on unit normals (vectorized over the last axis)."""
        n = np.asarray(n, dtype=float)
        n3 = n[..., 2]
        out = np.zeros(n.shape[:-1])
        down = n3 < -1e-12
        if down.any():
            nd = n[down]
            xi = nd[:, :2] / np.abs(nd[:, 2:3])
            out[down] = self.value(xi) * np.abs(nd[:, 2])
        horiz = np.abs(n3) <= 1e-12
        if horiz.any():
            if self.g_horizontal_fn is None:
                raise NonSmoothModelError(
                    f"model {self.kind!r} declares no surface-density limit on horizontal normals")
            out[horiz] = self.g_horizontal_fn(n[horiz])
        return out


def pressure_by_name(name: str, **kw) -> PressureModel:
    """Config-file entry point: model selected by name plus parameters."""
    if name == "newton":
        return PressureModel.newton()
    if name == "quadratic":
        return PressureModel.quadratic()
    if name == "affine_plus":
        return PressureModel.affine_plus(kw["a"], kw["b"])
    if name == "flat_disk":
        return PressureModel.flat_disk(kw["r"])
    raise ValueError(f"unknown pressure model {name!r}")


# ---------------------------------------------------------------------------
# Region masks


@dataclass(frozen=True)
class RegionMask:
    """Boolean selection over the cells of a domain."""

    domain: Domain
    flags: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.flags, dtype=bool)
        if f.shape != (len(self.domain.cell_mid),):
            raise ValueError("mask must have one flag per domain cell")
        f = f.copy()
        f.flags.writeable = False
        object.__setattr__(self, "flags", f)

    @staticmethod
    def all(domain: Domain) -> "RegionMask":
        return RegionMask(domain, np.ones(len(domain.cell_mid), bool))

    @staticmethod
    def from_predicate(domain: Domain, pred) -> "RegionMask":
        m = domain.cell_mid
        return RegionMask(domain, pred(m[:, 0], m[:, 1]))

    def __invert__(self):
        return RegionMask(self.domain, ~self.flags)

    def __and__(self, other):
        return RegionMask(self.domain, self.flags & other.flags)

    def __or__(self, other):
        return RegionMask(self.domain, self.flags | other.flags)


# ---------------------------------------------------------------------------
# Functionals


def cell_resistance_terms(u: GridFn, f: PressureModel) -> np.ndarray:
    """Per-cell contribution f(grad u | cell) * area(cell within the domain)."""
    g = u.cell_gradients
    return f.value(g) * u.domain.cell_weight


def eval_F(u: GridFn, f: PressureModel, mask: RegionMask | None = None) -> float:
    """Midpoint quadrature of f(grad u) over the domain (or a cell mask).

    The gradient per cell comes from the lower-hull facet over the cell
    midpoint, which keeps the value exact for polyhedral u away from the
    boundary; convergence is O(h) for Lipschitz u.
    """
    terms = cell_resistance_terms(u, f)
    if mask is not None:
        terms = terms[np.asarray(mask.flags)]
    return float(terms.sum())


def eval_F_body(C: PolyBody, f: PressureModel) -> float:
    """Surface form of the functional: sum of g(n) * area over facets."""
    n, a = C.facet_normals_areas
    if len(n) == 0:
        return 0.0
    return float((f.g(n) * a).sum())


def classify_hessian(f: PressureModel, xi, tol: float | None = None) -> HessianClass:
    """POS / NEG / DEGEN label of f'' at a gradient value xi.

    Raises ``NonSmoothModelError`` off the smooth locus of the model.
    """
    xi = np.asarray(xi, dtype=float).reshape(2)
    if not bool(np.asarray(f.is_smooth_at(xi[None, :])).ravel()[0]):
        raise NonSmoothModelError(f"model {f.kind!r} is not twice differentiable at {xi}")
    H = np.asarray(f.hess(xi[None, :]))[0]
    scale = max(1.0, float(np.abs(H).max()))
    if tol is None:
        tol = 1e-8 * scale
    eigs = np.linalg.eigvalsh(H)
    det = float(eigs[0] * eigs[1])
    if eigs.min() > tol:
        return HessianClass.POS
    if abs(det) <= tol * scale:
        return HessianClass.DEGEN
    return HessianClass.NEG


def partition_domain(u: GridFn, f: PressureModel, tol: float | None = None):
    """Cell labels POS / NEG / DEGEN; boundary-adjacent cells are DEGEN.

    DEGEN plays the role of the closed remainder set (zero determinant or
    boundary).  Returns an array of HessianClass, one entry per cell.
    """
    dom = u.domain
    grads = u.cell_gradients
    smooth = f.is_smooth_at(grads)
    if not smooth.all():
        k = int(np.flatnonzero(~smooth)[0])
        raise NonSmoothModelError(f"model not smooth at cell gradient {grads[k]}")
    labels = np.empty(len(grads), dtype=object)
    interior = dom.interior_cell_mask()
    # drop cells that touch the domain boundary into the remainder class
    ij = dom.cell_ij
    occupied = {tuple(r) for r in ij}
    for k in range(len(grads)):
        if not interior[k]:
            labels[k] = HessianClass.DEGEN
            continue
        i, j = ij[k]
        ring = {(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)}
        if not ring <= occupied:
            labels[k] = HessianClass.DEGEN
            continue
        labels[k] = classify_hessian(f, grads[k], tol)
    return labels


def masks_from_labels(domain: Domain, labels) -> dict:
    return {
        cls: RegionMask(domain, np.array([l is cls for l in labels]))
        for cls in (HessianClass.POS, HessianClass.NEG, HessianClass.DEGEN)
    }
