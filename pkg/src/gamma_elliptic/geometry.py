"""Analytic chart-based geometry of closed embedded hypersurfaces.

A chart maps a box in R^d (with optional periodic axes) onto a patch of the
surface. All differential operators are computed from the parametrization:
the metric g = J^T J, the area element sqrt(det g), the unit normal from the
minor expansion of the Jacobian, and the tangential projection, gradient,
divergence, Laplacian, and shape operator built on top of them.

Everything is batched: ``y`` has shape (..., d), points have shape (..., d+1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .fields import FD_STEP, AmbientScalarField, AmbientVectorField

# 4th-order central differences for flux divergences: h^4 truncation balanced
# against eps/h roundoff.
FD_STEP4 = float(np.finfo(float).eps ** 0.2)

# Outer step for nested value-only differencing: the inner-gradient error
# (~eps^{2/3}) is amplified by 1/h_outer, so balance h^2 against eps^{2/3}/h.
FD_STEP_NESTED = float(np.finfo(float).eps ** (2.0 / 9.0))

# Rank threshold: smallest singular value of the chart Jacobian below
# 1e-10 times the largest flags a degenerate parametrization.
DEGENERACY_RTOL = 1e-10


class GeometryError(ValueError):
    pass


class DomainError(GeometryError):
    """Parameter outside the chart domain."""


class DegeneracyError(GeometryError):
    """Rank-deficient chart Jacobian."""


class ContractError(GeometryError):
    """Input violates an operator precondition (e.g. non-tangential vector)."""


class CapabilityError(GeometryError):
    """Second-derivative information required but unavailable."""


# ---------------------------------------------------------------------------
# Charts


@dataclass
class Chart:
    """Analytic parametrization of a surface patch.

    ``map``/``jacobian`` (and optional ``hessian``) take y of shape (..., d);
    the Jacobian has shape (..., d+1, d) and the Hessian (..., d+1, d, d).
    ``orientation`` flips the minor-expansion normal so it points outward.
    """

    label: str
    lo: np.ndarray
    hi: np.ndarray
    periodic: Sequence[bool]
    map_fn: Callable[[np.ndarray], np.ndarray]
    jacobian_fn: Callable[[np.ndarray], np.ndarray]
    hessian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    orientation: float = 1.0
    allow_fd: bool = True

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        self.periodic = tuple(bool(p) for p in self.periodic)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("domain bounds must be 1-d arrays of equal length")
        if len(self.periodic) != self.lo.size:
            raise ValueError("periodic flags must match the domain dimension")

    @property
    def dim(self) -> int:
        return self.lo.size

    def wrap(self, y: np.ndarray, check: bool = True) -> np.ndarray:
        """Wrap periodic axes into the box; validate the others."""
        y = np.array(y, dtype=float, copy=True)
        span = self.hi - self.lo
        for k in range(self.dim):
            if self.periodic[k]:
                y[..., k] = self.lo[k] + np.mod(y[..., k] - self.lo[k], span[k])
            elif check:
                slack = 1e-9 * max(span[k], 1.0)
                yk = y[..., k]
                if np.any(yk < self.lo[k] - slack) or np.any(yk > self.hi[k] + slack):
                    raise DomainError(
                        f"parameter outside domain of chart {self.label!r} on axis {k}"
                    )
        return y

    def map(self, y: np.ndarray, check: bool = True) -> np.ndarray:
        return np.asarray(self.map_fn(self.wrap(y, check)), dtype=float)

    def jacobian(self, y: np.ndarray, check: bool = True) -> np.ndarray:
        return np.asarray(self.jacobian_fn(self.wrap(y, check)), dtype=float)

    def hessian(self, y: np.ndarray) -> np.ndarray:
        """Second partials of the map, (..., d+1, d, d); FD fallback."""
        y = self.wrap(y)
        if self.hessian_fn is not None:
            return np.asarray(self.hessian_fn(y), dtype=float)
        if not self.allow_fd:
            raise CapabilityError(
                f"chart {self.label!r} has no hessian and finite differences are disabled"
            )
        d = self.dim
        out = np.empty(y.shape[:-1] + (d + 1, d, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            h = FD_STEP * max(1.0, float(np.max(np.abs(y[..., k]))) if y.size else 1.0)
            jp = self.jacobian(y + h * e, check=False)
            jm = self.jacobian(y - h * e, check=False)
            out[..., :, k] = (jp - jm) / (2.0 * h)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def inverse(self, x: np.ndarray) -> np.ndarray:
        if self.inverse_fn is None:
            raise CapabilityError(f"chart {self.label!r} has no inverse map")
        return self.wrap(np.asarray(self.inverse_fn(np.asarray(x, dtype=float))))


@dataclass
class Atlas:
    """A finite family of charts covering a closed surface, plus the
    closest-point projector used for mesh refinement."""

    charts: List[Chart]
    projector: Callable[[np.ndarray], np.ndarray]
    dim: int
    label: str = ""
    selector: Optional[Callable[[np.ndarray], np.ndarray]] = None
    area: Optional[float] = None  # exact surface area when known

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.projector(np.asarray(x, dtype=float)), dtype=float)

    def locate(self, x: np.ndarray):
        """Return (chart indices, parameters) for surface points x."""
        x = np.asarray(x, dtype=float)
        if len(self.charts) == 1 or self.selector is None:
            idx = np.zeros(x.shape[:-1], dtype=int)
        else:
            idx = np.asarray(self.selector(x), dtype=int)
        y = np.empty(x.shape[:-1] + (self.dim,))
        for k, chart in enumerate(self.charts):
            mask = idx == k
            if np.any(mask):
                y[mask] = chart.inverse(x[mask])
        return idx, y

    def apply(self, x: np.ndarray, func) -> np.ndarray:
        """Evaluate ``func(chart, y)`` at surface points x, chart by chart."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        idx, y = self.locate(flat)
        out = None
        for k, chart in enumerate(self.charts):
            mask = idx == k
            if not np.any(mask):
                continue
            vals = np.asarray(func(chart, y[mask]))
            if out is None:
                out = np.empty((flat.shape[0],) + vals.shape[1:], dtype=vals.dtype)
            out[mask] = vals
        return out.reshape(x.shape[:-1] + out.shape[1:])


# ---------------------------------------------------------------------------
# First-order quantities


def _metric_pieces(chart: Chart, y: np.ndarray, check: bool = True):
    """Jacobian, metric, inverse metric and area element, with rank check."""
    jac = chart.jacobian(y, check=check)
    g = np.einsum("...ai,...aj->...ij", jac, jac)
    eigs = np.linalg.eigvalsh(g)
    if np.any(eigs[..., 0] < (DEGENERACY_RTOL**2) * np.maximum(eigs[..., -1], 1e-300)):
        raise DegeneracyError(f"rank-deficient Jacobian in chart {chart.label!r}")
    ginv = np.linalg.inv(g)
    area = np.sqrt(np.linalg.det(g))
    return jac, g, ginv, area


def metric_tensor(chart: Chart, y: np.ndarray) -> np.ndarray:
    """First fundamental form J^T J, shape (..., d, d)."""
    _, g, _, _ = _metric_pieces(chart, y)
    return g


def area_element(chart: Chart, y: np.ndarray) -> np.ndarray:
    """sqrt(det g) > 0."""
    _, _, _, a = _metric_pieces(chart, y)
    return a


def _normal_unoriented(chart: Chart, y: np.ndarray, check: bool = True) -> np.ndarray:
    """Minor-expansion normal N with N_j = det([e_j | J]), not normalized."""
    jac = chart.jacobian(y, check=check)
    n = jac.shape[-2]
    N = np.empty(jac.shape[:-2] + (n,))
    for j in range(n):
        m = np.zeros(jac.shape[:-2] + (n, n))
        m[..., j, 0] = 1.0
        m[..., :, 1:] = jac
        N[..., j] = np.linalg.det(m)
    return N


def unit_normal(chart: Chart, y: np.ndarray) -> np.ndarray:
    """Outward unit normal (orientation fixed by the chart's sign flag)."""
    jac, _, _, _ = _metric_pieces(chart, y)  # rank check
    N = _normal_unoriented(chart, y)
    norm = np.linalg.norm(N, axis=-1, keepdims=True)
    if np.any(norm <= 0.0):
        raise DegeneracyError(f"vanishing normal in chart {chart.label!r}")
    return chart.orientation * N / norm


def tangential_projection(chart: Chart, y: np.ndarray) -> np.ndarray:
    """Projection onto the tangent plane, J g^{-1} J^T = I - nu nu^T."""
    jac, _, ginv, _ = _metric_pieces(chart, y)
    return np.einsum("...ai,...ij,...bj->...ab", jac, ginv, jac)


def tangential_components(chart: Chart, v: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Coordinates of a tangential vector in the chart basis: g^{-1} J^T v."""
    v = np.asarray(v, dtype=float)
    jac, _, ginv, _ = _metric_pieces(chart, y)
    P = np.einsum("...ai,...ij,...bj->...ab", jac, ginv, jac)
    resid = np.einsum("...ab,...b->...a", P, v) - v
    scale = 1.0 + np.linalg.norm(v, axis=-1)
    if np.any(np.linalg.norm(resid, axis=-1) > 1e-8 * scale):
        raise ContractError("input vector is not tangential")
    return np.einsum("...ij,...aj,...a->...i", ginv, jac, v)


# ---------------------------------------------------------------------------
# Parametric restrictions of ambient fields


class ParametricScalar:
    """A scalar function of chart parameters with derivative access."""

    def __init__(self, chart: Chart, value, gradient=None, hessian=None):
        self.chart = chart
        self._value = value
        self._gradient = gradient
        self._hessian = hessian

    def value(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self._value(y), dtype=float)

    @property
    def has_gradient(self) -> bool:
        return self._gradient is not None

    @property
    def has_hessian(self) -> bool:
        return self._hessian is not None

    def gradient(self, y: np.ndarray) -> np.ndarray:
        if self._gradient is not None:
            return np.asarray(self._gradient(y), dtype=float)
        if not self.chart.allow_fd:
            raise CapabilityError("field has no gradient and finite differences are disabled")
        d = self.chart.dim
        out = np.empty(np.shape(y))
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            h = FD_STEP
            out[..., k] = (self.value(y + h * e) - self.value(y - h * e)) / (2.0 * h)
        return out

    def hessian(self, y: np.ndarray) -> np.ndarray:
        if self._hessian is not None:
            return np.asarray(self._hessian(y), dtype=float)
        raise CapabilityError("parametric field has no second derivatives")


class ParametricVector:
    """An R^{d+1}-valued function of chart parameters with Jacobian access."""

    def __init__(self, chart: Chart, value, jacobian=None):
        self.chart = chart
        self._value = value
        self._jacobian = jacobian

    def value(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self._value(y), dtype=float)

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        """d(v_a)/d(y_j), shape (..., d+1, d)."""
        if self._jacobian is not None:
            return np.asarray(self._jacobian(y), dtype=float)
        if not self.chart.allow_fd:
            raise CapabilityError("field has no jacobian and finite differences are disabled")
        d = self.chart.dim
        v0 = self.value(y)
        out = np.empty(v0.shape + (d,))
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            h = FD_STEP
            out[..., k] = (self.value(y + h * e) - self.value(y - h * e)) / (2.0 * h)
        return out


def restrict_scalar(chart: Chart, f: AmbientScalarField) -> ParametricScalar:
    """Pull an ambient scalar field back through the chart."""

    def value(y):
        return f(chart.map(y, check=False))

    gradient = None
    if f.has_gradient:
        def gradient(y):
            x = chart.map(y, check=False)
            jac = chart.jacobian(y, check=False)
            return np.einsum("...aj,...a->...j", jac, f.gradient(x))

    hessian = None
    if f.has_gradient and f.has_hessian and (
        chart.hessian_fn is not None or chart.allow_fd
    ):
        def hessian(y):
            x = chart.map(y, check=False)
            jac = chart.jacobian(y, check=False)
            hx = chart.hessian(y)
            hf = f.hessian(x)
            gf = f.gradient(x)
            term1 = np.einsum("...ai,...ab,...bj->...ij", jac, hf, jac)
            term2 = np.einsum("...a,...aij->...ij", gf, hx)
            return term1 + term2

    return ParametricScalar(chart, value, gradient, hessian)


def restrict_vector(chart: Chart, v: AmbientVectorField) -> ParametricVector:
    def value(y):
        return v(chart.map(y, check=False))

    jacobian = None
    if v.has_jacobian:
        def jacobian(y):
            x = chart.map(y, check=False)
            jac = chart.jacobian(y, check=False)
            return np.einsum("...ab,...bj->...aj", v.jacobian(x), jac)

    return ParametricVector(chart, value, jacobian)


# ---------------------------------------------------------------------------
# Differential operators


def surface_gradient(chart: Chart, f: ParametricScalar, y: np.ndarray) -> np.ndarray:
    """Tangential gradient J g^{-1} grad(f~), an ambient (d+1)-vector."""
    if not isinstance(f, ParametricScalar):
        raise ContractError("surface_gradient expects a ParametricScalar")
    jac, _, ginv, _ = _metric_pieces(chart, y)
    return np.einsum("...ai,...ij,...j->...a", jac, ginv, f.gradient(y))


def surface_divergence(chart: Chart, v: ParametricVector, y: np.ndarray) -> np.ndarray:
    """Exterior divergence sum_ij g^{ij} d_i(chi) . d_j(v~)."""
    jac, _, ginv, _ = _metric_pieces(chart, y)
    jv = v.jacobian(y)
    return np.einsum("...ij,...ai,...aj->...", ginv, jac, jv)


def _divergence_of_parametric_flux(
    chart: Chart, s_fn, y: np.ndarray, order: int = 2, step: Optional[float] = None
):
    """sum_j d(s_j)/d(y_j) by central differences; s_fn(y) -> (..., d)."""
    d = chart.dim
    out = 0.0
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        if order == 4:
            h = FD_STEP4 if step is None else step
            out = out + (
                -s_fn(y + 2 * h * e)[..., k]
                + 8.0 * s_fn(y + h * e)[..., k]
                - 8.0 * s_fn(y - h * e)[..., k]
                + s_fn(y - 2 * h * e)[..., k]
            ) / (12.0 * h)
        else:
            h = FD_STEP if step is None else step
            out = out + (
                s_fn(y + h * e)[..., k] - s_fn(y - h * e)[..., k]
            ) / (2.0 * h)
    return out


def laplace_beltrami_apply(chart: Chart, f: ParametricScalar, y: np.ndarray) -> np.ndarray:
    """Surface Laplacian (1/a) div(a g^{-1} grad f~) at chart parameters y.

    Uses the analytic expansion when chart and field second derivatives are
    available, otherwise differentiates the flux by central differences.
    """
    have_analytic = f.has_hessian and (chart.hessian_fn is not None or chart.allow_fd)
    if have_analytic:
        jac, g, ginv, a = _metric_pieces(chart, y)
        hx = chart.hessian(y)  # (..., d+1, i, j)
        grad_f = f.gradient(y)
        hess_f = f.hessian(y)
        # dg[k,i,j] = d_k g_ij = H[:,k,i].J[:,j] + J[:,i].H[:,k,j]
        dg = np.einsum("...aki,...aj->...kij", hx, jac) + np.einsum(
            "...ai,...akj->...kij", jac, hx
        )
        dginv = -np.einsum("...im,...kmn,...nj->...kij", ginv, dg, ginv)
        # d_k(a)/a = tr(g^{-1} d_k g) / 2
        dloga = 0.5 * np.einsum("...ij,...kji->...k", ginv, dg)
        main = np.einsum("...ij,...ij->...", ginv, hess_f)
        drift = np.einsum("...kkj,...j->...", dginv, grad_f) + np.einsum(
            "...k,...kj,...j->...", dloga, ginv, grad_f
        )
        return main + drift
    if not chart.allow_fd:
        raise CapabilityError(
            "laplace-beltrami needs second derivatives; none available and FD disabled"
        )

    def flux(yy):
        jac, _, ginv, a = _metric_pieces(chart, yy, check=False)
        return a[..., None] * np.einsum("...ij,...j->...i", ginv, f.gradient(yy))

    _, _, _, a0 = _metric_pieces(chart, y)
    return _divergence_of_parametric_flux(chart, flux, np.asarray(y, dtype=float)) / a0


def laplace_beltrami_fd(chart: Chart, f: ParametricScalar, y: np.ndarray) -> np.ndarray:
    """Value-only finite-difference Laplacian (independent oracle path).

    All derivatives, including the field gradient, come from central
    differences of values; no analytic derivative callbacks are consulted.
    """
    plain = ParametricScalar(chart, f.value)  # strips analytic derivatives

    def flux(yy):
        _, _, ginv, a = _metric_pieces(chart, yy, check=False)
        return a[..., None] * np.einsum("...ij,...j->...i", ginv, plain.gradient(yy))

    _, _, _, a0 = _metric_pieces(chart, y)
    return (
        _divergence_of_parametric_flux(
            chart, flux, np.asarray(y, dtype=float), step=FD_STEP_NESTED
        )
        / a0
    )


def divergence_of_tangential_flux(
    chart: Chart, flux: Callable[[np.ndarray], np.ndarray], y: np.ndarray, order: int = 4
) -> np.ndarray:
    """Covariant divergence of a tangential ambient flux F evaluated on-surface.

    ``flux(x)`` returns the ambient (d+1)-vector F at surface points; the
    divergence is (1/a) sum_j d_j(a Fhat_j) with Fhat the chart components.
    """

    def s_fn(yy):
        jac, _, ginv, a = _metric_pieces(chart, yy, check=False)
        F = flux(chart.map(yy, check=False))
        fhat = np.einsum("...ij,...aj,...a->...i", ginv, jac, F)
        return a[..., None] * fhat

    _, _, _, a0 = _metric_pieces(chart, y)
    return _divergence_of_parametric_flux(chart, s_fn, np.asarray(y, dtype=float), order) / a0


def shape_operator(chart: Chart, y: np.ndarray) -> np.ndarray:
    """Weingarten map B = (tangential gradient of the unit normal)."""
    jac, _, ginv, _ = _metric_pieces(chart, y)
    y = np.asarray(y, dtype=float)
    d = chart.dim
    if chart.hessian_fn is not None:
        # Jacobi's rule: d_k N_j is a sum of determinants with one Jacobian
        # column replaced by the corresponding second-derivative column.
        hx = chart.hessian(y)
        n = d + 1
        N = _normal_unoriented(chart, y)
        dN = np.zeros(y.shape[:-1] + (n, d))
        for k in range(d):
            for c in range(d):
                m = np.zeros(y.shape[:-1] + (n, n))
                m[..., :, 1:] = jac
                m[..., :, 1 + c] = hx[..., :, c, k]
                for j in range(n):
                    mj = m.copy()
                    mj[..., :, 0] = 0.0
                    mj[..., j, 0] = 1.0
                    dN[..., j, k] += np.linalg.det(mj)
    elif chart.allow_fd:
        N = _normal_unoriented(chart, y)
        dN = np.empty(y.shape[:-1] + (d + 1, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            h = FD_STEP
            dN[..., k] = (
                _normal_unoriented(chart, y + h * e, check=False)
                - _normal_unoriented(chart, y - h * e, check=False)
            ) / (2.0 * h)
    else:
        raise CapabilityError("shape operator needs second derivatives")
    norm = np.linalg.norm(N, axis=-1, keepdims=True)
    nu = N / norm
    # d(nu) = (I - nu nu^T) dN / |N|; orientation cancels in B overall sign? No:
    # B is built from the oriented normal, so apply the sign to J_nu as well.
    dnu = (dN - np.einsum("...a,...b,...bk->...ak", nu, nu, dN)) / norm[..., None]
    dnu = chart.orientation * dnu
    return np.einsum("...ak,...kj,...bj->...ab", dnu, ginv, jac)


# ---------------------------------------------------------------------------
# Preset surfaces


def sphere_chart(radius: float = 1.0, pole_axis: str = "z", label: str = "") -> Chart:
    """Polar chart of the radius-R sphere with poles on the given axis."""
    R = float(radius)
    margin = 1e-6

    if pole_axis == "z":
        def map_fn(y):
            th, ph = y[..., 0], y[..., 1]
            return np.stack(
                [R * np.sin(th) * np.cos(ph), R * np.sin(th) * np.sin(ph), R * np.cos(th)],
                axis=-1,
            )

        def jacobian_fn(y):
            th, ph = y[..., 0], y[..., 1]
            st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
            j = np.empty(y.shape[:-1] + (3, 2))
            j[..., 0, 0] = R * ct * cp
            j[..., 1, 0] = R * ct * sp
            j[..., 2, 0] = -R * st
            j[..., 0, 1] = -R * st * sp
            j[..., 1, 1] = R * st * cp
            j[..., 2, 1] = 0.0
            return j

        def hessian_fn(y):
            th, ph = y[..., 0], y[..., 1]
            st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
            h = np.empty(y.shape[:-1] + (3, 2, 2))
            h[..., 0, 0, 0] = -R * st * cp
            h[..., 1, 0, 0] = -R * st * sp
            h[..., 2, 0, 0] = -R * ct
            h[..., 0, 0, 1] = h[..., 0, 1, 0] = -R * ct * sp
            h[..., 1, 0, 1] = h[..., 1, 1, 0] = R * ct * cp
            h[..., 2, 0, 1] = h[..., 2, 1, 0] = 0.0
            h[..., 0, 1, 1] = -R * st * cp
            h[..., 1, 1, 1] = -R * st * sp
            h[..., 2, 1, 1] = 0.0
            return h

        def inverse_fn(x):
            th = np.arccos(np.clip(x[..., 2] / R, -1.0, 1.0))
            ph = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2.0 * np.pi)
            return np.stack([th, ph], axis=-1)

    elif pole_axis == "x":
        def map_fn(y):
            th, ph = y[..., 0], y[..., 1]
            return np.stack(
                [R * np.cos(th), R * np.sin(th) * np.cos(ph), R * np.sin(th) * np.sin(ph)],
                axis=-1,
            )

        def jacobian_fn(y):
            th, ph = y[..., 0], y[..., 1]
            st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
            j = np.empty(y.shape[:-1] + (3, 2))
            j[..., 0, 0] = -R * st
            j[..., 1, 0] = R * ct * cp
            j[..., 2, 0] = R * ct * sp
            j[..., 0, 1] = 0.0
            j[..., 1, 1] = -R * st * sp
            j[..., 2, 1] = R * st * cp
            return j

        def hessian_fn(y):
            th, ph = y[..., 0], y[..., 1]
            st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
            h = np.empty(y.shape[:-1] + (3, 2, 2))
            h[..., 0, 0, 0] = -R * ct
            h[..., 1, 0, 0] = -R * st * cp
            h[..., 2, 0, 0] = -R * st * sp
            h[..., 0, 0, 1] = h[..., 0, 1, 0] = 0.0
            h[..., 1, 0, 1] = h[..., 1, 1, 0] = -R * ct * sp
            h[..., 2, 0, 1] = h[..., 2, 1, 0] = R * ct * cp
            h[..., 0, 1, 1] = 0.0
            h[..., 1, 1, 1] = -R * st * cp
            h[..., 2, 1, 1] = -R * st * sp
            return h

        def inverse_fn(x):
            th = np.arccos(np.clip(x[..., 0] / R, -1.0, 1.0))
            ph = np.mod(np.arctan2(x[..., 2], x[..., 1]), 2.0 * np.pi)
            return np.stack([th, ph], axis=-1)

    else:
        raise ValueError("pole_axis must be 'z' or 'x'")

    return Chart(
        label=label or f"sphere-polar-{pole_axis}",
        lo=np.array([margin, 0.0]),
        hi=np.array([np.pi - margin, 2.0 * np.pi]),
        periodic=(False, True),
        map_fn=map_fn,
        jacobian_fn=jacobian_fn,
        hessian_fn=hessian_fn,
        inverse_fn=inverse_fn,
        orientation=1.0,
    )


def sphere_atlas(radius: float = 1.0) -> Atlas:
    R = float(radius)
    charts = [sphere_chart(R, "z"), sphere_chart(R, "x")]

    def projector(x):
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(norm < 1e-14):
            raise GeometryError("cannot project the origin onto the sphere")
        return R * x / norm

    def selector(x):
        # prefer the chart whose poles are farther away
        return (np.abs(x[..., 2]) > np.abs(x[..., 0])).astype(int)

    return Atlas(
        charts=charts,
        projector=projector,
        dim=2,
        label=f"sphere(R={R})",
        selector=selector,
        area=4.0 * np.pi * R * R,
    )


def torus_chart(major: float = 2.0, minor: float = 1.0, label: str = "torus") -> Chart:
    R, r = float(major), float(minor)

    def map_fn(y):
        th, ph = y[..., 0], y[..., 1]
        w = R + r * np.cos(th)
        return np.stack([w * np.cos(ph), w * np.sin(ph), r * np.sin(th)], axis=-1)

    def jacobian_fn(y):
        th, ph = y[..., 0], y[..., 1]
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        w = R + r * ct
        j = np.empty(y.shape[:-1] + (3, 2))
        j[..., 0, 0] = -r * st * cp
        j[..., 1, 0] = -r * st * sp
        j[..., 2, 0] = r * ct
        j[..., 0, 1] = -w * sp
        j[..., 1, 1] = w * cp
        j[..., 2, 1] = 0.0
        return j

    def hessian_fn(y):
        th, ph = y[..., 0], y[..., 1]
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        w = R + r * ct
        h = np.empty(y.shape[:-1] + (3, 2, 2))
        h[..., 0, 0, 0] = -r * ct * cp
        h[..., 1, 0, 0] = -r * ct * sp
        h[..., 2, 0, 0] = -r * st
        h[..., 0, 0, 1] = h[..., 0, 1, 0] = r * st * sp
        h[..., 1, 0, 1] = h[..., 1, 1, 0] = -r * st * cp
        h[..., 2, 0, 1] = h[..., 2, 1, 0] = 0.0
        h[..., 0, 1, 1] = -w * cp
        h[..., 1, 1, 1] = -w * sp
        h[..., 2, 1, 1] = 0.0
        return h

    def inverse_fn(x):
        ph = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2.0 * np.pi)
        rho = np.hypot(x[..., 0], x[..., 1])
        th = np.mod(np.arctan2(x[..., 2] / r, (rho - R) / r), 2.0 * np.pi)
        return np.stack([th, ph], axis=-1)

    # the (theta, phi) ordering yields the inward minor-expansion normal
    return Chart(
        label=label,
        lo=np.array([0.0, 0.0]),
        hi=np.array([2.0 * np.pi, 2.0 * np.pi]),
        periodic=(True, True),
        map_fn=map_fn,
        jacobian_fn=jacobian_fn,
        hessian_fn=hessian_fn,
        inverse_fn=inverse_fn,
        orientation=-1.0,
    )


def torus_atlas(major: float = 2.0, minor: float = 1.0) -> Atlas:
    R, r = float(major), float(minor)
    if not R > r > 0:
        raise ValueError("torus requires major > minor > 0")

    def projector(x):
        x = np.asarray(x, dtype=float)
        rho = np.hypot(x[..., 0], x[..., 1])
        if np.any(rho < 1e-14):
            raise GeometryError("cannot project points on the torus axis")
        cx = R * x[..., 0] / rho
        cy = R * x[..., 1] / rho
        dx = np.stack([x[..., 0] - cx, x[..., 1] - cy, x[..., 2]], axis=-1)
        dn = np.linalg.norm(dx, axis=-1, keepdims=True)
        if np.any(dn < 1e-14):
            raise GeometryError("cannot project the torus center circle")
        c = np.stack([cx, cy, np.zeros_like(cx)], axis=-1)
        return c + r * dx / dn

    return Atlas(
        charts=[torus_chart(R, r)],
        projector=projector,
        dim=2,
        label=f"torus(R={R},r={r})",
        area=4.0 * np.pi**2 * R * r,
    )


def planar_chart(extent: float = 1.0, label: str = "plane") -> Chart:
    """Flat test chart y -> (y1, y2, 0) over [0, extent]^2."""
    L = float(extent)

    def map_fn(y):
        out = np.zeros(y.shape[:-1] + (3,))
        out[..., 0] = y[..., 0]
        out[..., 1] = y[..., 1]
        return out

    def jacobian_fn(y):
        j = np.zeros(y.shape[:-1] + (3, 2))
        j[..., 0, 0] = 1.0
        j[..., 1, 1] = 1.0
        return j

    def hessian_fn(y):
        return np.zeros(y.shape[:-1] + (3, 2, 2))

    def inverse_fn(x):
        return np.stack([x[..., 0], x[..., 1]], axis=-1)

    return Chart(
        label=label,
        lo=np.array([0.0, 0.0]),
        hi=np.array([L, L]),
        periodic=(False, False),
        map_fn=map_fn,
        jacobian_fn=jacobian_fn,
        hessian_fn=hessian_fn,
        inverse_fn=inverse_fn,
        orientation=1.0,
    )


def atlas_for_preset(preset: str, **params) -> Atlas:
    """Build one of the preset surfaces: 'sphere' or 'torus'."""
    if preset == "sphere":
        return sphere_atlas(radius=params.get("radius", 1.0))
    if preset == "torus":
        return torus_atlas(major=params.get("major", 2.0), minor=params.get("minor", 1.0))
    raise ValueError(f"unknown surface preset {preset!r}")


def random_surface_points(atlas: Atlas, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw surface points by projecting ambient Gaussian samples."""
    pts = rng.standard_normal((n, atlas.dim + 1))
    if atlas.label.startswith("torus"):
        # keep samples away from the symmetry axis before projecting
        pts[:, :2] += np.sign(pts[:, :2]) + 1e-3
    return atlas.project(pts)
