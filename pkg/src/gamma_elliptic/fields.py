"""Ambient coefficient fields on R^n.

All fields evaluate batched: ``x`` has shape ``(..., n)`` and results keep the
leading axes. Derivatives are taken from user-supplied callables when given,
otherwise by central finite differences in the ambient coordinates.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

# Central-difference step for first derivatives: balances O(h^2) truncation
# against eps/h roundoff.
FD_STEP = float(np.cbrt(np.finfo(float).eps))


def _steps(x: np.ndarray) -> np.ndarray:
    return FD_STEP * np.maximum(1.0, np.abs(x))


class AmbientScalarField:
    """Scalar field x -> R with optional analytic gradient/hessian."""

    def __init__(
        self,
        value: Callable[[np.ndarray], np.ndarray],
        gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        name: str = "",
    ):
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.name = name

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self._value(x), dtype=float)

    @property
    def has_gradient(self) -> bool:
        return self._gradient is not None

    @property
    def has_hessian(self) -> bool:
        return self._hessian is not None

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._gradient is not None:
            return np.asarray(self._gradient(x), dtype=float)
        n = x.shape[-1]
        h = _steps(x)
        g = np.empty(x.shape, dtype=float)
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            hk = h[..., k][..., None]
            g[..., k] = (self(x + hk * e) - self(x - hk * e)) / (2.0 * hk[..., 0])
        return g

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._hessian is not None:
            return np.asarray(self._hessian(x), dtype=float)
        n = x.shape[-1]
        h = _steps(x)
        out = np.empty(x.shape + (n,), dtype=float)
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            hk = h[..., k][..., None]
            out[..., k] = (
                self.gradient(x + hk * e) - self.gradient(x - hk * e)
            ) / (2.0 * hk)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def __repr__(self):
        return f"AmbientScalarField({self.name or 'anonymous'})"


class AmbientVectorField:
    """Vector field x -> R^n with optional analytic Jacobian J[a,b] = d_b v_a."""

    def __init__(
        self,
        value: Callable[[np.ndarray], np.ndarray],
        jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        name: str = "",
    ):
        self._value = value
        self._jacobian = jacobian
        self.name = name

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self._value(x), dtype=float)

    @property
    def has_jacobian(self) -> bool:
        return self._jacobian is not None

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._jacobian is not None:
            return np.asarray(self._jacobian(x), dtype=float)
        n = x.shape[-1]
        h = _steps(x)
        out = np.empty(x.shape + (n,), dtype=float)
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            hk = h[..., k][..., None]
            out[..., k] = (self(x + hk * e) - self(x - hk * e)) / (2.0 * hk)
        return out

    def __repr__(self):
        return f"AmbientVectorField({self.name or 'anonymous'})"


class AmbientMatrixField:
    """Matrix field x -> R^{n x n}; only values are ever needed."""

    def __init__(self, value: Callable[[np.ndarray], np.ndarray], name: str = ""):
        self._value = value
        self.name = name

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self._value(x), dtype=float)

    def __repr__(self):
        return f"AmbientMatrixField({self.name or 'anonymous'})"


# ---------------------------------------------------------------------------
# Constructors


def constant_scalar(c: float, name: str = "") -> AmbientScalarField:
    c = float(c)

    def value(x):
        return np.full(x.shape[:-1], c)

    def gradient(x):
        return np.zeros(x.shape)

    def hessian(x):
        return np.zeros(x.shape + (x.shape[-1],))

    return AmbientScalarField(value, gradient, hessian, name=name or f"const({c})")


def coordinate(i: int, name: str = "") -> AmbientScalarField:
    """The i-th ambient coordinate function (0-based)."""

    def value(x):
        return x[..., i]

    def gradient(x):
        g = np.zeros(x.shape)
        g[..., i] = 1.0
        return g

    def hessian(x):
        return np.zeros(x.shape + (x.shape[-1],))

    return AmbientScalarField(value, gradient, hessian, name=name or f"x{i + 1}")


def constant_vector(v, name: str = "") -> AmbientVectorField:
    v = np.asarray(v, dtype=float)

    def value(x):
        return np.broadcast_to(v, x.shape[:-1] + v.shape).copy()

    def jacobian(x):
        return np.zeros(x.shape + (x.shape[-1],))

    return AmbientVectorField(value, jacobian, name=name or "const-vector")


def position_field(name: str = "position") -> AmbientVectorField:
    def value(x):
        return x.copy()

    def jacobian(x):
        n = x.shape[-1]
        return np.broadcast_to(np.eye(n), x.shape + (n,)).copy()

    return AmbientVectorField(value, jacobian, name=name)


def rotation_field(axis=(0.0, 0.0, 1.0), name: str = "") -> AmbientVectorField:
    """The linear field x -> axis x x (a Killing field of any centred sphere)."""
    a = np.asarray(axis, dtype=float)

    def value(x):
        return np.cross(np.broadcast_to(a, x.shape), x)

    def jacobian(x):
        j = np.array(
            [[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]]
        )
        return np.broadcast_to(j, x.shape + (3,)).copy()

    return AmbientVectorField(value, jacobian, name=name or "rotation")


def identity_matrix(n: int = 3, scale: float = 1.0, name: str = "") -> AmbientMatrixField:
    m = scale * np.eye(n)

    def value(x):
        return np.broadcast_to(m, x.shape[:-1] + (n, n)).copy()

    return AmbientMatrixField(value, name=name or f"{scale}*I")


def matrix_from_scalars(entries, name: str = "") -> AmbientMatrixField:
    """Matrix field whose (i,j) entry is the given AmbientScalarField."""
    entries = [[e for e in row] for row in entries]
    n = len(entries)

    def value(x):
        out = np.empty(x.shape[:-1] + (n, n))
        for i in range(n):
            for j in range(n):
                out[..., i, j] = entries[i][j](x)
        return out

    return AmbientMatrixField(value, name=name or "matrix")


def identity_plus(scalar: AmbientScalarField, name: str = "") -> AmbientMatrixField:
    """The field x -> (1 + s(x)) * I, the 'identity plus' coefficient shorthand."""

    def value(x):
        n = x.shape[-1]
        s = scalar(x)
        out = np.zeros(x.shape[:-1] + (n, n))
        idx = np.arange(n)
        out[..., idx, idx] = (1.0 + s)[..., None]
        return out

    return AmbientMatrixField(value, name=name or f"I+{scalar.name}")


def transpose_matrix(A: AmbientMatrixField, name: str = "") -> AmbientMatrixField:
    def value(x):
        return np.swapaxes(A(x), -1, -2)

    return AmbientMatrixField(value, name=name or f"{A.name}^T")


def vector_from_scalars(components, name: str = "") -> AmbientVectorField:
    components = list(components)

    def value(x):
        out = np.empty(x.shape[:-1] + (len(components),))
        for i, c in enumerate(components):
            out[..., i] = c(x)
        return out

    def jacobian(x):
        n = x.shape[-1]
        out = np.empty(x.shape[:-1] + (len(components), n))
        for i, c in enumerate(components):
            out[..., i, :] = c.gradient(x)
        return out

    return AmbientVectorField(value, jacobian, name=name or "vector")
