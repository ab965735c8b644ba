"""Squared-exponential covariance function and its exact mixed derivatives.

The kernel is stationary,

    k(x, x') = variance * exp(-(x - x')**2 / (2 * length_scale**2)),

so every mixed partial d^a/dx^a d^b/dx'^b k reduces to an ordinary
derivative of the radial profile g(r) = variance * exp(-r**2 / (2 l**2))
evaluated at r = x - x':

    d^a/dx^a d^b/dx'^b k(x, x') = (-1)**b * g^(a+b)(x - x').

The profile derivatives follow the closed two-term recurrence

    g^(n)(r) = -(r * g^(n-1)(r) + (n - 1) * g^(n-2)(r)) / l**2,

seeded by g and g' = -(r / l**2) g.  This is exact (no finite differences,
no symbolic engine) and cheap enough to evaluate on full Gram grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Per-argument derivative cap.  Fourth-order operators applied to both
# kernel arguments need g^(8) at most; higher orders are untested.
MAX_DERIV_ORDER = 4


class UnsupportedOrderError(ValueError):
    """A requested kernel derivative order exceeds the supported cap."""


@dataclass(frozen=True)
class KernelSpec:
    """Hyperparameters of the squared-exponential covariance.

    ``variance`` is the signal variance (k(x, x) == variance) and
    ``length_scale`` the correlation length, both strictly positive.
    """

    variance: float
    length_scale: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")
        if not self.length_scale > 0:
            raise ValueError(
                f"length_scale must be positive, got {self.length_scale}"
            )


@dataclass(frozen=True)
class DerivOrders:
    """Derivative orders (a, b) in the first and second kernel argument."""

    a: int
    b: int

    def __post_init__(self):
        for name, order in (("a", self.a), ("b", self.b)):
            if int(order) != order or order < 0 or order > MAX_DERIV_ORDER:
                raise UnsupportedOrderError(
                    f"derivative order {name}={order} outside 0..{MAX_DERIV_ORDER}"
                )


def radial_profile_derivatives(spec: KernelSpec, n_max: int, r) -> np.ndarray:
    """Stack g^(0..n_max) of the radial profile, evaluated elementwise on r.

    Returns an array of shape (n_max + 1,) + r.shape.  ``n_max`` may go up
    to 2 * MAX_DERIV_ORDER (both arguments differentiated at the cap).
    """
    if int(n_max) != n_max or n_max < 0 or n_max > 2 * MAX_DERIV_ORDER:
        raise UnsupportedOrderError(
            f"total derivative order {n_max} outside 0..{2 * MAX_DERIV_ORDER}"
        )
    r = np.asarray(r, dtype=float)
    inv_l2 = 1.0 / (spec.length_scale * spec.length_scale)
    out = np.empty((n_max + 1,) + r.shape, dtype=float)
    out[0] = spec.variance * np.exp(-0.5 * inv_l2 * r * r)
    if n_max >= 1:
        out[1] = -inv_l2 * r * out[0]
    for n in range(2, n_max + 1):
        out[n] = -inv_l2 * (r * out[n - 1] + (n - 1) * out[n - 2])
    return out


def eval_kernel(spec: KernelSpec, x, x2):
    """Evaluate k(x, x2); symmetric in its arguments, broadcasts like numpy."""
    r = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    val = spec.variance * np.exp(-0.5 * (r * r) / spec.length_scale**2)
    return val if isinstance(val, np.ndarray) and val.ndim else float(val)


def kernel_mixed_derivative(spec: KernelSpec, orders, x, x2):
    """Evaluate d^a/dx^a d^b/dx2^b k(x, x2).

    ``orders`` is a DerivOrders or an (a, b) pair.  Scalar inputs give a
    float; array inputs broadcast.
    """
    if not isinstance(orders, DerivOrders):
        orders = DerivOrders(*orders)
    r = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    total = orders.a + orders.b
    g = radial_profile_derivatives(spec, total, r)[total]
    val = g if orders.b % 2 == 0 else -g
    return val if isinstance(val, np.ndarray) and val.ndim else float(val)


def gram(spec: KernelSpec, orders, X, X2) -> np.ndarray:
    """Matrix of kernel_mixed_derivative over all pairs of grid points.

    Entry (i, j) is the mixed derivative at (X[i], X2[j]).  For orders
    (0, 0) and X == X2 the result is symmetric positive semidefinite up
    to round-off.
    """
    X = np.atleast_1d(np.asarray(X, dtype=float))
    X2 = np.atleast_1d(np.asarray(X2, dtype=float))
    if X.size == 0 or X2.size == 0:
        raise ValueError("gram grids must be nonempty")
    return np.asarray(
        kernel_mixed_derivative(spec, orders, X[:, None], X2[None, :])
    )
