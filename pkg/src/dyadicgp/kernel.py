"""Closed-form orthonormal basis of the Laplace-kernel RKHS on [0, 1].

The kernel k(x, y) = exp(-theta |x - y|) factorizes as p(min(x, y)) q(max(x, y))
with p(t) = exp(theta t) increasing and q(t) = exp(-theta t) decreasing.  On the
dyadic grid {0, 1} + {m 2^-l : m odd, 1 <= l <= L} the span of the functions
k(., u) has an orthonormal basis with one member per grid point:

    psi_01(x) = (e^{-theta x} + e^{-theta (1-x)}) / sqrt(2 (1 + e^{-theta}))
    psi_02(x) = (e^{-theta x} - e^{-theta (1-x)}) / sqrt(2 (1 - e^{-theta}))
    psi_lm(x) = sqrt(2 / sinh(2^{1-l} theta)) * sinh(theta (x - a))  on [a, b],
                mirrored around b on [b, c], zero outside [a, c],
                where (a, b, c) = (m-1, m, m+1) * 2^-l.

Every psi is also a three-point kernel combination A k(., a) + B k(., b) +
C k(., c).  `template_coefficients` recovers (A, B, C) for any Gauss-Markov
factorized kernel by solving the 3x3 system K3 (AB, B^2, BC)^T = e2; it is the
construction the closed forms above specialize, and serves as an independent
oracle for them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

THETA_MAX = 100.0
_COND_LIMIT = 1e12


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not np.isfinite(theta) or theta <= 0.0:
        raise ValueError(f"theta must be a positive finite scalar, got {theta!r}")
    if theta > THETA_MAX:
        raise ValueError(f"theta={theta} exceeds the supported maximum {THETA_MAX}")
    return theta


def laplace_kernel(x, y, theta: float):
    """Evaluate exp(-theta |x - y|) elementwise over broadcast arrays."""
    theta = _check_theta(theta)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(-theta * np.abs(x - y))


@dataclass(frozen=True)
class GaussMarkovFactorization:
    """Kernel of the form k(x, y) = p(min(x, y)) q(max(x, y)).

    p must be positive increasing and q positive decreasing on the domain; the
    quotient p/q is then increasing, which is what the basis construction
    relies on.  Laplace: p(t) = e^{theta t}, q(t) = e^{-theta t}.
    """

    p: Callable[[np.ndarray], np.ndarray]
    q: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lo = np.minimum(x, y)
        hi = np.maximum(x, y)
        return self.p(lo) * self.q(hi)

    @classmethod
    def laplace(cls, theta: float) -> "GaussMarkovFactorization":
        theta = _check_theta(theta)
        return cls(p=lambda t: np.exp(theta * t), q=lambda t: np.exp(-theta * t))


def boundary_basis(x, theta: float):
    """Values (psi_01, psi_02) of the two boundary basis functions at x."""
    theta = _check_theta(theta)
    x = np.asarray(x, dtype=float)
    e0 = np.exp(-theta * x)
    e1 = np.exp(-theta * (1.0 - x))
    n1 = np.sqrt(2.0 * (1.0 + np.exp(-theta)))
    n2 = np.sqrt(2.0 * (1.0 - np.exp(-theta)))
    return (e0 + e1) / n1, (e0 - e1) / n2


def boundary_basis_derivative(x, theta: float):
    """d/dx of (psi_01, psi_02) at x."""
    theta = _check_theta(theta)
    x = np.asarray(x, dtype=float)
    e0 = np.exp(-theta * x)
    e1 = np.exp(-theta * (1.0 - x))
    n1 = np.sqrt(2.0 * (1.0 + np.exp(-theta)))
    n2 = np.sqrt(2.0 * (1.0 - np.exp(-theta)))
    return theta * (e1 - e0) / n1, theta * (-e0 - e1) / n2


def _check_level_m(level, m) -> tuple[np.ndarray, np.ndarray]:
    level = np.asarray(level, dtype=np.int64)
    m = np.asarray(m, dtype=np.int64)
    if np.any(level < 1) or np.any(level > 20):
        raise ValueError("level must lie in 1..20")
    if np.any(m % 2 == 0) or np.any(m < 1) or np.any(m > (np.int64(1) << level) - 1):
        raise ValueError("m must be odd and within 1..2^level - 1")
    return level, m


def interior_basis(level, m, x, theta: float) -> np.ndarray:
    """Evaluate psi_{level, m} at x.  level, m, x broadcast together.

    This is the single evaluation path shared by the dense and the sparse
    feature assemblies, so scattering sparse activations reproduces dense
    activations bitwise.
    """
    theta = _check_theta(theta)
    level, m = _check_level_m(level, m)
    x = np.asarray(x, dtype=float)
    halfw = 2.0 ** (-level.astype(float))
    left = (m - 1) * halfw
    right = (m + 1) * halfw
    peak = m * halfw
    amp = np.sqrt(2.0 / np.sinh(2.0 ** (1.0 - level.astype(float)) * theta))
    inside = (x >= left) & (x <= right)
    arg = np.where(x <= peak, x - left, right - x)
    arg = np.where(inside, arg, 0.0)
    return np.where(inside, amp * np.sinh(theta * arg), 0.0)


def interior_basis_derivative(level, m, x, theta: float) -> np.ndarray:
    """Right-hand derivative of psi_{level, m} at x (piecewise cosh)."""
    theta = _check_theta(theta)
    level, m = _check_level_m(level, m)
    x = np.asarray(x, dtype=float)
    halfw = 2.0 ** (-level.astype(float))
    left = (m - 1) * halfw
    right = (m + 1) * halfw
    peak = m * halfw
    amp = np.sqrt(2.0 / np.sinh(2.0 ** (1.0 - level.astype(float)) * theta))
    inside = (x >= left) & (x < right)
    on_left = x < peak
    arg = np.where(on_left, x - left, right - x)
    arg = np.where(inside, arg, 0.0)
    slope = np.where(on_left, 1.0, -1.0) * theta * amp * np.cosh(theta * arg)
    return np.where(inside, slope, 0.0)


@dataclass(frozen=True)
class KernelCombination:
    """A function sum_i coeffs[i] * k(., anchors[i]) in the RKHS."""

    anchors: np.ndarray
    coeffs: np.ndarray

    def evaluate(self, x, kernel) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vals = kernel(x[..., None], self.anchors)
        return vals @ self.coeffs


def _solve3(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a symmetric 3x3 system by the adjugate formula."""
    a, b, c = mat[0]
    _, d, e = mat[1]
    f = mat[2, 2]
    cof = np.array(
        [
            [d * f - e * e, c * e - b * f, b * e - c * d],
            [c * e - b * f, a * f - c * c, b * c - a * e],
            [b * e - c * d, b * c - a * e, a * d - b * b],
        ]
    )
    det = a * cof[0, 0] + b * cof[0, 1] + c * cof[0, 2]
    eigs = np.linalg.eigvalsh(mat)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > _COND_LIMIT:
        raise ValueError(
            "template system is numerically singular "
            f"(eigenvalue range {eigs[0]:.3e}..{eigs[-1]:.3e}); "
            "anchor spacing is too small or too large for this kernel scale"
        )
    return cof @ rhs / det


def template_coefficients(a: float, b: float, c: float, kernel) -> KernelCombination:
    """Coefficients (A, B, C) of the unit-norm combination peaking at b.

    The combination phi = A k(., a) + B k(., b) + C k(., c) with phi(a) =
    phi(c) = 0, <phi, phi> = 1, B > 0 is fixed by K3 (AB, B^2, BC)^T = e2
    where K3 is the kernel matrix of (a, b, c).
    """
    if not (a < b < c):
        raise ValueError(f"anchors must be ordered a < b < c, got {(a, b, c)}")
    pts = np.array([a, b, c], dtype=float)
    k3 = kernel(pts[:, None], pts[None, :])
    u = _solve3(k3, np.array([0.0, 1.0, 0.0]))
    if u[1] <= 0.0:
        raise ValueError("template system produced a non-positive squared norm")
    bb = np.sqrt(u[1])
    return KernelCombination(anchors=pts, coeffs=np.array([u[0] / bb, bb, u[2] / bb]))


def orthonormal_combinations(grid, theta: float) -> list[KernelCombination]:
    """Kernel-combination form of the full basis for `grid`, in grid order.

    Boundary rows follow directly from the closed forms; interior rows use the
    analytic symmetric-template solution B = sqrt(coth(theta d)),
    A = C = -B / (2 cosh(theta d)) with d the half-width 2^-level.
    """
    theta = _check_theta(theta)
    n1 = np.sqrt(2.0 * (1.0 + np.exp(-theta)))
    n2 = np.sqrt(2.0 * (1.0 - np.exp(-theta)))
    out = [
        KernelCombination(np.array([0.0, 1.0]), np.array([1.0 / n1, 1.0 / n1])),
        KernelCombination(np.array([0.0, 1.0]), np.array([1.0 / n2, -1.0 / n2])),
    ]
    for level, m in zip(grid.interior_levels, grid.interior_ms):
        d = 2.0 ** (-float(level))
        bb = np.sqrt(1.0 / np.tanh(theta * d))
        aa = -bb / (2.0 * np.cosh(theta * d))
        anchors = np.array([(m - 1) * d, m * d, (m + 1) * d])
        out.append(KernelCombination(anchors, np.array([aa, bb, aa])))
    return out


def rkhs_gram(combinations: list[KernelCombination], kernel) -> np.ndarray:
    """Gram matrix of kernel combinations under the RKHS inner product.

    With each function written as rows of coefficients C over the union of
    anchor points, <f_i, f_j> = (C K C^T)_{ij} by the reproducing property.
    """
    anchors = np.unique(np.concatenate([comb.anchors for comb in combinations]))
    coeff = np.zeros((len(combinations), anchors.size))
    for i, comb in enumerate(combinations):
        idx = np.searchsorted(anchors, comb.anchors)
        np.add.at(coeff[i], idx, comb.coeffs)
    kmat = kernel(anchors[:, None], anchors[None, :])
    return coeff @ kmat @ coeff.T


def nystrom_kernel(x, y, grid, theta: float) -> np.ndarray:
    """Evaluate k(x, U) K(U, U)^-1 K(U, y) for paired x, y arrays.

    Equals sum_k psi_k(x) psi_k(y) when the psi are an orthonormal basis of
    span{k(., u) : u in U}, which is what the basis tests exploit.
    """
    theta = _check_theta(theta)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError("x and y must have matching shapes")
    pts = grid.points
    kuu = laplace_kernel(pts[:, None], pts[None, :], theta)
    kxu = laplace_kernel(x[:, None], pts[None, :], theta)
    kuy = laplace_kernel(pts[:, None], y[None, :], theta)
    try:
        sol = np.linalg.solve(kuu, kuy)
    except np.linalg.LinAlgError as err:
        raise ValueError(f"inducing-point kernel matrix is singular: {err}") from err
    return np.einsum("ij,ji->i", kxu, sol)
