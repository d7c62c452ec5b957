import math

import numpy as np
import pytest

from dyadicgp import kernel
from dyadicgp.grid import build_grid


def test_laplace_kernel_values():
    assert kernel.laplace_kernel(0.0, 0.5, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert kernel.laplace_kernel(1.0, 0.0, 2.0) == pytest.approx(math.exp(-2.0), abs=1e-15)
    assert kernel.laplace_kernel(0.3, 0.3, 5.0) == 1.0


def test_laplace_kernel_theta_validation():
    with pytest.raises(ValueError):
        kernel.laplace_kernel(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        kernel.laplace_kernel(0.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        kernel.laplace_kernel(0.0, 1.0, 101.0)
    with pytest.raises(ValueError):
        kernel.laplace_kernel(0.0, 1.0, float("nan"))


def test_factorization_matches_direct_form():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 64)
    y = rng.uniform(0, 1, 64)
    for theta in (0.5, 1.0, 3.7):
        f = kernel.GaussMarkovFactorization.laplace(theta)
        assert np.allclose(f(x, y), kernel.laplace_kernel(x, y, theta), atol=1e-15)
        # p increasing, q decreasing
        t = np.linspace(0, 1, 11)
        assert np.all(np.diff(f.p(t)) > 0)
        assert np.all(np.diff(f.q(t)) < 0)


def test_boundary_basis_frozen_values():
    # theta = 1 closed forms evaluated independently
    p01, p02 = kernel.boundary_basis(0.0, 1.0)
    assert p01 == pytest.approx(math.sqrt((1 + math.exp(-1)) / 2), abs=1e-14)
    assert p02 == pytest.approx(math.sqrt((1 - math.exp(-1)) / 2), abs=1e-14)
    assert p01 == pytest.approx(0.8270064815862819, abs=1e-12)
    assert p02 == pytest.approx(0.5621923864784002, abs=1e-12)
    # symmetry: psi01 even about 1/2, psi02 odd
    x = np.linspace(0, 1, 21)
    a1, a2 = kernel.boundary_basis(x, 1.3)
    b1, b2 = kernel.boundary_basis(1 - x, 1.3)
    assert np.allclose(a1, b1, atol=1e-15)
    assert np.allclose(a2, -b2, atol=1e-15)


def test_interior_basis_peak_and_support():
    # sqrt(2/sinh(1)) * sinh(0.5) at the peak of psi_{1,1}, theta = 1
    val = kernel.interior_basis(1, 1, 0.5, 1.0)
    assert val == pytest.approx(math.sqrt(2 / math.sinh(1)) * math.sinh(0.5), abs=1e-14)
    assert val == pytest.approx(0.6797919955839505, abs=1e-12)
    # identical to sqrt(tanh(theta * halfwidth)) at the peak
    for level, m, theta in ((2, 3, 0.7), (4, 5, 2.0), (6, 63, 1.1)):
        half = 2.0 ** (-level)
        peak = kernel.interior_basis(level, m, m * half, theta)
        assert peak == pytest.approx(math.sqrt(math.tanh(theta * half)), rel=1e-12)
    # zero outside [a, c] and at the edges
    assert kernel.interior_basis(2, 1, 0.75, 1.0) == 0.0
    assert kernel.interior_basis(2, 1, 0.0, 1.0) == 0.0
    assert kernel.interior_basis(2, 1, 0.5, 1.0) == 0.0
    assert kernel.interior_basis(1, 1, 0.0, 4.0) == 0.0


def test_interior_basis_validation():
    with pytest.raises(ValueError):
        kernel.interior_basis(1, 2, 0.5, 1.0)  # even m
    with pytest.raises(ValueError):
        kernel.interior_basis(2, 5, 0.5, 1.0)  # m > 2^l - 1
    with pytest.raises(ValueError):
        kernel.interior_basis(0, 1, 0.5, 1.0)
    with pytest.raises(ValueError):
        kernel.interior_basis(21, 1, 0.5, 1.0)


def test_template_coefficients_symmetric_value():
    # B = sqrt(coth(theta * delta)) for the symmetric template
    k = kernel.GaussMarkovFactorization.laplace(1.0)
    combo = kernel.template_coefficients(0.25, 0.5, 0.75, k)
    b = math.sqrt(1.0 / math.tanh(0.25))
    assert combo.coeffs[1] == pytest.approx(b, abs=1e-12)
    assert combo.coeffs[1] == pytest.approx(2.0206405333640114, abs=1e-12)
    # end coefficients equal and follow -B / (2 cosh(theta delta))
    assert combo.coeffs[0] == pytest.approx(combo.coeffs[2], abs=1e-13)
    assert combo.coeffs[0] == pytest.approx(-b / (2 * math.cosh(0.25)), abs=1e-12)


def test_template_combination_vanishes_at_outer_anchors():
    k = kernel.GaussMarkovFactorization.laplace(1.9)
    combo = kernel.template_coefficients(0.125, 0.25, 0.375, k)
    vals = combo.evaluate(np.array([0.125, 0.375]), k)
    assert np.max(np.abs(vals)) < 1e-12


def test_template_oracle_matches_closed_form():
    rng = np.random.default_rng(42)
    for _ in range(300):
        level = int(rng.integers(1, 9))
        m = 2 * int(rng.integers(0, 1 << (level - 1))) + 1
        theta = float(rng.uniform(0.1, 4.0))
        half = 2.0 ** (-level)
        k = kernel.GaussMarkovFactorization.laplace(theta)
        combo = kernel.template_coefficients((m - 1) * half, m * half, (m + 1) * half, k)
        # compare on the support, where the closed form is defined
        x = rng.uniform((m - 1) * half, (m + 1) * half, 8)
        assert np.allclose(
            combo.evaluate(x, k), kernel.interior_basis(level, m, x, theta), atol=1e-9
        )


def test_template_bad_anchors_and_singularity():
    k = kernel.GaussMarkovFactorization.laplace(1.0)
    with pytest.raises(ValueError):
        kernel.template_coefficients(0.5, 0.25, 0.75, k)
    # spacing far below kernel scale drives the 3x3 system ill-conditioned
    with pytest.raises(ValueError, match="singular"):
        kernel.template_coefficients(0.5, 0.5 + 1e-13, 0.5 + 2e-13, k)


def test_gram_identity_small():
    for depth in (1, 2, 3):
        grid = build_grid(depth)
        for theta in (0.5, 1.0, 2.0):
            combos = kernel.orthonormal_combinations(grid, theta)
            k = kernel.GaussMarkovFactorization.laplace(theta)
            gram = kernel.rkhs_gram(combos, k)
            assert np.max(np.abs(gram - np.eye(grid.size))) < 1e-10


def test_rkhs_gram_reproducing_property():
    # <k(., u), k(., v)> = k(u, v), checked through the same assembly path
    k = kernel.GaussMarkovFactorization.laplace(1.4)
    u, v = 0.2, 0.9
    combos = [
        kernel.KernelCombination(np.array([u]), np.array([1.0])),
        kernel.KernelCombination(np.array([v]), np.array([1.0])),
    ]
    gram = kernel.rkhs_gram(combos, k)
    assert gram[0, 1] == pytest.approx(math.exp(-1.4 * abs(u - v)), abs=1e-14)
    assert gram[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_nystrom_exact_on_inducing_points():
    grid = build_grid(4)
    pts = grid.points
    for theta in (0.5, 2.0):
        approx = kernel.nystrom_kernel(pts, pts[::-1], grid, theta)
        exact = kernel.laplace_kernel(pts, pts[::-1], theta)
        assert np.max(np.abs(approx - exact)) < 1e-10


def test_nystrom_shape_validation():
    grid = build_grid(2)
    with pytest.raises(ValueError):
        kernel.nystrom_kernel(np.zeros(3), np.zeros(4), grid, 1.0)


def test_boundary_derivative_finite_difference():
    h = 1e-7
    x = np.linspace(0.05, 0.95, 9)
    for theta in (0.6, 1.0, 3.0):
        d1, d2 = kernel.boundary_basis_derivative(x, theta)
        p1p, p2p = kernel.boundary_basis(x + h, theta)
        p1m, p2m = kernel.boundary_basis(x - h, theta)
        assert np.allclose(d1, (p1p - p1m) / (2 * h), atol=1e-6)
        assert np.allclose(d2, (p2p - p2m) / (2 * h), atol=1e-6)


def test_interior_derivative_finite_difference_and_edges():
    h = 1e-8
    rng = np.random.default_rng(3)
    for _ in range(40):
        level = int(rng.integers(1, 7))
        m = 2 * int(rng.integers(0, 1 << (level - 1))) + 1
        theta = float(rng.uniform(0.3, 3.0))
        half = 2.0 ** (-level)
        # stay inside one smooth piece, away from the kinks
        x = rng.uniform((m - 1) * half + 4 * h, m * half - 4 * h)
        an = kernel.interior_basis_derivative(level, m, x, theta)
        fd = (
            kernel.interior_basis(level, m, x + h, theta)
            - kernel.interior_basis(level, m, x - h, theta)
        ) / (2 * h)
        assert an == pytest.approx(fd, rel=2e-6)
    # right-hand conventions: slope at the peak comes from the falling piece,
    # at the left edge from the rising piece, at the right edge it is zero
    level, m, theta = 3, 3, 1.2
    half = 2.0 ** (-level)
    amp = math.sqrt(2 / math.sinh(2 * half * theta))
    at_peak = kernel.interior_basis_derivative(level, m, m * half, theta)
    assert at_peak == pytest.approx(-theta * amp * math.cosh(theta * half), rel=1e-12)
    at_left = kernel.interior_basis_derivative(level, m, (m - 1) * half, theta)
    assert at_left == pytest.approx(theta * amp, rel=1e-12)
    assert kernel.interior_basis_derivative(level, m, (m + 1) * half, theta) == 0.0
