"""Orthonormalized harmonic-polynomial bases on a reference square.

The raw basis is ``{1, Re(w^k), Im(w^k), k = 1..degree}`` with
``w = (x + i y) / s`` and ``s`` the diameter of the reference square; it
spans the harmonic polynomials of degree up to ``degree`` (dimension
``2*degree + 1``) and every member has an identically zero Laplacian. The
working basis orthonormalizes these monomials against a uniform lattice
over the square, which keeps Vandermonde matrices well conditioned for all
elements mapped into the square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import GeometryError

__all__ = [
    "HarmonicBasis",
    "ScaledHarmonicMonomials",
    "build_monomials",
    "lattice_points",
    "monomial_coefficient_array",
    "orthonormalize",
    "polynomial_laplacian",
]


@dataclass(frozen=True)
class ScaledHarmonicMonomials:
    """Scaled harmonic monomial family of a given degree.

    Members are ordered ``[1, Re w, Im w, Re w^2, Im w^2, ...]``.
    """

    degree: int
    square_diameter: float

    def __post_init__(self):
        if self.degree < 1:
            raise GeometryError(f"degree must be >= 1, got {self.degree}")
        if self.square_diameter <= 0:
            raise GeometryError("square diameter must be positive")

    @property
    def count(self) -> int:
        return 2 * self.degree + 1

    def _powers(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = (pts[:, 0] + 1j * pts[:, 1]) / self.square_diameter
        powers = np.empty((self.degree + 1, len(pts)), dtype=complex)
        powers[0] = 1.0
        for k in range(1, self.degree + 1):
            powers[k] = powers[k - 1] * w
        return powers

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values ``V[i, a] = m_a(x_i)``, shape ``(n_points, count)``."""
        powers = self._powers(points)
        cols = [np.ones(powers.shape[1])]
        for k in range(1, self.degree + 1):
            cols.append(powers[k].real)
            cols.append(powers[k].imag)
        return np.column_stack(cols)

    def evaluate_gradient(self, points: np.ndarray):
        """Pair ``(d/dx1, d/dx2)`` of value matrices."""
        powers = self._powers(points)
        n = powers.shape[1]
        gx = [np.zeros(n)]
        gy = [np.zeros(n)]
        for k in range(1, self.degree + 1):
            factor = k / self.square_diameter
            prev = powers[k - 1]
            gx.append(factor * prev.real)
            gy.append(-factor * prev.imag)
            gx.append(factor * prev.imag)
            gy.append(factor * prev.real)
        return np.column_stack(gx), np.column_stack(gy)


def build_monomials(degree: int, square_diameter: float) -> ScaledHarmonicMonomials:
    return ScaledHarmonicMonomials(degree, square_diameter)


def monomial_coefficient_array(degree: int, member: int) -> np.ndarray:
    """Exact integer coefficients of one (unscaled) member over ``x^a y^b``.

    ``array[a, b]`` multiplies ``x^a y^b``; the physical member carries an
    extra ``square_diameter**-k`` factor that does not affect harmonicity.
    """
    size = degree + 1
    coeffs = np.zeros((size + 2, size + 2), dtype=np.int64)
    if member == 0:
        coeffs[0, 0] = 1
        return coeffs
    k = (member + 1) // 2
    is_real_part = member % 2 == 1
    for j in range(k + 1):
        if is_real_part and j % 2 == 0:
            coeffs[k - j, j] = (-1) ** (j // 2) * math.comb(k, j)
        elif not is_real_part and j % 2 == 1:
            coeffs[k - j, j] = (-1) ** ((j - 1) // 2) * math.comb(k, j)
    return coeffs


def polynomial_laplacian(coeffs: np.ndarray) -> np.ndarray:
    """Coefficient array of the Laplacian of a coefficient array."""
    out = np.zeros_like(coeffs)
    n_a, n_b = coeffs.shape
    for a in range(n_a - 2):
        for b in range(n_b - 2):
            out[a, b] = (a + 2) * (a + 1) * coeffs[a + 2, b] + (b + 2) * (
                b + 1
            ) * coeffs[a, b + 2]
    return out


def lattice_points(square_diameter: float, lattice_n: int):
    """Uniform ``(lattice_n + 1)^2`` lattice over the reference square and
    the equal cell weight attached to each node."""
    side = square_diameter / math.sqrt(2.0)
    ticks = np.linspace(-0.5 * side, 0.5 * side, lattice_n + 1)
    xx, yy = np.meshgrid(ticks, ticks, indexing="xy")
    weight = (side / lattice_n) ** 2
    return np.column_stack([xx.ravel(), yy.ravel()]), weight


def _modified_gram_schmidt(matrix: np.ndarray):
    """One MGS sweep, returning ``Q, R`` with ``matrix = Q R``."""
    v = matrix.copy()
    n = v.shape[1]
    r = np.zeros((n, n))
    for j in range(n):
        for i in range(j):
            r[i, j] = v[:, i] @ v[:, j]
            v[:, j] -= r[i, j] * v[:, i]
        r[j, j] = np.linalg.norm(v[:, j])
        if r[j, j] == 0.0:
            raise GeometryError("rank-deficient Vandermonde in Gram-Schmidt")
        v[:, j] /= r[j, j]
    return v, r


@dataclass(frozen=True)
class HarmonicBasis:
    """Orthonormal harmonic basis ``p_b = sum_a coeffs[b, a] * m_a``.

    The coefficient matrix is produced by two modified Gram-Schmidt sweeps
    over the lattice Vandermonde matrix of the scaled monomials, so the
    discrete Gram matrix on that lattice is the identity.
    """

    monomials: ScaledHarmonicMonomials
    coeffs: np.ndarray
    lattice_n: int

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        n = self.monomials.count
        if coeffs.shape != (n, n):
            raise GeometryError(f"coefficient matrix must be {(n, n)}")
        object.__setattr__(self, "coeffs", coeffs)
        coeffs.setflags(write=False)

    @property
    def degree(self) -> int:
        return self.monomials.degree

    @property
    def square_diameter(self) -> float:
        return self.monomials.square_diameter

    @property
    def count(self) -> int:
        return self.monomials.count

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values ``V[i, b] = p_b(x_i)``."""
        return self.monomials.evaluate(points) @ self.coeffs.T

    def evaluate_gradient(self, points: np.ndarray):
        """Pair of matrices ``(dV/dx1, dV/dx2)``."""
        gx, gy = self.monomials.evaluate_gradient(points)
        return gx @ self.coeffs.T, gy @ self.coeffs.T

    def tangential_derivative(self, points: np.ndarray, tangents: np.ndarray):
        """Directional derivatives ``t . grad p_b`` per point."""
        gx, gy = self.evaluate_gradient(points)
        t = np.atleast_2d(np.asarray(tangents, dtype=float))
        return gx * t[:, :1] + gy * t[:, 1:]


def orthonormalize(
    monomials: ScaledHarmonicMonomials, lattice_n: int = 40
) -> HarmonicBasis:
    """Orthonormalize the monomials against the lattice inner product.

    Runs modified Gram-Schmidt twice (one sweep leaves too much residual
    non-orthogonality at degree 5) and converts the combined triangular
    factor into a change-of-basis matrix.
    """
    if lattice_n**2 < 4 * monomials.count:
        raise GeometryError(
            f"lattice_n={lattice_n} too coarse for {monomials.count} functions"
        )
    points, weight = lattice_points(monomials.square_diameter, lattice_n)
    vandermonde = monomials.evaluate(points) * math.sqrt(weight)
    q1, r1 = _modified_gram_schmidt(vandermonde)
    _, r2 = _modified_gram_schmidt(q1)
    r = r2 @ r1
    diag = np.abs(np.diag(r))
    if diag.max() / diag.min() > 1e12:
        raise GeometryError("basis degeneracy: triangular factor nearly singular")
    coeffs = solve_triangular(r, np.eye(monomials.count), lower=False).T
    return HarmonicBasis(monomials, coeffs, lattice_n)
