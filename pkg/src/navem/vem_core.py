"""Classical lowest-order virtual element method for the Poisson problem.

Local spaces are spanned by harmonic functions with piecewise-linear
boundary traces, known only through their vertex values; everything
computable goes through the gradient projector onto linear polynomials.
The discrete bilinear form is the standard consistency-plus-stabilization
split with the dofi-dofi stabilization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import SolverError
from .geometry import Polygon, PolygonalMesh, quadrature_on_polygon

__all__ = [
    "ElementProjection",
    "local_matrices",
    "project_nabla",
    "solve_poisson_vem",
    "vem_errors",
]

DEFAULT_QUAD_DEGREE = 12


@dataclass(frozen=True)
class ElementProjection:
    """Projection data of one element.

    ``coeffs[:, i]`` expresses the projected i-th hat function in the
    scaled monomial basis ``{1, (x - xc)/h, (y - yc)/h}``; ``dof_matrix``
    is the same projector written dof-to-dof. The local stiffness is the
    consistency part plus the dofi-dofi stabilization.
    """

    element_id: int
    coeffs: np.ndarray
    dof_matrix: np.ndarray
    consistency: np.ndarray
    stabilization: np.ndarray
    stiffness: np.ndarray
    p0_values: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.dof_matrix.shape[0]


def _monomial_values(poly: Polygon, points: np.ndarray) -> np.ndarray:
    xc, yc = poly.centroid
    h = poly.diameter
    pts = np.atleast_2d(points)
    return np.column_stack(
        [np.ones(len(pts)), (pts[:, 0] - xc) / h, (pts[:, 1] - yc) / h]
    )


def project_nabla(poly: Polygon) -> np.ndarray:
    """Gradient projector onto linears, in the scaled monomial basis.

    Built from the boundary formula: the gradient moments of a virtual
    function reduce to edge integrals of its piecewise-linear trace, which
    trapezoid rules integrate exactly; the kernel constant is fixed by
    matching boundary means. Returns the ``(3, n)`` coefficient matrix.
    """
    n = poly.n_vertices
    h = poly.diameter
    lengths = poly.edge_lengths
    normals = poly.edge_normals
    vertex_monomials = _monomial_values(poly, poly.vertices)  # (n, 3)

    # lhs: boundary-mean row plus gradient rows
    g = np.zeros((3, 3))
    edge_sums = vertex_monomials + np.roll(vertex_monomials, -1, axis=0)
    g[0] = 0.5 * lengths @ edge_sums
    g[1, 1] = g[2, 2] = poly.area / h**2

    # rhs: same functionals applied to the hats; a hat integrates to
    # |e|/2 on each incident edge and the monomial gradients are constant
    b = np.zeros((3, n))
    b[0] = 0.5 * (lengths + np.roll(lengths, 1))
    edge_flux = 0.5 * lengths[:, None] * normals / h  # (n, 2) per edge
    b[1:] = (edge_flux + np.roll(edge_flux, 1, axis=0)).T
    return np.linalg.solve(g, b)


def local_matrices(poly: Polygon, element_id: int = -1) -> ElementProjection:
    """Complete local VEM data: projector, consistency, stabilization."""
    n = poly.n_vertices
    h = poly.diameter
    coeffs = project_nabla(poly)
    dof_matrix = _monomial_values(poly, poly.vertices) @ coeffs

    mono_stiffness = np.zeros((3, 3))
    mono_stiffness[1, 1] = mono_stiffness[2, 2] = poly.area / h**2
    consistency = coeffs.T @ mono_stiffness @ coeffs
    residual = np.eye(n) - dof_matrix
    stabilization = residual.T @ residual
    return ElementProjection(
        element_id=element_id,
        coeffs=coeffs,
        dof_matrix=dof_matrix,
        consistency=consistency,
        stabilization=stabilization,
        stiffness=consistency + stabilization,
        p0_values=coeffs[0].copy(),
    )


def assemble_poisson(mesh: PolygonalMesh, f, quad_degree: int = DEFAULT_QUAD_DEGREE):
    """Global stiffness and load vector for the Poisson problem.

    The load pairs the source with the elementwise-constant projection of
    each hat, so only ``integral of f`` per element is needed.
    """
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    for e in range(mesh.n_elements):
        poly = mesh.element_polygon(e)
        local = local_matrices(poly, e)
        idx = mesh.elements[e]
        pts, w = quadrature_on_polygon(poly, quad_degree)
        f_integral = float(w @ np.asarray(f(pts), dtype=float))
        for a, ia in enumerate(idx):
            rhs[ia] += local.p0_values[a] * f_integral
            for bb, ib in enumerate(idx):
                rows.append(ia)
                cols.append(ib)
                vals.append(local.stiffness[a, bb])
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return matrix, rhs


def eliminate_dirichlet(matrix, rhs, boundary_mask, boundary_values):
    """Row elimination: boundary dofs pinned, couplings moved to the rhs."""
    n = matrix.shape[0]
    interior = ~boundary_mask
    u = np.zeros(n)
    u[boundary_mask] = boundary_values
    reduced_rhs = rhs[interior] - matrix[interior][:, boundary_mask] @ boundary_values
    reduced = matrix[interior][:, interior]
    return reduced.tocsc(), reduced_rhs, u, interior


def solve_poisson_vem(
    mesh: PolygonalMesh, f, g_dirichlet, quad_degree: int = DEFAULT_QUAD_DEGREE
) -> np.ndarray:
    """Vertex dof values of the stabilized discrete Poisson problem."""
    matrix, rhs = assemble_poisson(mesh, f, quad_degree)
    boundary_values = np.asarray(
        g_dirichlet(mesh.vertices[mesh.boundary]), dtype=float
    )
    reduced, reduced_rhs, u, interior = eliminate_dirichlet(
        matrix, rhs, mesh.boundary, boundary_values
    )
    solution = spsolve(reduced, reduced_rhs)
    if not np.all(np.isfinite(solution)):
        raise SolverError("sparse solve returned non-finite values")
    residual = reduced @ solution - reduced_rhs
    scale = max(float(np.max(np.abs(reduced_rhs))), 1e-300)
    if np.max(np.abs(residual)) / scale > 1e-10:
        raise SolverError("poisson system residual too large; singular system?")
    u[interior] = solution
    return u


def vem_errors(
    mesh: PolygonalMesh,
    dofs: np.ndarray,
    u_exact,
    grad_u_exact,
    quad_degree: int = DEFAULT_QUAD_DEGREE,
):
    """L2 and H1-seminorm errors measured through the projected solution.

    The discrete function itself is virtual, so both errors compare the
    exact solution against its elementwise gradient-projection, the
    computable first-degree surrogate at this order.
    """
    err2_sq = 0.0
    err1_sq = 0.0
    for e in range(mesh.n_elements):
        poly = mesh.element_polygon(e)
        local_dofs = dofs[mesh.elements[e]]
        coeffs = project_nabla(poly) @ local_dofs  # (3,)
        pts, w = quadrature_on_polygon(poly, quad_degree)
        values = _monomial_values(poly, pts) @ coeffs
        grad = np.array([coeffs[1], coeffs[2]]) / poly.diameter
        diff_val = np.asarray(u_exact(pts), dtype=float) - values
        diff_grad = np.asarray(grad_u_exact(pts), dtype=float) - grad[None, :]
        err2_sq += float(w @ diff_val**2)
        err1_sq += float(w @ (diff_grad**2).sum(axis=1))
    return np.sqrt(err2_sq), np.sqrt(err1_sq)
