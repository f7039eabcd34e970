"""Online phase: predicted element bases, ADR assembly, solve, errors.

For each element the network predicts, per vertex, the coefficients of a
harmonic polynomial approximating that vertex's hat function. Everything
downstream is plain FEM machinery: the basis functions are explicit, so
bilinear forms are integrated directly with polygon quadrature and no
projection or stabilization enters. Discrete functions are only
approximately continuous across edges; the mismatch is measured and
reported, never hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ModelMismatchError, SolverError
from .geometry import Polygon, PolygonalMesh, quadrature_on_polygon
from .trainer import NavemModel, canonicalize_element
from .vem_core import eliminate_dirichlet

__all__ = [
    "ElementBasisEval",
    "assemble_adr",
    "conformity_defect",
    "navem_errors",
    "partition_of_unity_defect",
    "predict_element_basis",
    "predict_mesh_bases",
    "solve",
    "solve_adr",
]

DEFAULT_QUAD_DEGREE = 12


@dataclass
class ElementBasisEval:
    """Evaluators for the predicted basis functions of one element.

    ``coefficients[j]`` expands the function of local vertex ``j`` in the
    reference basis; ``maps[j]`` is the similarity from the element to the
    canonical frame of that vertex. Gradients follow the similarity chain
    rule: a factor of the map scale and the transposed rotation.
    """

    element_id: int
    basis: object
    coefficients: np.ndarray
    maps: list

    @property
    def n_vertices(self) -> int:
        return len(self.maps)

    def values(self, points: np.ndarray) -> np.ndarray:
        """Matrix ``(n_points, n_vertices)`` of basis-function values."""
        pts = np.atleast_2d(points)
        out = np.empty((len(pts), self.n_vertices))
        for j, mapping in enumerate(self.maps):
            ref = self.basis.evaluate(mapping.apply(pts))
            out[:, j] = ref @ self.coefficients[j]
        return out

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Array ``(n_points, n_vertices, 2)`` of spatial gradients."""
        pts = np.atleast_2d(points)
        out = np.empty((len(pts), self.n_vertices, 2))
        for j, mapping in enumerate(self.maps):
            gx, gy = self.basis.evaluate_gradient(mapping.apply(pts))
            ref_grad = np.stack(
                [gx @ self.coefficients[j], gy @ self.coefficients[j]], axis=1
            )
            out[:, j, :] = mapping.scale * ref_grad @ mapping.rotation
        return out


def predict_element_basis(
    poly: Polygon, model: NavemModel, element_id: int = -1
) -> ElementBasisEval:
    """One network pass per vertex, bundled into element evaluators."""
    if poly.n_vertices != model.n_vertices:
        raise ModelMismatchError(
            f"element has {poly.n_vertices} vertices, model expects "
            f"{model.n_vertices}"
        )
    encodings = []
    maps = []
    for j in range(poly.n_vertices):
        _, composed, encoding = canonicalize_element(
            poly, j, model.basis.square_diameter
        )
        encodings.append(encoding)
        maps.append(composed)
    coefficients = np.atleast_2d(model.predict_coefficients(np.array(encodings)))
    return ElementBasisEval(element_id, model.basis, coefficients, maps)


def predict_mesh_bases(mesh: PolygonalMesh, model: NavemModel) -> list:
    """Predicted bases for every element, cached for reuse."""
    return [
        predict_element_basis(mesh.element_polygon(e), model, e)
        for e in range(mesh.n_elements)
    ]


def partition_of_unity_defect(
    element_eval: ElementBasisEval, points: np.ndarray
) -> float:
    """Max deviation of the predicted functions from summing to one."""
    return float(np.max(np.abs(element_eval.values(points).sum(axis=1) - 1.0)))


def _check_spd(diffusion_values: np.ndarray, element_id: int):
    trace = diffusion_values[:, 0, 0] + diffusion_values[:, 1, 1]
    det = (
        diffusion_values[:, 0, 0] * diffusion_values[:, 1, 1]
        - diffusion_values[:, 0, 1] * diffusion_values[:, 1, 0]
    )
    asym = np.abs(diffusion_values[:, 0, 1] - diffusion_values[:, 1, 0])
    if np.any(asym > 1e-12) or np.any(det <= 0) or np.any(trace <= 0):
        raise SolverError(
            f"diffusion tensor not symmetric positive definite on element "
            f"{element_id}"
        )


def assemble_adr(
    mesh: PolygonalMesh,
    model: NavemModel,
    problem,
    quad_degree: int = DEFAULT_QUAD_DEGREE,
    element_bases: list | None = None,
):
    """Global system of the advection-diffusion-reaction discretization.

    Entries are direct polygon-quadrature integrals of the predicted
    basis functions:
    ``K[i, j] = sum_E int_E (D grad phi_j) . grad phi_i
    + (beta . grad phi_j) phi_i + gamma phi_j phi_i`` and
    ``rhs[i] = sum_E int_E f phi_i``. Returns ``(matrix, rhs, bases)``.
    """
    if element_bases is None:
        element_bases = predict_mesh_bases(mesh, model)
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    for e in range(mesh.n_elements):
        poly = mesh.element_polygon(e)
        idx = mesh.elements[e]
        pts, w = quadrature_on_polygon(poly, quad_degree)
        basis_eval = element_bases[e]
        phi = basis_eval.values(pts)
        grad = basis_eval.gradients(pts)

        d_vals = np.asarray(problem.diffusion(pts), dtype=float)
        _check_spd(d_vals, e)
        b_vals = np.asarray(problem.advection(pts), dtype=float)
        g_vals = np.asarray(problem.reaction(pts), dtype=float)
        f_vals = np.asarray(problem.source(pts), dtype=float)

        flux = np.einsum("qcd,qjd->qjc", d_vals, grad)
        local = np.einsum("q,qic,qjc->ij", w, grad, flux)
        local += np.einsum("q,qi,qj->ij", w, phi, np.einsum("qd,qjd->qj", b_vals, grad))
        local += np.einsum("q,q,qi,qj->ij", w, g_vals, phi, phi)
        local_rhs = np.einsum("q,q,qi->i", w, f_vals, phi)

        for a, ia in enumerate(idx):
            rhs[ia] += local_rhs[a]
            for b, ib in enumerate(idx):
                rows.append(ia)
                cols.append(ib)
                vals.append(local[a, b])
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return matrix, rhs, element_bases


def solve(matrix, rhs, mesh: PolygonalMesh, g_dirichlet) -> np.ndarray:
    """Impose Dirichlet data by elimination and solve the sparse system."""
    boundary_values = np.asarray(
        g_dirichlet(mesh.vertices[mesh.boundary]), dtype=float
    )
    reduced, reduced_rhs, u, interior = eliminate_dirichlet(
        matrix, rhs, mesh.boundary, boundary_values
    )
    try:
        solution = spsolve(reduced, reduced_rhs)
    except RuntimeError as exc:  # pragma: no cover - SuperLU failure path
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    if not np.all(np.isfinite(solution)):
        raise SolverError("sparse solve returned non-finite values")
    residual = np.max(np.abs(reduced @ solution - reduced_rhs))
    scale = max(float(np.max(np.abs(reduced_rhs))), 1e-300)
    if residual / scale > 1e-10:
        raise SolverError(
            f"linear-system residual {residual / scale:.2e} exceeds 1e-10"
        )
    u[interior] = solution
    return u


def solve_adr(
    mesh: PolygonalMesh,
    model: NavemModel,
    problem,
    quad_degree: int = DEFAULT_QUAD_DEGREE,
):
    """Assemble and solve; returns ``(dofs, element_bases)``."""
    matrix, rhs, element_bases = assemble_adr(mesh, model, problem, quad_degree)
    dofs = solve(matrix, rhs, mesh, problem.dirichlet)
    return dofs, element_bases


def navem_errors(
    mesh: PolygonalMesh,
    dofs: np.ndarray,
    model: NavemModel,
    u_exact,
    grad_u_exact,
    quad_degree: int = DEFAULT_QUAD_DEGREE,
    element_bases: list | None = None,
):
    """L2 and H1-seminorm errors via direct quadrature of the discrete
    solution (the basis functions are pointwise evaluable, no projection)."""
    if element_bases is None:
        element_bases = predict_mesh_bases(mesh, model)
    err2_sq = 0.0
    err1_sq = 0.0
    for e in range(mesh.n_elements):
        poly = mesh.element_polygon(e)
        local_dofs = dofs[mesh.elements[e]]
        pts, w = quadrature_on_polygon(poly, quad_degree)
        u_h = element_bases[e].values(pts) @ local_dofs
        grad_h = np.einsum("qjd,j->qd", element_bases[e].gradients(pts), local_dofs)
        diff_val = np.asarray(u_exact(pts), dtype=float) - u_h
        diff_grad = np.asarray(grad_u_exact(pts), dtype=float) - grad_h
        err2_sq += float(w @ diff_val**2)
        err1_sq += float(w @ (diff_grad**2).sum(axis=1))
    return np.sqrt(err2_sq), np.sqrt(err1_sq)


def conformity_defect(
    mesh: PolygonalMesh,
    dofs: np.ndarray,
    element_bases: list,
    samples_per_edge: int = 10,
) -> float:
    """Largest interelement mismatch of the discrete solution.

    Samples each interior edge away from its endpoints and compares the
    two one-sided evaluations; exact for conforming spaces, small but
    nonzero here because traces are learned.
    """
    defect = 0.0
    params = (np.arange(samples_per_edge) + 0.5) / samples_per_edge
    for (i, j), elems in mesh.edge_incidence().items():
        if len(elems) != 2:
            continue
        a, b = mesh.vertices[i], mesh.vertices[j]
        pts = a[None, :] + params[:, None] * (b - a)[None, :]
        one_sided = []
        for e in elems:
            local = dofs[mesh.elements[e]]
            one_sided.append(element_bases[e].values(pts) @ local)
        defect = max(defect, float(np.max(np.abs(one_sided[0] - one_sided[1]))))
    return defect
