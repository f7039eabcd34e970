"""Independent reference computations used to check the package.

Nothing in here calls into ``navem`` numerics: polygon integrals go through
Green's theorem on the edges, derivatives through central differences, and
stiffness matrices through textbook P1 finite elements.
"""

import math

import numpy as np


def monomial_integral(vertices, a: int, b: int) -> float:
    """Exact ``int_E x^a y^b dA`` over a simple CCW polygon.

    Green's theorem with F = (x^(a+1) y^b / (a+1), 0): the area integral
    equals ``sum_e dy_e/(a+1) * int_0^1 x(t)^(a+1) y(t)^b dt`` with each
    edge parametrized linearly; the 1D integrals are done with a
    Gauss-Legendre rule of sufficient order.
    """
    verts = np.asarray(vertices, dtype=float)
    n_gauss = (a + b + 2) // 2 + 2
    t, w = np.polynomial.legendre.leggauss(n_gauss)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    total = 0.0
    for i in range(len(verts)):
        p, q = verts[i], verts[(i + 1) % len(verts)]
        x = p[0] + t * (q[0] - p[0])
        y = p[1] + t * (q[1] - p[1])
        total += (q[1] - p[1]) / (a + 1) * np.sum(w * x ** (a + 1) * y**b)
    return float(total)


def polynomial_integral(vertices, coeffs: dict) -> float:
    """Integral of ``sum c_{ab} x^a y^b`` given as ``{(a, b): c}``."""
    return sum(c * monomial_integral(vertices, a, b) for (a, b), c in coeffs.items())


def shoelace_area(vertices) -> float:
    verts = np.asarray(vertices, dtype=float)
    nxt = np.roll(verts, -1, axis=0)
    return 0.5 * float(np.sum(verts[:, 0] * nxt[:, 1] - nxt[:, 0] * verts[:, 1]))


def second_moments(vertices):
    """Centroid and inertia tensor about it, from Green's-theorem integrals."""
    area = monomial_integral(vertices, 0, 0)
    cx = monomial_integral(vertices, 1, 0) / area
    cy = monomial_integral(vertices, 0, 1) / area
    jxx = monomial_integral(vertices, 2, 0) - area * cx * cx
    jxy = monomial_integral(vertices, 1, 1) - area * cx * cy
    jyy = monomial_integral(vertices, 0, 2) - area * cy * cy
    return np.array([cx, cy]), np.array([[jxx, jxy], [jxy, jyy]])


def central_gradient(f, x, step=1e-6):
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return grad


def central_gradient_2d(f, point, step=1e-6):
    """Central-difference spatial gradient of ``f((x, y))``."""
    x, y = point
    return np.array(
        [
            (f((x + step, y)) - f((x - step, y))) / (2.0 * step),
            (f((x, y + step)) - f((x, y - step))) / (2.0 * step),
        ]
    )


def p1_triangle_stiffness(tri_vertices) -> np.ndarray:
    """Exact 3x3 P1 FEM stiffness of the unit Laplacian on one triangle."""
    v = np.asarray(tri_vertices, dtype=float)
    area = shoelace_area(v)
    grads = np.empty((3, 2))
    for i in range(3):
        opp = v[(i + 2) % 3] - v[(i + 1) % 3]
        grads[i] = np.array([-opp[1], opp[0]]) / (2.0 * area)
    return area * grads @ grads.T


def p1_fem_system(vertices, triangles, diffusion=None):
    """Assemble the global P1 stiffness for the unit Laplacian (dense)."""
    n = len(vertices)
    K = np.zeros((n, n))
    for tri in triangles:
        local = p1_triangle_stiffness(np.asarray(vertices)[list(tri)])
        for a, ia in enumerate(tri):
            for b, ib in enumerate(tri):
                K[ia, ib] += local[a, b]
    return K

def fit_rate(hs, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    slope, _ = np.polyfit(np.log(hs), np.log(errors), 1)
    return float(slope)


def hat_edge_integral(length: float) -> float:
    """Integral over one incident edge of the linear hat trace."""
    return 0.5 * length


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])
