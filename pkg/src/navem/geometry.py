"""Polygon geometry, canonical maps, random elements, quadrature and meshes.

Everything here is plain float64 numpy. Polygons are counter-clockwise
vertex lists; meshes are vertex/element tables on the unit square. All
objects are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ContainmentError, GenerationError, GeometryError

__all__ = [
    "MeshAssumptionParams",
    "Polygon",
    "PolygonalMesh",
    "SimilarityMap",
    "TriangleQuadRule",
    "build_mesh_family",
    "encode_input",
    "inertial_map",
    "kernel_chebyshev",
    "quadrature_on_polygon",
    "random_polygon",
    "read_mesh",
    "triangle_quadrature_rule",
    "triangulate",
    "vertex_canonical_map",
    "vertex_canonical_polygon",
    "write_mesh",
]


@dataclass(frozen=True)
class MeshAssumptionParams:
    """Shape-regularity constant: star-shapedness radius and minimum edge
    length are both required to be at least ``rho * diameter``."""

    rho: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise GeometryError(f"rho must lie in (0,1), got {self.rho}")


class Polygon:
    """Simple counter-clockwise polygon with cached derived quantities.

    Attributes
    ----------
    vertices : (n, 2) array
    area : float, positive
    centroid : (2,) array
    diameter : float, max pairwise vertex distance
    edge_lengths, edge_tangents, edge_normals : per-edge data; edge ``i``
        runs from vertex ``i`` to vertex ``i+1`` (cyclic), tangents are unit
        CCW, normals are unit outward.
    """

    __slots__ = (
        "vertices",
        "area",
        "centroid",
        "diameter",
        "edge_lengths",
        "edge_tangents",
        "edge_normals",
    )

    def __init__(self, vertices, check_simple: bool = True):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise GeometryError(f"vertices must be (n, 2), got {verts.shape}")
        n = len(verts)
        if n < 3:
            raise GeometryError(f"polygon needs >= 3 vertices, got {n}")
        if not np.all(np.isfinite(verts)):
            raise GeometryError("non-finite vertex coordinates")

        nxt = np.roll(verts, -1, axis=0)
        cross = verts[:, 0] * nxt[:, 1] - nxt[:, 0] * verts[:, 1]
        signed_area = 0.5 * float(np.sum(cross))
        diam = _max_pairwise_distance(verts)
        if signed_area <= 1e-14 * diam**2:
            raise GeometryError(
                f"degenerate or clockwise polygon (signed area {signed_area:.3e})"
            )

        edges = nxt - verts
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        if np.any(lengths < 1e-14 * diam):
            raise GeometryError("repeated vertices (zero-length edge)")
        if check_simple and _has_self_intersection(verts):
            raise GeometryError("polygon is self-intersecting")

        tangents = edges / lengths[:, None]
        # outward normal of a CCW polygon: tangent rotated by -90 degrees
        normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        centroid = np.sum((verts + nxt) * cross[:, None], axis=0) / (6.0 * signed_area)

        self.vertices = verts
        self.area = signed_area
        self.centroid = centroid
        self.diameter = diam
        self.edge_lengths = lengths
        self.edge_tangents = tangents
        self.edge_normals = normals
        for arr in (verts, centroid, lengths, tangents, normals):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def reindexed(self, first: int) -> "Polygon":
        """Same polygon with the vertex list cyclically shifted so that
        vertex ``first`` comes first."""
        idx = (np.arange(self.n_vertices) + first) % self.n_vertices
        return Polygon(self.vertices[idx], check_simple=False)

    def __repr__(self):
        return f"Polygon(n={self.n_vertices}, area={self.area:.4g}, h={self.diameter:.4g})"


def _max_pairwise_distance(verts: np.ndarray) -> float:
    diff = verts[:, None, :] - verts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _has_self_intersection(verts: np.ndarray) -> bool:
    n = len(verts)
    for i in range(n):
        for j in range(i + 1, n):
            # skip adjacent edges (share a vertex)
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_properly_intersect(
                verts[i], verts[(i + 1) % n], verts[j], verts[(j + 1) % n]
            ):
                return True
    return False


@dataclass(frozen=True)
class SimilarityMap:
    """Orientation-preserving similarity ``x -> scale * rotation @ x + translation``.

    The linear part is constrained to a rotation times a positive scale so
    that harmonic functions stay harmonic under pullback.
    """

    rotation: np.ndarray
    scale: float
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(2, 2)
        tra = np.asarray(self.translation, dtype=float).reshape(2)
        if self.scale <= 0.0:
            raise GeometryError(f"similarity scale must be positive, got {self.scale}")
        if np.max(np.abs(rot @ rot.T - np.eye(2))) > 1e-12 or np.linalg.det(rot) < 0:
            raise GeometryError("rotation part is not a proper rotation")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)
        rot.setflags(write=False)
        tra.setflags(write=False)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply the map to one point ``(2,)`` or a stack ``(n, 2)``."""
        pts = np.asarray(points, dtype=float)
        return self.scale * (pts @ self.rotation.T) + self.translation

    def apply_polygon(self, poly: Polygon) -> Polygon:
        return Polygon(self.apply(poly.vertices), check_simple=False)

    def compose(self, inner: "SimilarityMap") -> "SimilarityMap":
        """Map performing ``self(inner(x))``."""
        return SimilarityMap(
            rotation=self.rotation @ inner.rotation,
            scale=self.scale * inner.scale,
            translation=self.scale * (self.rotation @ inner.translation)
            + self.translation,
        )

    def inverse(self) -> "SimilarityMap":
        rot_inv = self.rotation.T
        s_inv = 1.0 / self.scale
        return SimilarityMap(
            rotation=rot_inv,
            scale=s_inv,
            translation=-s_inv * (rot_inv @ self.translation),
        )

    @staticmethod
    def identity() -> "SimilarityMap":
        return SimilarityMap(np.eye(2), 1.0, np.zeros(2))


def second_moment_matrix(poly: Polygon) -> np.ndarray:
    """Area inertia tensor about the centroid, ``J = int_E (x-c)(x-c)^T dx``.

    Uses the exact closed form on a signed centroid fan, valid for any
    simple polygon.
    """
    q = poly.vertices - poly.centroid
    q_next = np.roll(q, -1, axis=0)
    signed = 0.5 * (q[:, 0] * q_next[:, 1] - q_next[:, 0] * q[:, 1])
    total = np.zeros((2, 2))
    for a, qi, qj in zip(signed, q, q_next):
        outer_sum = np.outer(qi, qi) + np.outer(qj, qj)
        s = qi + qj
        total += (a / 12.0) * (outer_sum + np.outer(s, s))
    return total


def inertial_map(poly: Polygon) -> SimilarityMap:
    """Similarity sending an element to its canonical pose.

    The image has centroid at the origin, unit diameter, and principal
    inertia axes on the coordinate axes with the larger eigenvalue on x1.
    The residual half-turn ambiguity is fixed by requiring the image of the
    first vertex to have non-negative x2 (and, if that is zero, non-negative
    x1). Exact eigenvalue ties keep the identity rotation.
    """
    if poly.area <= 1e-14 * poly.diameter**2:
        raise GeometryError("degenerate element: area too small for its diameter")
    moments = second_moment_matrix(poly)
    eigvals, eigvecs = np.linalg.eigh(moments)

    if eigvals[1] - eigvals[0] < 1e-12:
        rot = np.eye(2)
    else:
        # rows: major axis first, minor second
        rot = np.vstack([eigvecs[:, 1], eigvecs[:, 0]])
        if np.linalg.det(rot) < 0:
            rot[1] = -rot[1]
        first = rot @ (poly.vertices[0] - poly.centroid) / poly.diameter
        if first[1] < -1e-12 or (abs(first[1]) <= 1e-12 and first[0] < 0):
            rot = -rot

    scale = 1.0 / poly.diameter
    translation = -scale * (rot @ poly.centroid)
    return SimilarityMap(rotation=rot, scale=scale, translation=translation)


def vertex_canonical_map(canonical: Polygon, j: int) -> SimilarityMap:
    """Rotation plus rescaling about the origin placing vertex ``j`` of a
    centered element at ``(1, 0)``."""
    v = canonical.vertices[j]
    r = float(np.hypot(v[0], v[1]))
    if r < 1e-10:
        raise GeometryError(f"vertex {j} coincides with the centroid")
    angle = math.atan2(v[1], v[0])
    c, s = math.cos(-angle), math.sin(-angle)
    return SimilarityMap(
        rotation=np.array([[c, -s], [s, c]]), scale=1.0 / r, translation=np.zeros(2)
    )


def vertex_canonical_polygon(canonical: Polygon, j: int):
    """Map a centered element so vertex ``j`` sits at ``(1, 0)`` and reindex
    it so that vertex comes first. Returns ``(polygon, map)``."""
    gmap = vertex_canonical_map(canonical, j)
    return gmap.apply_polygon(canonical).reindexed(j), gmap


def encode_input(canonical: Polygon, j: int) -> np.ndarray:
    """Network input for the pair (vertex ``j``, centered element).

    The element is rotated/rescaled so vertex ``j`` lands at ``(1, 0)``;
    the encoding lists the remaining vertex coordinates counter-clockwise,
    giving a vector of length ``2 * (n_vertices - 1)``.
    """
    mapped, _ = vertex_canonical_polygon(canonical, j)
    return mapped.vertices[1:].ravel().copy()


def kernel_chebyshev(poly: Polygon):
    """Chebyshev center and radius of the polygon's kernel.

    The kernel is the intersection of the inner half-planes of all edges;
    its Chebyshev radius is the largest ``r`` such that the polygon is
    star-shaped with respect to a ball of radius ``r``. A non-positive
    radius means the polygon is not star-shaped.
    """
    normals = poly.edge_normals
    offsets = np.einsum("ij,ij->i", normals, poly.vertices)
    # maximize r  s.t.  n_i . x + r <= n_i . p_i
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=np.column_stack([normals, np.ones(len(normals))]),
        b_ub=offsets,
        bounds=[(None, None), (None, None), (None, None)],
        method="highs",
    )
    if not res.success:  # pragma: no cover - bounded by construction
        raise GeometryError(f"kernel LP failed: {res.message}")
    return res.x[:2].copy(), float(res.x[2])


def mesh_assumption_failure(poly: Polygon, rho: float):
    """Return ``None`` if the element satisfies both shape-regularity
    bounds, else a short tag naming the violated constraint."""
    threshold = rho * poly.diameter
    if poly.edge_lengths.min() < threshold:
        return "edge-length"
    _, radius = kernel_chebyshev(poly)
    if radius < threshold:
        return "star-shape"
    return None


def satisfies_mesh_assumptions(poly: Polygon, rho: float) -> bool:
    return mesh_assumption_failure(poly, rho) is None


_SAMPLER_MAX_ATTEMPTS = 10_000

# largest distance-from-origin allowed for canonicalized samples; keeps all
# training encodings inside the default reference square (diameter 10 gives
# half-side 3.54) with room for the shapes structured meshes produce (~2.9)
CANONICAL_REACH_CAP = 3.4


def _jittered_regular_vertices(n: int, rng) -> np.ndarray:
    """Regular polygon with random radial eccentricity and angular jitter."""
    two_pi = 2.0 * math.pi
    eccentricity = rng.uniform(0.0, 1.0)
    jitter = rng.uniform(0.0, 1.0)
    base = two_pi * (np.arange(n) + rng.uniform(0.0, 1.0)) / n
    perturbed = (base + jitter * rng.uniform(-0.5, 0.5, n) * two_pi / n) % two_pi
    angles = np.sort(perturbed)
    gaps = np.diff(angles, append=angles[0] + two_pi)
    if gaps.min() < two_pi * 0.05:
        return None
    radii = rng.uniform(0.5 * (1.0 - 0.6 * eccentricity), 0.5, n)
    return np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])


def _jittered_parallelogram_vertices(rng) -> np.ndarray:
    """Near-parallelogram via half-diagonals plus vertex noise.

    This is the shape family structured quadrilateral meshes are made of:
    smooth distortions of a grid look like sheared parallelograms at the
    element scale with lower-order corrections.
    """
    theta = rng.uniform(0.0, 2.0 * math.pi)
    phi = rng.uniform(math.radians(48.0), math.radians(90.0))
    ratio = rng.uniform(1.0, 3.8)
    lengths = (1.0, 1.0 / ratio) if rng.uniform() < 0.5 else (1.0 / ratio, 1.0)
    p = lengths[0] * np.array([math.cos(theta), math.sin(theta)])
    q = lengths[1] * np.array([math.cos(theta + phi), math.sin(theta + phi)])
    verts = np.array([p, q, -p, -q])
    diameter = 2.0 * max(lengths)
    verts = verts + rng.uniform(-1.0, 1.0, (4, 2)) * rng.uniform(0.0, 0.14) * diameter
    return verts * (0.5 / np.abs(verts).max())


def canonical_reach(poly: Polygon) -> float:
    """Upper bound on vertex distances from the origin over all canonical
    images: the ratio of extreme vertex-centroid distances (the maps only
    rotate and rescale about the centroid)."""
    radii = np.hypot(*((poly.vertices - poly.centroid).T))
    return float(radii.max() / radii.min())


def random_polygon(
    n_vertices: int,
    params: MeshAssumptionParams = MeshAssumptionParams(),
    rng=None,
    seed=None,
) -> Polygon:
    """Random star-shaped polygon satisfying the shape-regularity bounds.

    Draws from a mixture of jittered regular polygons and (for
    quadrilaterals) jittered parallelograms, so the samples range from
    near-regular shapes to the sheared elements of distorted structured
    meshes. Candidates are rejected until the edge-length and
    star-shapedness bounds hold for the given ``rho`` and all canonical
    images stay within the default reference square.
    """
    if n_vertices < 3:
        raise GeometryError(f"need at least 3 vertices, got {n_vertices}")
    if rng is None:
        rng = np.random.default_rng(seed)
    failures = {"angular-gap": 0, "edge-length": 0, "star-shape": 0, "reach": 0}

    for _ in range(_SAMPLER_MAX_ATTEMPTS):
        if n_vertices == 4 and rng.uniform() < 0.5:
            vertices = _jittered_parallelogram_vertices(rng)
        else:
            vertices = _jittered_regular_vertices(n_vertices, rng)
        if vertices is None:
            failures["angular-gap"] += 1
            continue
        try:
            poly = Polygon(vertices, check_simple=True)
        except GeometryError:
            failures["star-shape"] += 1
            continue
        tag = mesh_assumption_failure(poly, params.rho)
        if tag is not None:
            failures[tag] += 1
            continue
        if canonical_reach(poly) > CANONICAL_REACH_CAP:
            failures["reach"] += 1
            continue
        return poly

    worst = max(failures, key=failures.get)
    raise GenerationError(
        f"polygon sampling failed after {_SAMPLER_MAX_ATTEMPTS} attempts "
        f"(most frequent rejection: {worst}, counts: {failures})"
    )


def triangulate(poly: Polygon) -> np.ndarray:
    """Partition into triangles, ``(n_tri, 3, 2)``, positively oriented.

    Fans from the centroid when the centroid lies in the kernel; otherwise
    falls back to ear clipping.
    """
    c = poly.centroid
    margin = 1e-12 * poly.diameter
    inside = np.einsum("ij,j->i", poly.edge_normals, c) - np.einsum(
        "ij,ij->i", poly.edge_normals, poly.vertices
    )
    if np.all(inside < -margin):
        v = poly.vertices
        v_next = np.roll(v, -1, axis=0)
        tris = np.stack(
            [np.broadcast_to(c, v.shape), v, v_next], axis=1
        ).copy()
        return tris
    return _ear_clip(poly.vertices)


def _ear_clip(verts: np.ndarray) -> np.ndarray:
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def point_in_triangle(p, a, b, c):
        d1, d2, d3 = cross(a, b, p), cross(b, c, p), cross(c, a, p)
        return d1 >= 0 and d2 >= 0 and d3 >= 0

    remaining = list(range(len(verts)))
    triangles = []
    guard = 0
    while len(remaining) > 3:
        guard += 1
        if guard > 10 * len(verts) ** 2:
            raise GeometryError("ear clipping failed (degenerate polygon?)")
        n = len(remaining)
        clipped = False
        for k in range(n):
            i_prev, i, i_next = remaining[k - 1], remaining[k], remaining[(k + 1) % n]
            a, b, c = verts[i_prev], verts[i], verts[i_next]
            if cross(a, b, c) <= 0:
                continue
            if any(
                point_in_triangle(verts[m], a, b, c)
                for m in remaining
                if m not in (i_prev, i, i_next)
            ):
                continue
            triangles.append((a, b, c))
            remaining.pop(k)
            clipped = True
            break
        if not clipped:
            raise GeometryError("ear clipping found no ear (degenerate polygon?)")
    triangles.append(tuple(verts[m] for m in remaining))
    return np.array(triangles)


@dataclass(frozen=True)
class TriangleQuadRule:
    """Quadrature on the reference triangle ``{(0,0), (1,0), (0,1)}``.

    Built from a Gauss-Jacobi x Gauss-Legendre tensor rule on the collapsed
    square, so weights are positive and polynomials up to ``degree`` are
    integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


_RULE_CACHE: dict[int, TriangleQuadRule] = {}


def triangle_quadrature_rule(degree: int) -> TriangleQuadRule:
    if degree < 1:
        raise GeometryError(f"quadrature degree must be >= 1, got {degree}")
    if degree in _RULE_CACHE:
        return _RULE_CACHE[degree]
    n = (degree + 2) // 2  # 2n - 1 >= degree
    # u direction carries the collapse Jacobian (1 - u): Gauss-Jacobi(1, 0)
    tj, wj = _gauss_jacobi_10(n)
    u = 0.5 * (tj + 1.0)
    wu = 0.25 * wj  # includes the (1 - u) weight and the [0,1] rescaling
    tl, wl = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (tl + 1.0)
    wv = 0.5 * wl
    uu, vv = np.meshgrid(u, v, indexing="ij")
    xi = uu.ravel()
    eta = (vv * (1.0 - uu)).ravel()
    w = np.outer(wu, wv).ravel()
    rule = TriangleQuadRule(np.column_stack([xi, eta]), w, degree)
    _RULE_CACHE[degree] = rule
    return rule


def _gauss_jacobi_10(n: int):
    """Nodes/weights on [-1, 1] for the weight function ``(1 - t)``."""
    from scipy.special import roots_jacobi

    return roots_jacobi(n, 1.0, 0.0)


def quadrature_on_polygon(poly: Polygon, degree: int):
    """Quadrature nodes and weights on a polygon.

    Exact (to roundoff) for bivariate polynomials of total degree up to
    ``degree``; weights are positive and sum to the polygon area.
    """
    rule = triangle_quadrature_rule(degree)
    tris = triangulate(poly)
    pts = []
    wts = []
    for tri in tris:
        origin, p1, p2 = tri
        jac = np.column_stack([p1 - origin, p2 - origin])
        area2 = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        if area2 <= 0:
            raise GeometryError("triangulation produced a flipped triangle")
        pts.append(rule.points @ jac.T + origin)
        wts.append(rule.weights * area2)
    return np.vstack(pts), np.concatenate(wts)


@dataclass
class PolygonalMesh:
    """Conforming polygonal tessellation of a planar domain.

    ``elements`` lists CCW vertex indices per element; ``boundary`` flags
    vertices lying on the domain boundary.
    """

    vertices: np.ndarray
    elements: list
    boundary: np.ndarray
    _polygons: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        self.elements = [list(map(int, e)) for e in self.elements]
        self._polygons = [
            Polygon(self.vertices[e], check_simple=True) for e in self.elements
        ]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def h(self) -> float:
        return max(p.diameter for p in self._polygons)

    def element_polygon(self, e: int) -> Polygon:
        return self._polygons[e]

    def edge_incidence(self) -> dict:
        """Map undirected edge ``(i, j)`` (i < j) -> list of element ids."""
        incidence: dict[tuple, list] = {}
        for e, elem in enumerate(self.elements):
            n = len(elem)
            for k in range(n):
                key = tuple(sorted((elem[k], elem[(k + 1) % n])))
                incidence.setdefault(key, []).append(e)
        return incidence

    def validate_conforming(self):
        """Raise unless every edge is shared by one or two elements and the
        boundary flags match the edge incidence."""
        incidence = self.edge_incidence()
        on_boundary_edge = np.zeros(self.n_vertices, dtype=bool)
        for (i, j), elems in incidence.items():
            if len(elems) > 2:
                raise GeometryError(f"edge {(i, j)} shared by {len(elems)} elements")
            if len(elems) == 1:
                on_boundary_edge[i] = on_boundary_edge[j] = True
        if not np.array_equal(on_boundary_edge, self.boundary):
            raise GeometryError("boundary flags inconsistent with edge incidence")


def build_mesh_family(kind: str, n: int) -> PolygonalMesh:
    """Quadrilateral mesh of the unit square, ``n x n`` elements.

    ``kind`` is ``"cartesian"`` (uniform grid) or ``"sine-distorted"``
    (every node displaced by ``0.1 * sin(2 pi x) * sin(2 pi y)`` in both
    coordinates; boundary nodes are fixed points of the displacement).
    Elements are checked against the shape-regularity bounds with
    rho = 0.05.
    """
    if n < 2:
        raise GeometryError(f"need at least 2 elements per side, got {n}")
    if kind not in ("cartesian", "sine-distorted"):
        raise GeometryError(f"unknown mesh family {kind!r}")

    ticks = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(ticks, ticks, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    if kind == "sine-distorted":
        bump = 0.1 * np.sin(2 * np.pi * vertices[:, 0]) * np.sin(
            2 * np.pi * vertices[:, 1]
        )
        vertices = vertices + bump[:, None]

    def vid(i, j):
        return j * (n + 1) + i

    elements = []
    for j in range(n):
        for i in range(n):
            elements.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])

    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    boundary = ((ii == 0) | (ii == n) | (jj == 0) | (jj == n)).ravel()

    mesh = PolygonalMesh(vertices, elements, boundary)
    for e in range(mesh.n_elements):
        tag = mesh_assumption_failure(mesh.element_polygon(e), rho=0.05)
        if tag is not None:
            raise GeometryError(
                f"mesh family {kind!r} n={n}: element {e} violates the "
                f"{tag} bound"
            )
    return mesh


MESH_FORMAT_HEADER = "navem-mesh v1"


def write_mesh(mesh: PolygonalMesh, path):
    """Write the versioned text format (see README for the grammar)."""
    lines = [MESH_FORMAT_HEADER, str(mesh.n_vertices)]
    for (x, y), flag in zip(mesh.vertices, mesh.boundary):
        lines.append(f"{float(x)!r} {float(y)!r} {int(flag)}")
    lines.append(str(mesh.n_elements))
    for elem in mesh.elements:
        lines.append(" ".join([str(len(elem))] + [str(i) for i in elem]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> PolygonalMesh:
    with open(path) as fh:
        tokens = fh.read().split("\n")
    if not tokens or tokens[0].strip() != MESH_FORMAT_HEADER:
        raise GeometryError(f"{path}: missing '{MESH_FORMAT_HEADER}' header")
    body = [ln.split() for ln in tokens[1:] if ln.strip()]
    pos = 0
    n_vertices = int(body[pos][0])
    pos += 1
    vertices = np.empty((n_vertices, 2))
    boundary = np.empty(n_vertices, dtype=bool)
    for k in range(n_vertices):
        x, y, flag = body[pos + k]
        vertices[k] = (float(x), float(y))
        boundary[k] = bool(int(flag))
    pos += n_vertices
    n_elements = int(body[pos][0])
    pos += 1
    elements = []
    for k in range(n_elements):
        row = [int(t) for t in body[pos + k]]
        if row[0] != len(row) - 1:
            raise GeometryError(f"{path}: element {k} has inconsistent vertex count")
        elements.append(row[1:])
    return PolygonalMesh(vertices, elements, boundary)


def check_containment(poly: Polygon, square_diameter: float, context: str = ""):
    """Assert a polygon fits inside the axis-aligned square of the given
    diameter centred at the origin."""
    half_side = square_diameter / (2.0 * math.sqrt(2.0))
    reach = float(np.abs(poly.vertices).max())
    if reach > half_side:
        raise ContainmentError(
            f"{context or 'element'} exceeds the reference square "
            f"(reach {reach:.4f} > half-side {half_side:.4f}); "
            "increase the reference-square diameter"
        )
