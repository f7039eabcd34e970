import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navem.errors import GenerationError, GeometryError
from navem.geometry import (
    MeshAssumptionParams,
    Polygon,
    SimilarityMap,
    build_mesh_family,
    encode_input,
    inertial_map,
    kernel_chebyshev,
    quadrature_on_polygon,
    random_polygon,
    read_mesh,
    satisfies_mesh_assumptions,
    second_moment_matrix,
    triangle_quadrature_rule,
    triangulate,
    vertex_canonical_map,
    vertex_canonical_polygon,
    write_mesh,
)

from . import oracles

UNIT_SQUARE = Polygon([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_quad(seed):
    return random_polygon(4, MeshAssumptionParams(0.1), seed=seed)


class TestPolygon:
    def test_unit_square_cached_data(self):
        p = UNIT_SQUARE
        assert p.area == pytest.approx(1.0)
        assert p.centroid == pytest.approx([0.5, 0.5])
        assert p.diameter == pytest.approx(math.sqrt(2.0))
        assert p.edge_lengths == pytest.approx([1.0, 1.0, 1.0, 1.0])
        # outward normals for CCW orientation
        assert p.edge_normals[0] == pytest.approx([0.0, -1.0])
        assert p.edge_normals[2] == pytest.approx([0.0, 1.0])

    def test_clockwise_rejected(self):
        with pytest.raises(GeometryError):
            Polygon([[0, 0], [0, 1], [1, 1], [1, 0]])

    def test_self_intersection_rejected(self):
        with pytest.raises(GeometryError):
            Polygon([[0, 0], [1, 1], [1, 0], [0, 1]])

    def test_too_few_vertices(self):
        with pytest.raises(GeometryError):
            Polygon([[0, 0], [1, 0]])

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_shoelace_positive_and_diameter(self, seed):
        p = random_quad(seed)
        assert p.area > 0
        assert oracles.shoelace_area(p.vertices) == pytest.approx(p.area, rel=1e-13)
        diff = p.vertices[:, None] - p.vertices[None, :]
        assert p.diameter == pytest.approx(np.sqrt((diff**2).sum(-1)).max())


class TestSimilarityMap:
    def test_composition_is_similarity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m1 = SimilarityMap(
                oracles.rotation_matrix(rng.uniform(0, 7)),
                rng.uniform(0.1, 3.0),
                rng.normal(size=2),
            )
            m2 = SimilarityMap(
                oracles.rotation_matrix(rng.uniform(0, 7)),
                rng.uniform(0.1, 3.0),
                rng.normal(size=2),
            )
            comp = m2.compose(m1)
            x = rng.normal(size=2)
            assert comp.apply(x) == pytest.approx(m2.apply(m1.apply(x)), abs=1e-12)

    def test_inverse_roundtrip(self):
        m = SimilarityMap(oracles.rotation_matrix(0.7), 2.5, np.array([1.0, -2.0]))
        x = np.array([0.3, 0.9])
        assert m.inverse().apply(m.apply(x)) == pytest.approx(x, abs=1e-14)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_angle_preservation(self, seed):
        rng = np.random.default_rng(seed)
        m = SimilarityMap(
            oracles.rotation_matrix(rng.uniform(0, 7)),
            rng.uniform(0.2, 4.0),
            rng.normal(size=2),
        )
        a, b, c = rng.normal(size=(3, 2))

        def angle(p, q, r):
            u, v = q - p, r - p
            return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), np.dot(u, v))

        assert angle(m.apply(a), m.apply(b), m.apply(c)) == pytest.approx(
            angle(a, b, c), abs=1e-12
        )

    def test_improper_rotation_rejected(self):
        with pytest.raises(GeometryError):
            SimilarityMap(np.array([[1.0, 0.0], [0.0, -1.0]]), 1.0, np.zeros(2))


class TestInertialMap:
    def test_unit_square(self):
        m = inertial_map(UNIT_SQUARE)
        img = m.apply_polygon(UNIT_SQUARE)
        # symmetric element: eigenvalue tie keeps the identity rotation
        assert m.rotation == pytest.approx(np.eye(2))
        assert m.scale == pytest.approx(1.0 / math.sqrt(2.0))
        assert m.translation == pytest.approx([-0.5 / math.sqrt(2)] * 2)
        assert np.linalg.norm(img.centroid) < 1e-12 * UNIT_SQUARE.diameter
        assert img.diameter == pytest.approx(1.0, abs=1e-12)

    def test_rectangle_long_axis_to_x1(self):
        rect = Polygon([[0, 0], [4, 0], [4, 1], [0, 1]])
        img = inertial_map(rect).apply_polygon(rect)
        assert img.diameter == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(img.centroid) < 1e-12
        # oracle: second moments of the image from Green's-theorem integrals
        _, moments = oracles.second_moments(img.vertices)
        assert abs(moments[0, 1]) < 1e-10
        assert moments[0, 0] > moments[1, 1]
        # long axis along x1: x-extent dominates
        assert np.ptp(img.vertices[:, 0]) > np.ptp(img.vertices[:, 1])

    def test_second_moment_matches_oracle(self):
        poly = random_quad(7)
        _, expected = oracles.second_moments(poly.vertices)
        assert second_moment_matrix(poly) == pytest.approx(expected, abs=1e-13)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_idempotent_on_canonical_form(self, seed):
        poly = random_quad(seed)
        canonical = inertial_map(poly).apply_polygon(poly)
        m2 = inertial_map(canonical)
        assert m2.rotation == pytest.approx(np.eye(2), abs=1e-10)
        assert m2.scale == pytest.approx(1.0, abs=1e-10)
        assert m2.translation == pytest.approx(np.zeros(2), abs=1e-10)

    def test_first_vertex_sign_rule(self):
        rect = Polygon([[0, 0], [4, 0], [4, 1], [0, 1]])
        img = inertial_map(rect).apply_polygon(rect)
        assert img.vertices[0, 1] >= -1e-12

    def test_degenerate_rejected(self):
        with pytest.raises(GeometryError):
            Polygon([[0, 0], [1, 0], [2, 1e-16]])


class TestVertexCanonicalMap:
    def test_square_vertex_at_45_degrees(self):
        canonical = inertial_map(UNIT_SQUARE).apply_polygon(UNIT_SQUARE)
        j = int(np.argmax(canonical.vertices[:, 0] + canonical.vertices[:, 1]))
        mapped, gmap = vertex_canonical_polygon(canonical, j)
        assert mapped.vertices[0] == pytest.approx([1.0, 0.0], abs=1e-12)
        assert gmap.scale == pytest.approx(2.0)  # vertex radius is 1/2

    def test_vertex_on_positive_axis(self):
        tri = Polygon([[0.8, 0.0], [-0.3, 0.5], [-0.3, -0.5]])
        gmap = vertex_canonical_map(tri, 0)
        assert gmap.rotation == pytest.approx(np.eye(2), abs=1e-15)
        assert gmap.scale == pytest.approx(1.0 / 0.8)

    @given(st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_canonical_vertex_lands_at_unit(self, seed):
        poly = random_quad(seed)
        canonical = inertial_map(poly).apply_polygon(poly)
        for j in range(canonical.n_vertices):
            v = canonical.vertices[j]
            # oracle: direct polar construction
            r, ang = np.hypot(*v), math.atan2(v[1], v[0])
            expected = oracles.rotation_matrix(-ang) @ v / r
            got = vertex_canonical_map(canonical, j).apply(v)
            assert got == pytest.approx([1.0, 0.0], abs=1e-12)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_degenerate_vertex(self):
        tri = Polygon([[1e-12, 0.0], [1.0, 1.0], [-1.0, 1.0]])
        with pytest.raises(GeometryError):
            vertex_canonical_map(tri, 0)


class TestEncodeInput:
    def test_triangle_readout(self):
        tri = Polygon([[1.0, 0.0], [-0.5, 0.9], [-0.5, -0.9]])
        z = encode_input(tri, 0)
        assert z == pytest.approx([-0.5, 0.9, -0.5, -0.9])
        assert len(z) == 2 * (3 - 1)

    def test_quadrilateral_length(self):
        poly = random_quad(3)
        canonical = inertial_map(poly).apply_polygon(poly)
        assert len(encode_input(canonical, 0)) == 6

    @given(st.integers(0, 10_000), st.floats(0.0, 2.0 * math.pi))
    @settings(max_examples=60, deadline=None)
    def test_rotation_invariance_of_canonical_frame(self, seed, theta):
        poly = random_quad(seed)
        canonical = inertial_map(poly).apply_polygon(poly)
        rotated = SimilarityMap(
            oracles.rotation_matrix(theta), 1.0, np.zeros(2)
        ).apply_polygon(canonical)
        for j in range(4):
            assert encode_input(rotated, j) == pytest.approx(
                encode_input(canonical, j), abs=1e-12
            )

    @given(
        st.integers(0, 10_000),
        st.floats(0.0, 2.0 * math.pi),
        st.floats(0.1, 10.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_full_pipeline_rigid_invariance(self, seed, theta, scale):
        poly = random_quad(seed)
        transformed = Polygon(
            scale
            * (poly.vertices - poly.centroid)
            @ oracles.rotation_matrix(theta).T
            + poly.centroid,
            check_simple=False,
        )
        base = inertial_map(poly).apply_polygon(poly)
        other = inertial_map(transformed).apply_polygon(transformed)
        for j in range(4):
            assert encode_input(other, j) == pytest.approx(
                encode_input(base, j), abs=1e-12
            )


class TestRandomPolygon:
    def test_fixed_seed_quadrilateral(self):
        params = MeshAssumptionParams(0.1)
        poly = random_polygon(4, params, seed=42)
        assert poly.n_vertices == 4
        assert satisfies_mesh_assumptions(poly, params.rho)

    def test_triangles_always_star_shaped(self):
        for seed in range(20):
            poly = random_polygon(3, seed=seed)
            _, radius = kernel_chebyshev(poly)
            assert radius >= 0.1 * poly.diameter

    def test_hundred_distinct_quads(self):
        rng = np.random.default_rng(2024)
        polys = [random_polygon(4, MeshAssumptionParams(0.1), rng=rng) for _ in range(100)]
        seen = {tuple(np.round(p.vertices.ravel(), 12)) for p in polys}
        assert len(seen) == 100
        assert all(satisfies_mesh_assumptions(p, 0.1) for p in polys)

    def test_determinism(self):
        a = random_polygon(4, seed=7)
        b = random_polygon(4, seed=7)
        assert np.array_equal(a.vertices, b.vertices)

    def test_generation_failure_reports_constraint(self):
        with pytest.raises(GenerationError, match="edge-length"):
            # a 12-gon edge is ~0.26 of the diameter, below rho = 0.3
            random_polygon(12, MeshAssumptionParams(0.3), seed=0)


class TestKernel:
    def test_unit_square_chebyshev(self):
        center, radius = kernel_chebyshev(UNIT_SQUARE)
        assert center == pytest.approx([0.5, 0.5], abs=1e-9)
        assert radius == pytest.approx(0.5, abs=1e-9)

    def test_nonconvex_kernel_smaller(self):
        arrow = Polygon([[0, 0], [2, 0], [2, 2], [1, 0.5], [0, 2]])
        _, radius = kernel_chebyshev(arrow)
        assert 0 < radius < 0.3


class TestTriangulate:
    def test_unit_square_fan(self):
        tris = triangulate(UNIT_SQUARE)
        assert tris.shape == (4, 3, 2)
        areas = [oracles.shoelace_area(t) for t in tris]
        assert areas == pytest.approx([0.25] * 4)

    def test_triangle_fan(self):
        tri = Polygon([[0, 0], [1, 0], [0, 1]])
        tris = triangulate(tri)
        assert tris.shape[0] == 3
        assert sum(oracles.shoelace_area(t) for t in tris) == pytest.approx(tri.area)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_partition_area(self, seed):
        poly = random_quad(seed)
        tris = triangulate(poly)
        total = sum(oracles.shoelace_area(t) for t in tris)
        assert total == pytest.approx(oracles.shoelace_area(poly.vertices), rel=1e-13)

    def test_ear_clipping_fallback(self):
        # centroid of this "comb" lies outside the kernel
        comb = Polygon([[0, 0], [4, 0], [4, 3], [3, 0.7], [2, 3], [1, 0.7], [0, 3]])
        tris = triangulate(comb)
        total = sum(oracles.shoelace_area(t) for t in tris)
        assert total == pytest.approx(comb.area, rel=1e-12)
        assert all(oracles.shoelace_area(t) > 0 for t in tris)


class TestQuadrature:
    def test_reference_rule_invariants(self):
        for degree in (1, 2, 5, 8, 12, 14):
            rule = triangle_quadrature_rule(degree)
            assert np.all(rule.weights > 0)
            assert rule.weights.sum() == pytest.approx(0.5, rel=1e-14)
            for a in range(rule.degree + 1):
                for b in range(rule.degree + 1 - a):
                    exact = (
                        math.factorial(a)
                        * math.factorial(b)
                        / math.factorial(a + b + 2)
                    )
                    got = np.sum(
                        rule.weights
                        * rule.points[:, 0] ** a
                        * rule.points[:, 1] ** b
                    )
                    assert got == pytest.approx(exact, rel=1e-13)

    def test_constant_over_square(self):
        pts, w = quadrature_on_polygon(UNIT_SQUARE, 2)
        assert w.sum() == pytest.approx(1.0, rel=1e-14)

    def test_bilinear_over_square(self):
        pts, w = quadrature_on_polygon(UNIT_SQUARE, 2)
        assert np.sum(w * pts[:, 0] * pts[:, 1]) == pytest.approx(0.25, rel=1e-13)

    def test_x3y2_on_random_polygon(self):
        poly = random_quad(11)
        pts, w = quadrature_on_polygon(poly, 5)
        expected = oracles.monomial_integral(poly.vertices, 3, 2)
        assert np.sum(w * pts[:, 0] ** 3 * pts[:, 1] ** 2) == pytest.approx(
            expected, rel=1e-12
        )

    @given(st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_degree_12_exactness(self, seed):
        poly = random_quad(seed)
        pts, w = quadrature_on_polygon(poly, 12)
        for a in range(13):
            for b in range(13 - a):
                expected = oracles.monomial_integral(poly.vertices, a, b)
                got = float(np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b))
                assert got == pytest.approx(expected, rel=1e-12, abs=1e-15)


class TestMeshFamilies:
    def test_cartesian_counts(self):
        mesh = build_mesh_family("cartesian", 4)
        assert mesh.n_elements == 16
        assert mesh.n_vertices == 25
        assert mesh.h == pytest.approx(math.sqrt(2.0) / 4.0)

    def test_cartesian_identical_squares(self):
        mesh = build_mesh_family("cartesian", 8)
        areas = {round(mesh.element_polygon(e).area, 14) for e in range(64)}
        diams = {round(mesh.element_polygon(e).diameter, 14) for e in range(64)}
        assert len(areas) == 1 and len(diams) == 1

    def test_sine_distorted_valid(self):
        mesh = build_mesh_family("sine-distorted", 4)
        cart = build_mesh_family("cartesian", 4)
        assert mesh.n_elements == 16
        np.testing.assert_allclose(
            mesh.vertices[mesh.boundary], cart.vertices[cart.boundary]
        )
        for e in range(mesh.n_elements):
            assert satisfies_mesh_assumptions(mesh.element_polygon(e), 0.05)

    @pytest.mark.parametrize("kind", ["cartesian", "sine-distorted"])
    @pytest.mark.parametrize("n", [4, 8])
    def test_conforming(self, kind, n):
        build_mesh_family(kind, n).validate_conforming()

    def test_unknown_kind(self):
        with pytest.raises(GeometryError):
            build_mesh_family("hex", 4)

    def test_mesh_file_roundtrip(self, tmp_path):
        mesh = build_mesh_family("sine-distorted", 4)
        path = tmp_path / "mesh.txt"
        write_mesh(mesh, path)
        back = read_mesh(path)
        np.testing.assert_array_equal(back.vertices, mesh.vertices)
        np.testing.assert_array_equal(back.boundary, mesh.boundary)
        assert back.elements == mesh.elements
        assert path.read_text().startswith("navem-mesh v1\n")

    def test_read_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not-a-mesh\n")
        with pytest.raises(GeometryError):
            read_mesh(path)
