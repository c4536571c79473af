import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import UNIT_SQUARE, simple_polygons
from vemtau.geometry import (
    DegenerateGeometryError,
    GeometryError,
    Mesh,
    OrientationError,
    ccw_area,
    centroid,
    edge_data,
    is_convex,
    load_mesh,
    make_structured_quad_mesh,
    normalize_polygon,
    perturb_mesh,
    polygon_area,
    save_mesh,
)


def shoelace_loop(p):
    """Plain-loop shoelace, kept separate from the vectorized one."""
    s = 0.0
    for i in range(len(p)):
        x0, y0 = p[i]
        x1, y1 = p[(i + 1) % len(p)]
        s += x0 * y1 - x1 * y0
    return s / 2


class TestPolygonArea:
    def test_unit_square(self):
        assert polygon_area(UNIT_SQUARE) == 1.0

    def test_clockwise_is_negative(self):
        assert polygon_area(UNIT_SQUARE[::-1]) == -1.0

    def test_rectangle_by_hand(self):
        assert polygon_area([[0, 0], [2, 0], [2, 1], [0, 1]]) == 2.0

    def test_zero_area_raises(self):
        with pytest.raises(DegenerateGeometryError):
            polygon_area([[0, 0], [1, 0], [2, 0], [1, 0.0]])

    def test_repeated_vertex_raises(self):
        with pytest.raises(DegenerateGeometryError):
            polygon_area([[0, 0], [1, 0], [1, 0], [0, 1]])

    def test_bad_shape(self):
        with pytest.raises(GeometryError):
            polygon_area([[0, 0], [1, 0]])
        with pytest.raises(GeometryError):
            polygon_area([[0, 0, 0], [1, 0, 0], [0, 1, 0]])

    def test_ccw_area_refuses_clockwise(self):
        with pytest.raises(OrientationError):
            ccw_area(UNIT_SQUARE[::-1])

    def test_batched_matches_single(self, rng):
        polys = rng.normal(size=(5, 4, 2))
        polys = np.array([normalize_polygon(p)[0] for p in polys])
        np.testing.assert_allclose(polygon_area(polys), [shoelace_loop(p) for p in polys], rtol=1e-13)

    def test_far_from_origin_no_cancellation(self):
        sq = UNIT_SQUARE * 1e-3 + 1e4
        # exact area of the rounded square: product of the float side lengths
        exact = (sq[1, 0] - sq[0, 0]) * (sq[2, 1] - sq[1, 1])
        assert polygon_area(sq) == pytest.approx(exact, rel=1e-14)

    @given(simple_polygons())
    def test_matches_loop_oracle(self, p):
        assert polygon_area(p) == pytest.approx(shoelace_loop(p), rel=1e-12)

    @given(simple_polygons(), st.floats(-100, 100), st.floats(-100, 100))
    def test_translation_invariant(self, p, tx, ty):
        assert polygon_area(p + [tx, ty]) == pytest.approx(polygon_area(p), rel=1e-9)


class TestNormalize:
    def test_flag(self):
        v, flipped = normalize_polygon(UNIT_SQUARE[::-1])
        assert flipped and polygon_area(v) == 1.0
        v2, flipped2 = normalize_polygon(v)
        assert not flipped2 and np.array_equal(v, v2)

    @given(simple_polygons())
    def test_idempotent_and_positive(self, p):
        for q in (p, p[::-1]):
            v, _ = normalize_polygon(q)
            w, again = normalize_polygon(v)
            assert not again
            assert np.array_equal(v, w)
            assert polygon_area(v) > 0


class TestCentroidConvexity:
    def test_centroid_of_l_shape(self):
        # L-shape = [0,2]x[0,1] + [0,1]x[1,2]; centroid by composite areas
        L = [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]]
        np.testing.assert_allclose(centroid(L), [(2 * 1 + 1 * 0.5) / 3, (2 * 0.5 + 1 * 1.5) / 3])

    def test_convexity(self):
        assert is_convex(UNIT_SQUARE)
        assert not is_convex([[0, 0], [1, 0], [0.1, 0.1], [0, 1]])
        np.testing.assert_array_equal(
            is_convex(np.stack([UNIT_SQUARE, [[0, 0], [1, 0], [0.1, 0.1], [0, 1]]])), [True, False]
        )


class TestEdgeData:
    def test_unit_square(self):
        ed = edge_data(UNIT_SQUARE)
        np.testing.assert_array_equal(ed.normals[0], [0, -1])
        np.testing.assert_array_equal(ed.lengths, [1, 1, 1, 1])

    @given(simple_polygons())
    def test_closed_loop_and_normals(self, p):
        ed = edge_data(p)
        np.testing.assert_allclose(ed.edges.sum(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(np.hypot(*ed.normals.T), 1, rtol=1e-14)
        np.testing.assert_allclose((ed.normals * ed.edges).sum(axis=1), 0, atol=1e-12)
        # divergence theorem: sum |e| n = 0 for a closed curve
        np.testing.assert_allclose((ed.normals * ed.lengths[:, None]).sum(axis=0), 0, atol=1e-12)

    def test_tiny_edge_raises(self):
        with pytest.raises(DegenerateGeometryError):
            edge_data([[0, 0], [1, 0], [1, 1e-16], [0, 1]])


class TestStructuredMesh:
    @pytest.mark.parametrize(
        "nx,ny,npts,ncells,nb", [(1, 1, 4, 1, 4), (20, 20, 441, 400, 80), (2, 1, 6, 2, 6)]
    )
    def test_counts(self, nx, ny, npts, ncells, nb):
        m = make_structured_quad_mesh(nx, ny)
        assert (m.n_points, m.n_cells, len(m.boundary)) == (npts, ncells, nb)

    def test_cells_ccw_and_area_sum(self):
        m = make_structured_quad_mesh(7, 5, domain=(-1.0, 2.0, 0.5, 1.5))
        areas = m.cell_areas()
        assert np.all(areas > 0)
        assert areas.sum() == pytest.approx(3.0, rel=1e-12)

    def test_boundary_is_exactly_the_frame(self):
        m = make_structured_quad_mesh(6, 4)
        p = m.points
        on = np.isclose(p[:, 0], 0) | np.isclose(p[:, 0], 1) | np.isclose(p[:, 1], 0) | np.isclose(p[:, 1], 1)
        np.testing.assert_array_equal(np.flatnonzero(on), m.boundary)

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            make_structured_quad_mesh(0, 3)

    def test_mesh_validation(self):
        with pytest.raises(GeometryError):
            Mesh(UNIT_SQUARE, ((0, 1, 2, 7),), np.array([0]))
        with pytest.raises(OrientationError):
            Mesh(UNIT_SQUARE, ((0, 3, 2, 1),), np.array([0, 1, 2, 3]))


class TestPerturb:
    def test_zero_amplitude_identity(self):
        m = make_structured_quad_mesh(5, 5)
        assert np.array_equal(perturb_mesh(m, 0.0, 3).points, m.points)

    def test_deterministic(self):
        m = make_structured_quad_mesh(12, 12)
        a = perturb_mesh(m, 0.3, 7)
        b = perturb_mesh(m, 0.3, 7)
        c = perturb_mesh(m, 0.3, 8)
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)

    def test_boundary_fixed_interior_moved_within_bound(self):
        m = make_structured_quad_mesh(10, 10)
        p = perturb_mesh(m, 0.3, 1)
        np.testing.assert_array_equal(p.points[m.boundary], m.points[m.boundary])
        assert np.abs(p.points - m.points).max() <= 0.3 * 0.1 + 1e-15
        assert np.all(is_convex(p.points[np.array(p.cells)]))

    def test_h_mean_band_for_10x10(self):
        p = perturb_mesh(make_structured_quad_mesh(10, 10), 0.3, 42)
        assert 0.14 <= p.h_mean() <= 0.18

    @given(st.integers(2, 12), st.floats(0.0, 0.45), st.integers(0, 10**6))
    def test_area_preserved(self, n, amp, seed):
        p = perturb_mesh(make_structured_quad_mesh(n, n), amp, seed)
        assert np.all(p.cell_areas() > 0)
        assert p.cell_areas().sum() == pytest.approx(1.0, rel=1e-12)

    def test_amplitude_out_of_range(self):
        with pytest.raises(ValueError):
            perturb_mesh(make_structured_quad_mesh(3, 3), 0.6, 0)


def test_json_roundtrip(tmp_path):
    m = perturb_mesh(make_structured_quad_mesh(4, 3), 0.2, 5)
    path = tmp_path / "m.json"
    save_mesh(m, path)
    data = json.loads(path.read_text())
    assert set(data) == {"points", "cells", "boundary", "meta"}
    back = load_mesh(path)
    assert np.array_equal(back.points, m.points)
    assert back.cells == m.cells
    assert np.array_equal(back.boundary, m.boundary)
