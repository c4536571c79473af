import math

import numpy as np
import pytest

from vemtau.decomposition import DiffusionTensor
from vemtau.experiments import (
    HourglassConfig,
    MMSConfig,
    MMSProblem,
    checkerboard_boundary,
    element_report_rows,
    format_element_report,
    inspect_element,
    interior_mask,
    mms_data,
    parse_scheme,
    run_hourglass,
    run_mms,
    tau_table,
)
from vemtau.geometry import GeometryError, Mesh, make_structured_quad_mesh
from vemtau.isoparametric import parallelogram_vertices
from vemtau.output import csv_text
from vemtau.vem import VEM, Constant, FemQuadrature, IsoFEM, VemTrace, parse_tau_policy


def fd_source(x, y, h=1e-5):
    """-div(kappa grad u) by nested second-order central differences."""
    u, kappa = MMSProblem.u, MMSProblem.kappa

    def flux(px, py):
        gx = (u(px + h, py) - u(px - h, py)) / (2 * h)
        gy = (u(px, py + h) - u(px, py - h)) / (2 * h)
        k = kappa(px, py).matrix
        return k @ np.array([gx, gy])

    div = (flux(x + h, y)[0] - flux(x - h, y)[0]) / (2 * h) + (flux(x, y + h)[1] - flux(x, y - h)[1]) / (2 * h)
    return -div


class TestCheckerboard:
    def test_corner_and_neighbour(self):
        m = make_structured_quad_mesh(20, 20)
        g = checkerboard_boundary(m, 0.25)
        assert g[0] == 0.25
        assert g[1] == -0.25

    def test_grid_pattern_and_sum(self):
        n = 20
        m = make_structured_quad_mesh(n, n)
        g = checkerboard_boundary(m, 0.25)
        for k, val in g.items():
            i, j = k % (n + 1), k // (n + 1)
            assert val == 0.25 * (-1) ** (i + j)
        assert sum(g.values()) == 0

    def test_twenty_oscillations_per_edge(self):
        n = 20
        m = make_structured_quad_mesh(n, n)
        g = checkerboard_boundary(m, 0.25)
        edges = [
            list(range(n + 1)),  # bottom
            [n + j * (n + 1) for j in range(n + 1)],  # right
            [n * (n + 1) + i for i in range(n + 1)],  # top
            [j * (n + 1) for j in range(n + 1)],  # left
        ]
        for e in edges:
            vals = np.array([g[k] for k in e])
            assert np.all(np.abs(vals) == 0.25)
            assert np.count_nonzero(np.diff(np.sign(vals))) == 20
            assert (vals < 0).sum() == 10 and (vals > 0).sum() == 11

    def test_matches_hourglass_pattern_on_boundary_cells(self):
        m = make_structured_quad_mesh(20, 20)
        g = checkerboard_boundary(m, 0.25)
        bnd = set(g)
        cell = m.cells[0]  # corner cell: vertex 1 at (0, 0)
        vals = [g[k] for k in cell if k in bnd]
        # V1, V2, V4 carry -1/2 times the hourglass dofs (-1/2, 1/2, -1/2, 1/2)
        assert vals == [0.25, -0.25, -0.25]

    def test_finer_grid_samples_same_function(self):
        m = make_structured_quad_mesh(40, 40)
        g = checkerboard_boundary(m, 0.25)
        assert g[0] == 0.25 and g[2] == -0.25
        assert g[1] == pytest.approx(0.0, abs=1e-15)

    def test_rejects_bad_meshes(self):
        with pytest.raises(GeometryError):
            checkerboard_boundary(make_structured_quad_mesh(21, 21))
        with pytest.raises(GeometryError):
            checkerboard_boundary(make_structured_quad_mesh(20, 10))
        with pytest.raises(GeometryError):
            checkerboard_boundary(make_structured_quad_mesh(4, 4, domain=(0.0, 2.0, 0.0, 2.0)))
        m = make_structured_quad_mesh(4, 4)
        with pytest.raises(GeometryError):
            checkerboard_boundary(Mesh(m.points, m.cells, m.boundary, {}))

    def test_interior_mask(self):
        m = make_structured_quad_mesh(4, 4)
        mask = interior_mask(m, 0.25)
        assert mask.sum() == 9


class TestHourglassRun:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            HourglassConfig(taus=())
        with pytest.raises(ValueError):
            HourglassConfig(sizes=(20, 21))
        with pytest.raises(ValueError):
            HourglassConfig(amplitude=0.0)
        with pytest.raises(ValueError):
            HourglassConfig(taus=(0.0,))

    def test_small_run(self):
        cfg = HourglassConfig(sizes=(10, 20), taus=(0.01, 1.0, 2 / 3), oscillations=10, reference_size=40)
        res = run_hourglass(cfg)
        assert len(res.rows) == 2 * 4
        by = {(r.scheme, r.n, r.tau): r for r in res.rows}
        for n in (10, 20):
            a, b = by[("vem", n, 2 / 3)], by[("isofem", n, None)]
            assert a.interior_max == pytest.approx(b.interior_max, abs=1e-10)
            assert a.linf_error == pytest.approx(b.linf_error, abs=1e-10)
        assert by[("vem", 10, 0.01)].interior_max > 10 * by[("vem", 10, 1.0)].interior_max

    def test_vertex_values_equal_isofem(self):
        cfg = HourglassConfig(sizes=(20,), taus=(2 / 3,), reference_size=20, keep_fields=True)
        res = run_hourglass(cfg)
        u_vem, u_fem = res.fields[0].u, res.fields[1].u
        assert np.abs(u_vem - u_fem).max() <= 1e-10


class TestMMS:
    def test_point_values(self):
        u, f, g, kappa = mms_data()
        assert u(0.0, 0.0) == -1.0
        assert u(1.0, 1.0) == pytest.approx(math.sin(5) * math.sin(7) + math.log(3), rel=1e-14)
        # sin 5 sin 7 + ln 3 = 0.4686119, i.e. 0.468612 to six places
        assert round(float(u(1.0, 1.0)), 6) == 0.468612
        assert g is u
        assert kappa(0.5, 2.0) == DiffusionTensor(5.0, -1.0, 1.25)

    def test_source_vs_finite_differences(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(0, 1, size=(100, 2))
        f = MMSProblem.f(pts[:, 0], pts[:, 1])
        fd = np.array([fd_source(x, y) for x, y in pts])
        assert np.abs(f - fd).max() <= 1e-6 * max(1.0, np.abs(f).max())

    def test_source_vs_symbolic(self):
        sympy = pytest.importorskip("sympy")
        x, y = sympy.symbols("x y")
        u = x**3 - x * y**2 + x**2 * y - x * y + x**2 - x + y - 1 + sympy.sin(5 * x) * sympy.sin(7 * y) + sympy.log(
            1 + x**2 + y**4
        )
        K = sympy.Matrix([[1 + y**2, -x * y], [-x * y, 1 + x**2]])
        grad = sympy.Matrix([u.diff(x), u.diff(y)])
        flux = K * grad
        f = sympy.lambdify((x, y), -(flux[0].diff(x) + flux[1].diff(y)), "numpy")
        ux = sympy.lambdify((x, y), grad[0], "numpy")
        pts = np.random.default_rng(1).uniform(-1, 2, size=(200, 2))
        np.testing.assert_allclose(MMSProblem.f(*pts.T), f(*pts.T), rtol=1e-12, atol=1e-11)
        np.testing.assert_allclose(MMSProblem.grad_u(*pts.T)[0], ux(*pts.T), rtol=1e-13, atol=1e-12)

    def test_config(self):
        with pytest.raises(ValueError):
            MMSConfig(sizes=(10,))
        with pytest.raises(ValueError):
            MMSConfig(schemes=("bogus",))

    def test_parse_scheme(self):
        assert parse_scheme("isofem") == IsoFEM(2)
        assert parse_scheme("isofem:3") == IsoFEM(3)
        assert parse_scheme("vem") == VEM(VemTrace())
        assert parse_scheme("vem:fem:3") == VEM(FemQuadrature(3))
        assert parse_scheme("vem:0.5") == VEM(Constant(0.5))

    def test_small_uniform_rates(self):
        res = run_mms(MMSConfig(sizes=(10, 20, 40)))
        for r in res.rows:
            if r.rate is not None:
                assert r.rate >= 1.9
        assert [r.rate is None for r in res.rows] == [True, False, False] * 2

    def test_perturbed_factor_two_each_mesh(self):
        res = run_mms(MMSConfig(sizes=(10, 20, 40), perturb=0.3, seed=42))
        fem = {r.n: r.linf_error for r in res.rows if r.scheme == "isofem"}
        vem = {r.n: r.linf_error for r in res.rows if r.scheme == "vem[trace]"}
        for n in fem:
            assert max(fem[n], vem[n]) / min(fem[n], vem[n]) <= 2.0

    def test_fem_policy_reproduces_isofem(self):
        # the quadrature identity makes VEM(FemQuadrature) and IsoFEM the same discrete method
        res = run_mms(MMSConfig(sizes=(8, 16), perturb=0.3, seed=5, schemes=("isofem", "vem:fem")))
        e = [r.linf_error for r in res.rows]
        assert e[0] == pytest.approx(e[2], rel=1e-9)
        assert e[1] == pytest.approx(e[3], rel=1e-9)

    def test_deterministic_csv(self):
        cfg = MMSConfig(sizes=(8, 16), perturb=0.25, seed=3)
        assert csv_text(run_mms(cfg).rows) == csv_text(run_mms(cfg).rows)


class TestInspection:
    def test_unit_square(self):
        sq = [[0, 0], [1, 0], [1, 1], [0, 1]]
        r = inspect_element(sq, DiffusionTensor.identity(), [parse_tau_policy("trace"), parse_tau_policy("fem")])
        assert r.taus["trace"] == 1.0
        assert r.taus["fem:2"] == pytest.approx(2 / 3, rel=1e-15)
        assert r.identity_residual < 1e-13
        assert r.b_is_parallelogram_matrix
        text = format_element_report(r)
        assert "tau[trace]: 1" in text

    def test_parallelogram_flag(self):
        r = inspect_element(parallelogram_vertices(2, 1, 1.1), DiffusionTensor(2, 0.3, 1))
        assert r.b_is_parallelogram_matrix

    def test_nonconvex(self):
        r = inspect_element([[0, 0], [1, 0], [0.1, 0.1], [0, 1]], DiffusionTensor.identity())
        assert not r.convex
        assert isinstance(r.taus["fem:2"], str) and r.taus["fem:2"].startswith("error")
        assert isinstance(r.identity_residual, str)
        assert r.taus["trace"] == 1.0
        rows = element_report_rows(r)
        assert {row["quantity"] for row in rows} >= {"A", "B", "gamma", "C"}

    def test_tau_table(self):
        rows = tau_table("parallelogram", [1, 2], [1], [60, 90], [DiffusionTensor(2, 0.5, 1)])
        assert len(rows) == 4
        for r in rows:
            assert r["tau_closed"] == pytest.approx(r["tau_quadrature"], rel=1e-12)
