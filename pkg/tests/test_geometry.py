import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodgeheat.geometry import (GeometryError, estimate_I_minus_Jh, geometric_errors,
                                interpolate_surface, make_circle_geometry,
                                make_sphere_geometry, pullback_mass_matrix)
from hodgeheat.harness.experiments import observed_order
from hodgeheat.mesh import build_circle_mesh, build_icosphere, build_square_mesh
from hodgeheat.operators import exterior_derivative_matrix, mass_matrix
from hodgeheat.spaces import build_form_space

CIRCLE = make_circle_geometry()
SPHERE = make_sphere_geometry()

points = st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v[:2]) > 0.2 and np.linalg.norm(v) > 0.2)


def test_circle_exact_examples():
    x = np.array([[2.0, 0.0]])
    assert CIRCLE.distance(x)[0] == 1.0
    assert np.allclose(CIRCLE.projection(x), [[1.0, 0.0]])
    on = np.array([[np.cos(0.3), np.sin(0.3)]])
    assert abs(CIRCLE.distance(on)[0]) < 1e-15
    assert np.allclose(CIRCLE.projection(on), on, atol=1e-15)


def test_origin_rejected():
    with pytest.raises(GeometryError):
        CIRCLE.distance(np.zeros((1, 2)))


@settings(max_examples=50, deadline=None)
@given(points)
def test_decomposition_identities(v):
    for surf, x in ((CIRCLE, np.array([v[:2]])), (SPHERE, np.array([v]))):
        a, nu, dist = surf.projection(x), surf.normal(x), surf.distance(x)
        assert np.allclose(a + dist[:, None] * nu, x, atol=1e-14)
        assert np.allclose(surf.projection(a), a, atol=1e-12)
        assert np.allclose(np.linalg.norm(nu, axis=1), 1.0, atol=1e-12)
        assert np.allclose(surf.distance(a), 0.0, atol=1e-12)


def test_s1_charts_are_affine():
    mesh = build_circle_mesh(8)
    geom = interpolate_surface(mesh, CIRCLE, 1)
    t = np.array([[0.0], [0.25], [1.0]])
    v = mesh.vertices[mesh.cells]
    expected = v[:, None, 0] + t[None, :, 0, None] * (v[:, None, 1] - v[:, None, 0])
    assert np.allclose(geom.chart(t), expected, atol=1e-15)


def test_s2_quarter_circle():
    mesh = build_circle_mesh(4)
    g1 = interpolate_surface(mesh, CIRCLE, 1)
    g2 = interpolate_surface(mesh, CIRCLE, 2)
    mid = g2.chart(np.array([[0.5]]))[:, 0]
    assert np.allclose(np.linalg.norm(mid, axis=1), 1.0, atol=1e-15)
    ends = mesh.vertices[mesh.cells]
    chord_mid = ends.mean(axis=1)
    assert np.allclose(mid, chord_mid / np.linalg.norm(chord_mid, axis=1, keepdims=True))
    d1, _ = geometric_errors(g1, 201)
    d2, _ = geometric_errors(g2, 201)
    assert d1 == pytest.approx(1 - np.cos(np.pi / 4), abs=1e-12)
    assert d1 / d2 >= 8.0


def test_s2_circle_closed_form():
    # nodes at angles -a, 0, a: |x|^2 - 1 = c^2 (t^4 - t^2), c = 1 - cos a
    m = 12
    a = np.pi / m
    geom = interpolate_surface(build_circle_mesh(m), CIRCLE, 2)
    t = np.linspace(0, 1, 41)
    x = geom.chart(t[:, None])
    tt = 2 * t - 1
    c = 1 - np.cos(a)
    assert np.allclose(np.sum(x ** 2, axis=-1) - 1, c ** 2 * (tt ** 4 - tt ** 2), atol=1e-14)


@pytest.mark.parametrize("mesh, surf", [(build_circle_mesh(10), CIRCLE), (build_icosphere(1), SPHERE)])
def test_chart_continuity(mesh, surf):
    geom = interpolate_surface(mesh, surf, 2)
    vert_ref = np.vstack([np.zeros(mesh.dim), np.eye(mesh.dim)])
    at_vertices = geom.chart(vert_ref)
    assert np.array_equal(at_vertices, mesh.vertices[mesh.cells])
    if mesh.dim == 2:
        # edge midpoints shared by two triangles map to the same point
        mids = geom.chart(np.array([[0.5, 0.0], [0.0, 0.5], [0.5, 0.5]]))
        cells = mesh.cells
        seen = {}
        for e, cell in enumerate(cells.tolist()):
            for j, (a, b) in enumerate(((0, 1), (0, 2), (1, 2))):
                key = tuple(sorted((cell[a], cell[b])))
                if key in seen:
                    assert np.array_equal(seen[key], mids[e, j])
                else:
                    seen[key] = mids[e, j]


@pytest.mark.parametrize("m", [6, 16, 40])
def test_polygon_geometric_errors(m):
    geom = interpolate_surface(build_circle_mesh(m), CIRCLE, 1)
    delta, nu_err = geometric_errors(geom)
    assert delta == pytest.approx(1 - np.cos(np.pi / m), abs=1e-6)
    assert nu_err == pytest.approx(2 * np.sin(np.pi / (2 * m)), abs=1e-6)


def test_s2_delta_order_at_least():
    deltas = [geometric_errors(interpolate_surface(build_circle_mesh(m), CIRCLE, 2))[0]
              for m in (16, 32, 64)]
    assert all(observed_order(a, b) >= 2.6 for a, b in zip(deltas, deltas[1:]))


def test_leaving_tubular_neighborhood():
    with pytest.raises(GeometryError, match="element"):
        interpolate_surface(build_circle_mesh(3), CIRCLE, 1)


def test_flat_pullback_equals_mass():
    space = build_form_space(build_square_mesh(4, 4), 1)
    diff = pullback_mass_matrix(space) - mass_matrix(space)
    assert abs(diff).max() <= 1e-12
    assert estimate_I_minus_Jh(mass_matrix(space), pullback_mass_matrix(space)) <= 1e-12


@pytest.mark.parametrize("s", [1, 2])
def test_pullback_total_measure(s):
    mesh = build_circle_mesh(32)
    space = build_form_space(mesh, 0, geometry=interpolate_surface(mesh, CIRCLE, s))
    mt = pullback_mass_matrix(space, space.geometry)
    ones = np.ones(space.dof_count)
    assert ones @ mt @ ones == pytest.approx(2 * np.pi, abs=1e-9)
    assert abs(mt - mt.T).max() <= 1e-13


def test_sphere_pullback_area():
    mesh = build_icosphere(2)
    space = build_form_space(mesh, 0, geometry=interpolate_surface(mesh, SPHERE, 1))
    ones = np.ones(space.dof_count)
    assert ones @ pullback_mass_matrix(space) @ ones == pytest.approx(4 * np.pi, rel=1e-8)


def test_pullback_with_foreign_geometry():
    mesh = build_circle_mesh(8)
    space = build_form_space(mesh, 0, geometry=interpolate_surface(mesh, CIRCLE, 1))
    with pytest.raises(ValueError):
        pullback_mass_matrix(space, interpolate_surface(mesh, CIRCLE, 2))


@pytest.mark.parametrize("s, bound", [(1, 1.8), (2, 2.6)])
def test_I_minus_Jh_orders(s, bound):
    values = []
    for m in (16, 32, 64):
        mesh = build_circle_mesh(m)
        space = build_form_space(mesh, 0, geometry=interpolate_surface(mesh, CIRCLE, s))
        values.append(estimate_I_minus_Jh(mass_matrix(space), pullback_mass_matrix(space)))
    assert values[0] > values[1] > values[2]
    assert all(observed_order(a, b) >= bound for a, b in zip(values, values[1:]))


def test_exterior_derivative_independent_of_geometry():
    mesh = build_icosphere(1)
    for s in (1, 2):
        geom = interpolate_surface(mesh, SPHERE, s)
        for k in (0, 1):
            flat = exterior_derivative_matrix(build_form_space(mesh, k), build_form_space(mesh, k + 1))
            curved = exterior_derivative_matrix(build_form_space(mesh, k, geometry=geom),
                                                build_form_space(mesh, k + 1, geometry=geom))
            assert (flat != curved).nnz == 0
