import numpy as np
import pytest

from hodgeheat.geometry import interpolate_surface, make_circle_geometry, make_sphere_geometry
from hodgeheat.harness.experiments import observed_order
from hodgeheat.mesh import (SimplicialComplex, boundary_matrix, build_circle_mesh,
                            build_icosphere, build_square_mesh)
from hodgeheat.operators import (IncompatibleSpacesError, adjoint_inclusion,
                                 exterior_derivative_matrix, l2_error,
                                 mass_matrix, mixed_matrix, project_data, stiffness_matrix,
                                 top_form_integrals)
from hodgeheat.spaces import build_form_space


def whitney_chain(mesh):
    return [build_form_space(mesh, k) for k in range(mesh.dim + 1)]


def test_mass_single_unit_triangle():
    mesh = SimplicialComplex([[0, 0], [2, 0], [0, 1]], [[0, 1, 2]])
    m = mass_matrix(build_form_space(mesh, 0, 1, "full")).toarray()
    assert np.allclose(m, (np.ones((3, 3)) + np.eye(3)) / 12, atol=1e-15)


@pytest.mark.parametrize("name", ["square", "circle", "sphere"])
def test_mass_spd_and_constant(three_meshes, name):
    mesh = three_meshes[name]
    for space in whitney_chain(mesh):
        m = mass_matrix(space).toarray()
        assert np.allclose(m, m.T, atol=1e-15)
        assert np.linalg.eigvalsh(m).min() > 0
    ones = np.ones(mesh.counts[0])
    m0 = mass_matrix(whitney_chain(mesh)[0])
    assert ones @ m0 @ ones == pytest.approx(mesh.volumes(mesh.dim).sum(), rel=1e-13)


@pytest.mark.parametrize("name", ["square", "circle", "sphere"])
def test_derivative_is_transposed_incidence(three_meshes, name):
    mesh = three_meshes[name]
    chain = whitney_chain(mesh)
    for k in range(mesh.dim):
        d = exterior_derivative_matrix(chain[k], chain[k + 1])
        assert d.shape == (mesh.counts[k + 1], mesh.counts[k])
        assert (d - boundary_matrix(mesh, k + 1).T).nnz == 0
    if mesh.dim == 2:
        dd = exterior_derivative_matrix(chain[1], chain[2]) @ exterior_derivative_matrix(chain[0], chain[1])
        assert dd.count_nonzero() == 0
    d0 = exterior_derivative_matrix(chain[0], chain[1])
    assert not (d0 @ np.ones(mesh.counts[0])).any()


def test_higher_order_derivative_chains():
    sq = build_square_mesh(3, 3)
    p1 = build_form_space(sq, 0)
    rt2 = build_form_space(sq, 1, 2)
    dg1 = build_form_space(sq, 2, 1, "full")
    d0 = exterior_derivative_matrix(p1, rt2)
    d1 = exterior_derivative_matrix(rt2, dg1)
    assert abs(d1 @ d0).max() <= 1e-13
    c = build_circle_mesh(12)
    p2 = build_form_space(c, 0, 2)
    d = exterior_derivative_matrix(p2, build_form_space(c, 1, 1, "full"))
    assert not (d @ np.ones(p2.dof_count)).any()


def test_incompatible_pair_rejected():
    sq = build_square_mesh(2, 2)
    with pytest.raises(IncompatibleSpacesError):
        exterior_derivative_matrix(build_form_space(sq, 1, 2), build_form_space(sq, 2))
    with pytest.raises(IncompatibleSpacesError):
        exterior_derivative_matrix(build_form_space(sq, 0), build_form_space(sq, 2))
    with pytest.raises(IncompatibleSpacesError):
        exterior_derivative_matrix(build_form_space(sq, 0), build_form_space(build_square_mesh(2, 2), 1))


def _rel_fro(a, b):
    return np.linalg.norm((a - b).toarray()) / max(np.linalg.norm(b.toarray()), 1e-300)


@pytest.mark.parametrize("name", ["square", "circle", "sphere"])
def test_mixed_equals_mass_times_derivative(three_meshes, name):
    chain = whitney_chain(three_meshes[name])
    for k in range(1, len(chain)):
        b = mixed_matrix(chain[k - 1], chain[k])
        md = mass_matrix(chain[k]) @ exterior_derivative_matrix(chain[k - 1], chain[k])
        assert _rel_fro(b, md) <= 1e-13
    b1 = mixed_matrix(chain[0], chain[1])
    assert np.abs(b1 @ np.ones(chain[0].dof_count)).max() <= 1e-13 * abs(b1).max()


def test_mixed_identity_on_curved_higher_order():
    mesh = build_circle_mesh(16)
    geom = interpolate_surface(mesh, make_circle_geometry(), 2)
    s = build_form_space(mesh, 0, 2, geometry=geom)
    u = build_form_space(mesh, 1, 1, "full", geometry=geom)
    md = mass_matrix(u) @ exterior_derivative_matrix(s, u)
    assert _rel_fro(mixed_matrix(s, u), md) <= 1e-13


def test_circle_m4_mixed_nonzeros():
    chain = whitney_chain(build_circle_mesh(4))
    assert mixed_matrix(chain[0], chain[1]).count_nonzero() == 8


@pytest.mark.parametrize("name", ["square", "circle", "sphere"])
def test_stiffness(three_meshes, name):
    mesh = three_meshes[name]
    chain = whitney_chain(mesh)
    top = chain[-1]
    assert stiffness_matrix(top).count_nonzero() == 0
    for k in range(mesh.dim):
        kmat = stiffness_matrix(chain[k], chain[k + 1])
        d = exterior_derivative_matrix(chain[k], chain[k + 1])
        assert _rel_fro(kmat, d.T @ mass_matrix(chain[k + 1]) @ d) <= 1e-12
        assert np.linalg.eigvalsh(kmat.toarray()).min() >= -1e-12 * abs(kmat).max()
        if k > 0:
            z = exterior_derivative_matrix(chain[k - 1], chain[k]) @ np.arange(mesh.counts[k - 1], dtype=float)
            assert np.abs(kmat @ z).max() <= 1e-10 * np.abs(z).max()
    assert np.abs(stiffness_matrix(chain[0], chain[1]).sum(axis=1)).max() <= 1e-12


def test_square_whitney_stiffness_row_sums():
    chain = whitney_chain(build_square_mesh(5, 5))
    assert np.abs(stiffness_matrix(chain[0], chain[1]).sum(axis=1)).max() <= 1e-13


def test_project_flat_discrete_data_is_identity():
    mesh = build_square_mesh(4, 3)
    p1, w1, w2 = whitney_chain(mesh)
    lin = lambda x: 2 * x[:, 0] - 3 * x[:, 1] + 1  # noqa: E731
    assert np.allclose(project_data(p1, lin).coefficients, lin(mesh.vertices), atol=1e-10)
    cov = np.array([0.5, 2.0])
    edges = mesh.simplices[1]
    expected = (mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]) @ cov
    got = project_data(w1, lambda x: np.tile(cov, (len(x), 1))).coefficients
    assert np.allclose(got, expected, atol=1e-10)
    got = project_data(w2, lambda x: np.full(len(x), 3.0)).coefficients
    assert np.allclose(got, 3.0 * mesh.volumes(2), atol=1e-10)


def test_project_zero():
    mesh = build_icosphere(1)
    space = build_form_space(mesh, 2, geometry=interpolate_surface(mesh, make_sphere_geometry(), 1))
    assert not project_data(space, lambda x: np.zeros(len(x))).coefficients.any()


def test_projection_left_inverse_of_inclusion():
    # Pi_h i_h = id on curved geometry: project the lifted discrete form
    mesh = build_circle_mesh(10)
    geom = interpolate_surface(mesh, make_circle_geometry(), 2)
    space = build_form_space(mesh, 0, 2, geometry=geom)
    c = np.random.default_rng(0).standard_normal(space.dof_count)
    lifted = project_data(space, lambda x: _lift_p2(space, c, x))
    assert np.allclose(lifted.coefficients, c, atol=1e-8)


def _lift_p2(space, c, x):
    # evaluate i_h(u_h) at exact-surface points of the circle: invert a on each chord
    mesh = space.mesh
    theta = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
    m = len(mesh.cells)
    angles = np.mod(np.arctan2(mesh.vertices[:, 1], mesh.vertices[:, 0]), 2 * np.pi)
    out = np.empty(len(x))
    for i, th in enumerate(theta):
        e = int(np.argmin(np.abs(np.mod(th - angles[mesh.cells[:, 0]], 2 * np.pi) - np.pi / m)))
        # find the chart parameter whose projection has angle th (Newton on t)
        t = np.mod(th - angles[mesh.cells[e, 0]], 2 * np.pi) / (2 * np.pi / m)
        for _ in range(50):
            p = space.geometry.chart(np.array([[t]]))[e, 0]
            dp = space.geometry.chart_jacobian(np.array([[t]]))[e, 0, :, 0]
            ang = np.arctan2(p[1], p[0])
            f = np.angle(np.exp(1j * (ang - th)))
            df = (p[0] * dp[1] - p[1] * dp[0]) / (p @ p)
            t -= f / df
        vals, _ = space.evaluate(np.array([[t]]))
        out[i] = vals[e, 0, :, 0] @ c[space.elem_dofs[e]]
    return out


def _theta(x):
    return np.arctan2(x[:, 1], x[:, 0])


def _projection_errors(family, ms=(64, 128, 256)):
    out = []
    for m in ms:
        mesh = build_circle_mesh(m)
        space = build_form_space(mesh, 1, 1, family, geometry=interpolate_surface(
            mesh, make_circle_geometry(), 1))
        f = lambda x: np.sin(_theta(x))  # noqa: E731
        out.append(l2_error(space, project_data(space, f), f))
    return out


def test_whitney_projection_order_of_sin_dtheta():
    # example as stated: Whitney 1-forms, order >= 1.8
    e = _projection_errors("trimmed")
    assert min(observed_order(a, b) for a, b in zip(e, e[1:])) >= 1.8


def test_piecewise_constant_projection_is_first_order():
    e = _projection_errors("trimmed")
    for a, b in zip(e, e[1:]):
        assert observed_order(a, b) == pytest.approx(1.0, abs=0.05)


def test_linear_projection_is_second_order():
    e = _projection_errors("full")
    assert min(observed_order(a, b) for a, b in zip(e, e[1:])) >= 1.8


def test_adjoint_inclusion_flat_equals_projection():
    space = build_form_space(build_square_mesh(3, 3), 2)
    f = lambda x: np.sin(x[:, 0]) + x[:, 1]  # noqa: E731
    assert np.allclose(adjoint_inclusion(space, f).coefficients,
                       project_data(space, f).coefficients, atol=1e-13)


def test_l2_error_of_exact_data_vanishes():
    mesh = build_square_mesh(3, 3)
    p1 = build_form_space(mesh, 0)
    lin = lambda x: x[:, 0] + 2 * x[:, 1]  # noqa: E731
    assert l2_error(p1, lin(mesh.vertices), lin) <= 1e-13
    grad = lambda x: np.tile([1.0, 2.0], (len(x), 1))  # noqa: E731
    assert l2_error(p1, lin(mesh.vertices), grad, derivative=True) <= 1e-13
    assert l2_error(p1, np.ones(p1.dof_count)) == pytest.approx(1.0)


def test_top_form_integrals():
    mesh = build_circle_mesh(12)
    space = build_form_space(mesh, 1, 1, "full")
    ones = project_data(build_form_space(mesh, 1), lambda x: np.ones(len(x)))
    assert top_form_integrals(build_form_space(mesh, 1)) == pytest.approx(np.ones(12))
    # linear basis forms integrate to 1/(n+1) of a Whitney top form
    assert top_form_integrals(space) == pytest.approx(np.full(space.dof_count, 0.5))
    assert top_form_integrals(build_form_space(mesh, 1)) @ ones.coefficients == pytest.approx(
        mesh.volumes(1).sum())
    with pytest.raises(ValueError):
        top_form_integrals(build_form_space(mesh, 0))


def test_assembly_order_independent():
    mesh = build_square_mesh(4, 4)
    perm = np.random.default_rng(3).permutation(len(mesh.cells))
    shuffled = SimplicialComplex(mesh.vertices, mesh.cells[perm])
    a = mass_matrix(build_form_space(mesh, 0)).toarray()
    b = mass_matrix(build_form_space(shuffled, 0)).toarray()
    assert np.allclose(a, b, rtol=1e-13, atol=1e-16)
