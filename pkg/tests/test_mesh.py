import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radapt.dual import Dual
from radapt.mesh import (InvalidMeshError, Mesh, apply_displacement, jacobian_at, make_cartesian,
                         min_det_jacobian, project_displacement, ref_basis, remove_elements,
                         box_attr_fn)
from radapt.problems import shearwall_mesh

from conftest import perturbed

TYPES = [(t, p) for t in ("quad", "tri") for p in (1, 2, 3, 4)]


def test_counts():
    m = make_cartesian(4, 4, 1)
    assert (m.n_elements, m.n_nodes) == (16, 25)
    m = make_cartesian(4, 4, 2)
    assert (m.n_elements, m.n_nodes) == (16, 81)
    assert make_cartesian(1, 1, 1, "tri").n_elements == 16


@pytest.mark.parametrize("etype,p", TYPES)
def test_lagrange_and_partition_of_unity(etype, p):
    b = ref_basis(etype, p)
    vals, grads = b.eval(b.nodes)
    assert np.allclose(vals, np.eye(b.n), atol=1e-12)
    r = np.random.default_rng(0).uniform(0, 0.5, (20, 2))
    vals, grads = b.eval(r)
    assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(grads.sum(axis=1), 0.0, atol=1e-10)


def test_q1_center_values():
    vals, _ = ref_basis("quad", 1).eval([[0.5, 0.5]])
    assert np.allclose(vals, 0.25)


def test_q2_sum_rules():
    vals, grads = ref_basis("quad", 2).eval([[0.25, 0.75]])
    assert vals.sum() == pytest.approx(1.0)
    assert np.allclose(grads.sum(axis=1), 0.0)


def test_jacobian_identity_and_scaling():
    m = make_cartesian(1, 1, 1)
    assert np.allclose(jacobian_at(m, 0, [0.3, 0.6]).to_array(), np.eye(2))
    m = make_cartesian(4, 4, 2)
    assert np.allclose(jacobian_at(m, 5, [0.3, 0.6]).to_array(), 0.25 * np.eye(2))


def test_jacobian_matches_fd_of_map():
    m = perturbed(make_cartesian(2, 2, 2), 0.15, seed=4)
    xe = m.element_coords()[3]
    r0 = np.array([0.3, 0.7])
    A = jacobian_at(m, 3, r0).to_array()

    def phys(r):
        phi, _ = m.basis.eval(np.reshape(r, (1, 2)))
        return phi[0] @ xe

    h = 1e-6
    for b in range(2):
        e = np.zeros(2)
        e[b] = h
        col = (phys(r0 + e) - phys(r0 - e)) / (2 * h)
        assert np.allclose(A[:, b], col, rtol=1e-6, atol=1e-9)


def test_jacobian_seeded_tangent():
    m = perturbed(make_cartesian(2, 2, 2), 0.1, seed=2)
    xe = m.element_coords()[1]
    r = np.array([0.2, 0.9])
    _, dphi = m.basis.eval(r.reshape(1, 2))
    for i, a in [(0, 0), (4, 1), (8, 0)]:
        t = np.zeros_like(xe)
        t[i, a] = 1.0
        A = jacobian_at(m, 1, r, coords=Dual(xe, t))
        dA = np.array([[A[c, b].tangent for b in range(2)] for c in range(2)])
        expected = np.zeros((2, 2))
        expected[a, :] = dphi[0, i]
        assert np.array_equal(dA, expected)


def test_min_det():
    m = make_cartesian(4, 4, 1)
    assert min_det_jacobian(m) == pytest.approx(0.0625)
    x = m.x.copy()
    n = m.n_nodes
    # swap two vertices of element 0
    e = m.elements[0]
    i, j = e[0], e[1]
    x[[i, j]] = x[[j, i]]
    x[[n + i, n + j]] = x[[n + j, n + i]]
    assert min_det_jacobian(m.with_coords(x)) < 0


def test_apply_displacement():
    m = make_cartesian(3, 3, 2)
    assert np.array_equal(apply_displacement(m, np.zeros(m.x.size)).x, m.x_init)
    w = np.zeros(m.x.size)
    w[: m.n_nodes] = 0.01        # constant x-shift
    moved = apply_displacement(m, w)
    d = (moved.x - m.x_init).reshape(2, -1)
    pts = m.points
    left = np.isclose(pts[:, 0], 0.0)
    bottom = np.isclose(pts[:, 1], 0.0) & ~left & ~np.isclose(pts[:, 0], 1.0)
    interior = ~(left | np.isclose(pts[:, 0], 1.0) | np.isclose(pts[:, 1], 0.0)
                 | np.isclose(pts[:, 1], 1.0))
    assert np.allclose(d[0, interior], 0.01)
    assert np.allclose(d[0, left], 0.0)          # normal component zeroed
    assert np.allclose(d[0, bottom], 0.01)       # tangential slide allowed
    assert np.all(d[1] == 0.0)
    assert np.array_equal(moved.x_init, m.x_init)
    with pytest.raises(ValueError):
        apply_displacement(m, np.zeros(3))


def test_corners_pinned():
    m = make_cartesian(2, 2, 1)
    corners = [i for i, p in enumerate(m.points)
               if np.isclose(p, 0).any() + np.isclose(p, 1).any() and
               (np.isclose(p[0], 0) or np.isclose(p[0], 1)) and
               (np.isclose(p[1], 0) or np.isclose(p[1], 1))]
    n = m.n_nodes
    assert len(corners) == 4
    for c in corners:
        assert m.constrained[c] and m.constrained[n + c]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_projection_idempotent(seed):
    m = make_cartesian(2, 3, 2, "tri")
    w = np.random.default_rng(seed).standard_normal(m.x.size)
    w1 = project_displacement(m, w)
    assert np.array_equal(project_displacement(m, w1), w1)
    assert np.array_equal(apply_displacement(m, w1).x, apply_displacement(m, w).x)


def test_mesh_validation():
    m = make_cartesian(1, 1, 1)
    with pytest.raises(ValueError):
        Mesh(1, "quad", m.x, [[0, 1, 2, 2]], m.boundary)
    with pytest.raises(ValueError):
        Mesh(1, "quad", m.x, [[0, 1, 2, 9]], m.boundary)
    with pytest.raises(ValueError):
        Mesh(1, "hex", m.x, m.elements, m.boundary)
    assert issubclass(InvalidMeshError, ValueError)


def test_shearwall_mesh():
    m = shearwall_mesh(24, 2)
    assert m.n_elements == 512
    assert set(m.boundary[:, 1].tolist()) == {1, 2, 3, 4, 5}
    assert min_det_jacobian(m) > 0


def test_remove_elements_renumbers():
    m = make_cartesian(2, 1, 1)
    sub = remove_elements(m, [True, False], box_attr_fn(((0, 0.5), (0, 1))))
    assert sub.n_nodes == 4 and sub.n_elements == 1
    assert set(sub.boundary[:, 1].tolist()) == {1, 2, 3, 4}
