import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radapt.linalg import SmallMatrix
from radapt.mesh import make_cartesian
from radapt.tmop import (BarrierError, TargetSpec, build_target, fmu_grad, fmu_value,
                         inclined_theta, metric_mu2, metric_nu107, weighted_metric)

from conftest import central_fd, perturbed

ORIENTED = TargetSpec("ideal_shape_oriented", inclined_theta)


def sm(a):
    a = np.asarray(a, dtype=float)
    return SmallMatrix([[a[..., 0, 0], a[..., 0, 1]], [a[..., 1, 0], a[..., 1, 1]]])


def rot(t):
    c, s = np.cos(t), np.sin(t)
    return np.moveaxis(np.array([[c, -s], [s, c]]), (0, 1), (-2, -1))


def random_positive(n, rng):
    A = rng.uniform(-2, 2, (n, 2, 2))
    flip = np.linalg.det(A) < 0
    A[flip, :, 0] *= -1
    return A[np.abs(np.linalg.det(A)) > 1e-3]


def test_targets():
    I = build_target(TargetSpec(), "quad").to_array()
    assert np.allclose(I, np.eye(2))
    assert np.linalg.det(build_target(TargetSpec(), "tri").to_array()) == pytest.approx(np.sqrt(3) / 2)
    W = build_target(ORIENTED, "quad", np.array([[0.3, 0.0]]))
    assert np.allclose(np.squeeze(W.to_array()), np.eye(2))
    with pytest.raises(ValueError):
        TargetSpec("ideal_shape_oriented")
    with pytest.raises(ValueError):
        TargetSpec("ideal_size")


def test_mu2_examples():
    assert metric_mu2(sm(np.eye(2))) == pytest.approx(0.0, abs=1e-15)
    assert metric_mu2(sm(2 * np.eye(2))) == pytest.approx(0.0, abs=1e-15)
    assert metric_mu2(sm(np.diag([2.0, 1.0]))) == pytest.approx(0.25)
    with pytest.raises(BarrierError):
        metric_mu2(sm(np.diag([1.0, -1.0])))


def test_nu107_examples():
    W = sm(np.array([[1.0, 0.4], [0.1, 0.8]]))
    assert metric_nu107(W, W) == pytest.approx(0.0, abs=1e-14)
    assert metric_nu107(W * 3.0, W) == pytest.approx(0.0, abs=1e-13)
    assert metric_nu107(sm([[0.0, 1.0], [-1.0, 0.0]]), sm(np.eye(2))) == pytest.approx(2.0)
    with pytest.raises(BarrierError):
        metric_nu107(sm([[0.0, 1.0], [1.0, 0.0]]), sm(np.eye(2)))


def test_mu2_invariances_random(rng):
    T = random_positive(1000, rng)
    base = np.asarray(metric_mu2(sm(T)))
    assert np.all(base >= -1e-12)
    R = rot(rng.uniform(0, 2 * np.pi, len(T)))
    c = rng.uniform(0.1, 10, len(T))[:, None, None]
    assert np.allclose(metric_mu2(sm(R @ T)), base, rtol=1e-10, atol=1e-12)
    assert np.allclose(metric_mu2(sm(c * T)), base, rtol=1e-10, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(0, 2 * np.pi),
       st.floats(0.05, 20))
def test_mu2_invariances_hypothesis(entries, t, c):
    T = np.array(entries).reshape(2, 2)
    if np.linalg.det(T) < 1e-3:
        return
    v = metric_mu2(sm(T))
    assert v >= -1e-12
    assert metric_mu2(sm(rot(t) @ T)) == pytest.approx(v, rel=1e-9, abs=1e-12)
    assert metric_mu2(sm(c * T)) == pytest.approx(v, rel=1e-9, abs=1e-12)


def test_nu107_not_rotation_invariant(rng):
    W = sm(np.eye(2))
    A = np.array([[1.2, 0.3], [-0.1, 0.9]])
    assert abs(metric_nu107(sm(rot(0.7) @ A), W) - metric_nu107(sm(A), W)) > 1e-3


def test_weighted_metric_tri_target_zero():
    W = build_target(TargetSpec(), "tri")
    assert weighted_metric("mu2", W, W) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        weighted_metric("mu99", W, W)


def test_fmu_cartesian_optimum():
    mesh = make_cartesian(4, 4, 2)
    assert fmu_value(mesh, TargetSpec(), "mu2") == pytest.approx(0.0, abs=1e-12)
    assert fmu_value(mesh, TargetSpec(), "nu107") == pytest.approx(0.0, abs=1e-12)
    assert np.abs(fmu_grad(mesh, TargetSpec(), "mu2")).max() <= 1e-10


def test_fmu_positive_after_perturbation():
    mesh = make_cartesian(4, 4, 1)
    x = mesh.x.copy()
    x[6] += 0.05
    assert fmu_value(mesh, TargetSpec(), "mu2", x) > 0


def test_fmu_invalid_mesh_raises():
    mesh = make_cartesian(2, 2, 1)
    x = mesh.x.copy()
    x[4] += 0.8            # push the centre node past its neighbours
    with pytest.raises(BarrierError):
        fmu_value(mesh, TargetSpec(), "mu2", x)


@pytest.mark.parametrize("spec,metric", [(TargetSpec(), "mu2"), (TargetSpec(), "nu107"),
                                         (ORIENTED, "mu2"), (ORIENTED, "nu107")])
@pytest.mark.parametrize("elem_type", ["quad", "tri"])
def test_fmu_grad_matches_fd(spec, metric, elem_type):
    mesh = perturbed(make_cartesian(2, 2, 2, elem_type), 0.1, seed=7)
    g = fmu_grad(mesh, spec, metric)
    fd = central_fd(lambda x: fmu_value(mesh, spec, metric, x), mesh.x)
    assert np.max(np.abs(g - fd)) <= 1e-6 * np.max(np.abs(fd))


def test_fmu_grad_fd_many_meshes():
    mesh0 = make_cartesian(2, 2, 1)
    worst = 0.0
    for seed in range(50):
        mesh = perturbed(mesh0, 0.2, seed=seed)
        spec, metric = (TargetSpec(), "mu2") if seed % 2 else (ORIENTED, "nu107")
        g = fmu_grad(mesh, spec, metric)
        fd = central_fd(lambda x: fmu_value(mesh, spec, metric, x), mesh.x)
        worst = max(worst, np.max(np.abs(g - fd)) / np.max(np.abs(fd)))
    assert worst < 1e-6
