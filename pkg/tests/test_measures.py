import numpy as np
import pytest

from radapt import dual as ad
from radapt.fespace import FieldVector, Space, interpolate, quadrature_values
from radapt.measures import (MEASURES, fp_grad_continuity, fp_load_functional,
                             fp_local_variation, gradient_space, measure_partials,
                             measure_value, project_gradient)
from radapt.mesh import Mesh, make_cartesian
from radapt.physics import ProblemDef, assemble

from conftest import central_fd, perturbed

POISSON = ProblemDef(kind="poisson", source=lambda x, y: 1 + x * y,
                     dirichlet=lambda x, y: x + ad.sin(y), dirichlet_attrs={1, 2, 3, 4})
ELASTIC = ProblemDef(kind="elasticity", dirichlet_attrs={4}, neumann_attrs={3},
                     neumann=lambda x, y: (0 * x, -1 + 0 * x), source=lambda x, y: (x, y))


def scalar(space, f):
    return interpolate(space, lambda X: f(X[:, 0], X[:, 1]))


def test_local_variation_examples():
    one = make_cartesian(1, 1, 1)
    assert fp_local_variation(scalar(Space(one, 1), lambda x, y: 5 + 0 * x)) == pytest.approx(0, abs=1e-12)
    assert fp_local_variation(scalar(Space(one, 1), lambda x, y: x)) == pytest.approx(1 / 12)
    two = make_cartesian(2, 1, 1)
    assert fp_local_variation(scalar(Space(two, 1), lambda x, y: x)) == pytest.approx(1 / 48)


def test_load_functional_zero_data():
    mesh = make_cartesian(2, 2, 2)
    prob = ProblemDef(kind="poisson", dirichlet_attrs={1, 2, 3, 4})
    u = scalar(Space(mesh, 2), lambda x, y: x * y)
    assert fp_load_functional(u, prob) == 0.0


def test_load_functional_dfdu_is_negated_load(rng):
    mesh = make_cartesian(3, 3, 2)
    space = Space(mesh, 2)
    u = FieldVector(space, rng.standard_normal(space.ndofs))
    dfdu, dfdg, _ = measure_partials("load_functional", u, problem=POISSON)
    F = assemble(POISSON, space).F
    assert dfdg is None
    assert np.allclose(dfdu, -F, rtol=0, atol=1e-12 * np.abs(F).max())
    assert fp_load_functional(u, POISSON) == pytest.approx(-F @ u.coeffs)


def test_local_variation_constant_has_zero_partial():
    space = Space(make_cartesian(3, 3, 2), 2)
    dfdu, _, _ = measure_partials("local_variation", scalar(space, lambda x, y: 3 + 0 * x))
    assert np.abs(dfdu).max() <= 1e-13


def test_project_gradient_examples():
    mesh = perturbed(make_cartesian(3, 3, 2), 0.1)
    space = Space(mesh, 2)
    g = project_gradient(scalar(space, lambda x, y: 2 * x - 3 * y))
    n = space.n_scalar
    assert np.allclose(g.coeffs[:n], 2.0, atol=1e-10)
    assert np.allclose(g.coeffs[n:], -3.0, atol=1e-10)
    g = project_gradient(scalar(Space(make_cartesian(3, 3, 2), 2), lambda x, y: x * x))
    X = g.space.dof_points()
    assert np.allclose(g.coeffs[:n], 2 * X[:, 0], atol=1e-10)
    with pytest.raises(ValueError):
        project_gradient(FieldVector(Space(mesh, 2, 2)))


def test_grad_continuity_examples():
    mesh = make_cartesian(3, 3, 2)
    u = scalar(Space(mesh, 2), lambda x, y: 1 + x - 2 * y)
    assert fp_grad_continuity(u, project_gradient(u)) == pytest.approx(0, abs=1e-18)
    two = make_cartesian(2, 1, 1)
    hat = scalar(Space(two, 1), lambda x, y: 1 - np.abs(2 * x - 1))
    assert fp_grad_continuity(hat, project_gradient(hat)) > 1e-3


def test_grad_continuity_matches_quadrature(rng):
    mesh = perturbed(make_cartesian(3, 3, 2), 0.1)
    space = Space(mesh, 2)
    u = FieldVector(space, rng.standard_normal(space.ndofs))
    g = project_gradient(u)
    from radapt.quadrature import quad_rule
    ex = space.quad_exactness()
    rule = quad_rule("quad", ex)
    _, gu, geo = quadrature_values(u, ex)
    gq, _, _ = quadrature_values(g, ex)
    ref = np.einsum("q,eq,eqc->", rule.weights, geo.detA, (gu[:, :, 0, :] - gq) ** 2)
    assert fp_grad_continuity(u, g) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("kind", MEASURES)
def test_permutation_invariance(kind):
    mesh = perturbed(make_cartesian(3, 3, 2), 0.1)
    perm = np.random.default_rng(5).permutation(mesh.n_elements)
    shuffled = Mesh(mesh.order, mesh.elem_type, mesh.x, mesh.elements[perm], mesh.boundary)
    f = lambda x, y: ad.sin(3 * x) * ad.exp(y)  # noqa: E731
    a = measure_value(kind, scalar(Space(mesh, 2), f), problem=POISSON)
    b = measure_value(kind, scalar(Space(shuffled, 2), f), problem=POISSON)
    assert a == pytest.approx(b, rel=1e-12)


def test_unknown_kind():
    u = FieldVector(Space(make_cartesian(1, 1, 1), 1))
    with pytest.raises(ValueError):
        measure_value("energy", u)
    with pytest.raises(ValueError):
        measure_partials("grad_continuity", u, problem=ELASTIC)


@pytest.mark.parametrize("prob,kind", [(POISSON, k) for k in MEASURES]
                         + [(ELASTIC, k) for k in MEASURES[:2]])
def test_partials_match_fd(prob, kind, rng):
    mesh = perturbed(make_cartesian(2, 2, 2), 0.1, seed=2)
    space = Space(mesh, 2, prob.vdim)
    u = FieldVector(space, rng.standard_normal(space.ndofs))
    g = project_gradient(u) if kind == "grad_continuity" else None
    dfdu, dfdg, dfdx = measure_partials(kind, u, g, prob)

    def rel(a, b):
        return np.abs(a - b).max() / np.abs(b).max()

    fu = central_fd(lambda c: measure_value(kind, FieldVector(space, c), g, prob), u.coeffs)
    assert rel(dfdu, fu) < 1e-5

    def at_x(x):
        sp = space.with_mesh(mesh.with_coords(x))
        gx = None if g is None else FieldVector(gradient_space(sp), g.coeffs)
        return measure_value(kind, FieldVector(sp, u.coeffs), gx, prob)

    assert rel(dfdx, central_fd(at_x, mesh.x)) < 1e-5
    if dfdg is not None:
        fg = central_fd(lambda c: fp_grad_continuity(u, FieldVector(g.space, c)), g.coeffs)
        gr = FieldVector(g.space, rng.standard_normal(g.space.ndofs))
        _, dfdg_r, _ = measure_partials(kind, u, gr, prob)
        fr = central_fd(lambda c: fp_grad_continuity(u, FieldVector(g.space, c)), gr.coeffs)
        assert rel(dfdg_r, fr) < 1e-5
        assert np.abs(dfdg - fg).max() < 1e-6     # near zero at the projection
