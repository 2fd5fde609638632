"""Problem gallery: analytic Poisson cases, cantilever beam and shear wall.

Every analytic callback is built from :mod:`radapt.dual` functions so it can
be evaluated on dual coordinates during shape differentiation.
"""

from dataclasses import dataclass, field

import numpy as np

from . import dual as ad
from .mesh import QUAD, box_attr_fn, make_cartesian, remove_elements
from .physics import ProblemDef

BOX = (1, 2, 3, 4)


@dataclass
class Case:
    """A problem definition plus the mesh it is posed on and run defaults."""

    name: str
    problem: ProblemDef
    mesh: object
    order: int
    exact: object = None          # (n, 2) points -> (n,) values
    exact_grad: object = None     # (n, 2) points -> (n, 2)
    defaults: dict = field(default_factory=dict)


# ---- circular shock -------------------------------------------------------
@dataclass
class CircularShock:
    """``u = atan(beta (r - rc))`` with ``r`` measured from ``(xc, yc)``."""

    beta: float = 20.0
    rc: float = 0.7
    xc: float = -0.05
    yc: float = -0.05

    def _r(self, x, y):
        dx, dy = x - self.xc, y - self.yc
        return ad.sqrt(dx * dx + dy * dy)

    def u(self, x, y):
        return ad.atan(self.beta * (self._r(x, y) - self.rc))

    def source(self, x, y):
        r = self._r(x, y)
        s = self.beta * (r - self.rc)
        d1 = self.beta / (1.0 + s * s)
        d2 = -2.0 * self.beta ** 2 * s / ((1.0 + s * s) * (1.0 + s * s))
        return -(d2 + d1 / r)

    def grad(self, x, y):
        r = self._r(x, y)
        s = self.beta * (r - self.rc)
        d1 = self.beta / (1.0 + s * s)
        return d1 * (x - self.xc) / r, d1 * (y - self.yc) / r


# ---- inclined shock -------------------------------------------------------
@dataclass
class InclinedShock:
    """``u = atan(k (x - 0.5 - 0.2 (y - 0.5)))``."""

    k: float = 20.0

    def _s(self, x, y):
        return self.k * (x - 0.5 - 0.2 * (y - 0.5))

    def u(self, x, y):
        return ad.atan(self._s(x, y))

    def source(self, x, y):
        s = self._s(x, y)
        g2 = -2.0 * self.k ** 2 * s / ((1.0 + s * s) * (1.0 + s * s))
        return -1.04 * g2

    def grad(self, x, y):
        s = self._s(x, y)
        g1 = self.k / (1.0 + s * s)
        return g1, -0.2 * g1


@dataclass
class SineSolution:
    """``u = sin(pi x) sin(pi y)``; smooth reference solution."""

    def u(self, x, y):
        return ad.sin(np.pi * x) * ad.sin(np.pi * y)

    def source(self, x, y):
        return 2.0 * np.pi ** 2 * ad.sin(np.pi * x) * ad.sin(np.pi * y)

    def grad(self, x, y):
        return (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
                np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))


@dataclass
class LinearSolution:
    """``u = 1 + 2x + 3y``; reproduced exactly by every order."""

    def u(self, x, y):
        return 1.0 + 2.0 * x + 3.0 * y

    def source(self, x, y):
        return 0.0 * x

    def grad(self, x, y):
        return 2.0 + 0.0 * x, 3.0 + 0.0 * y


SOLUTIONS = {"circular": CircularShock, "inclined": InclinedShock, "sine": SineSolution,
             "linear": LinearSolution}


def _point_fns(sol):
    def exact(X):
        return np.asarray(sol.u(X[:, 0], X[:, 1]), dtype=float)

    def exact_grad(X):
        gx, gy = sol.grad(X[:, 0], X[:, 1])
        return np.stack([np.broadcast_to(gx, X[:, 0].shape), np.broadcast_to(gy, X[:, 0].shape)],
                        axis=1)

    return exact, exact_grad


def poisson_problem(sol, attrs=BOX, penalty=1e5, name="", **kw):
    """Poisson problem with manufactured solution *sol* and penalty Dirichlet data."""
    exact, exact_grad = _point_fns(sol)
    return ProblemDef(kind="poisson", source=sol.source, dirichlet=sol.u, dirichlet_attrs=attrs,
                      penalty=penalty, exact=exact, exact_grad=exact_grad, name=name, **kw)


def _poisson_case(name, sol, nx, ny, p, p_u, elem_type, defaults, penalty=1e5):
    mesh = make_cartesian(nx, ny, p, elem_type)
    prob = poisson_problem(sol, penalty=penalty, name=name)
    return Case(name, prob, mesh, p_u or p, prob.exact, prob.exact_grad, defaults)


def circular2d(nx=16, ny=None, p=2, p_u=None, elem_type=QUAD, beta=20.0, penalty=1e5):
    sol = CircularShock(beta=beta)
    return _poisson_case("circular2d", sol, nx, ny or nx, p, p_u, elem_type,
                         {"metric": "mu2", "target": "ideal_shape", "delta2": 0.005},
                         penalty)


def inclined2d(nx=16, ny=None, p=2, p_u=None, elem_type=QUAD, k=20.0, penalty=1e5):
    sol = InclinedShock(k=k)
    return _poisson_case("inclined2d", sol, nx, ny or nx, p, p_u, elem_type,
                         {"metric": "nu107", "target": "ideal_shape_oriented",
                          "measure": "local_variation", "delta2": 0.005},
                         penalty)


def beam(nx=10, ny=4, p=1, p_u=None, elem_type=QUAD, load=1e-3, plane="strain",
         young=1.0, poisson_ratio=0.3, length=1.0, height=0.1):
    """Cantilever clamped on the left, uniform downward traction on the top."""
    mesh = make_cartesian(nx, ny, p, elem_type, domain=((0.0, length), (0.0, height)))
    prob = ProblemDef(kind="elasticity", dirichlet_attrs={4}, neumann_attrs={3},
                      neumann=lambda x, y: (0.0 * x, -load + 0.0 * x), young=young,
                      poisson_ratio=poisson_ratio, plane=plane, name="beam")
    return Case("beam", prob, mesh, p_u or p,
                defaults={"measure": "load_functional", "alpha": 1e6, "metric": "mu2",
                          "target": "ideal_shape", "delta2": 0.005})


def shearwall_mesh(n=24, p=2, elem_type=QUAD):
    """``[0,1]^2`` minus the middle third square; ``n`` must be divisible by 3.

    Attributes: 1 bottom, 2 right, 3 top, 4 left, 5 hole.
    """
    if n % 3:
        raise ValueError("shear wall resolution must be divisible by 3")
    full = make_cartesian(n, n, p, elem_type)
    pts = full.points
    centers = pts[full.vertex_elements].mean(axis=1)
    hole = np.all((centers > 1.0 / 3.0) & (centers < 2.0 / 3.0), axis=1)
    return remove_elements(full, ~hole, box_attr_fn(((0.0, 1.0), (0.0, 1.0))))


def shearwall(n=24, p=2, p_u=None, elem_type=QUAD, load=1.0, traction="tangential",
              plane="strain", young=1.0, poisson_ratio=0.3, clamp=(1,), loaded=(3,)):
    """Square wall with a square hole: clamped bottom, traction on the top.

    ``traction`` is ``"tangential"`` (``+x``) or ``"normal"`` (``-y``).
    """
    if traction == "tangential":
        t = lambda x, y: (load + 0.0 * x, 0.0 * x)  # noqa: E731
    elif traction == "normal":
        t = lambda x, y: (0.0 * x, -load + 0.0 * x)  # noqa: E731
    else:
        raise ValueError("traction must be 'tangential' or 'normal'")
    mesh = shearwall_mesh(n, p, elem_type)
    prob = ProblemDef(kind="elasticity", dirichlet_attrs=set(clamp), neumann_attrs=set(loaded),
                      neumann=t, young=young, poisson_ratio=poisson_ratio, plane=plane,
                      name="shearwall")
    return Case("shearwall", prob, mesh, p_u or p,
                defaults={"measure": "load_functional", "alpha": 1e6, "metric": "mu2",
                          "target": "ideal_shape", "delta2": 0.005})


def custom(mesh, solution="sine", p_u=None, penalty=1e5, **params):
    """Poisson problem with a named manufactured solution on a user mesh."""
    if solution not in SOLUTIONS:
        raise ValueError(f"unknown manufactured solution {solution!r}; "
                         f"expected one of {sorted(SOLUTIONS)}")
    sol = SOLUTIONS[solution](**params)
    attrs = tuple(sorted(set(mesh.boundary[:, 1].tolist()))) or BOX
    prob = poisson_problem(sol, attrs=attrs, penalty=penalty, name="custom")
    return Case("custom", prob, mesh, p_u or mesh.order, prob.exact, prob.exact_grad,
                {"metric": "mu2", "target": "ideal_shape", "delta2": 0.005})


GALLERY = {"circular2d": circular2d, "inclined2d": inclined2d, "beam": beam,
           "shearwall": shearwall}
