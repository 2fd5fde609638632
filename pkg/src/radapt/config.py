"""INI run configuration.

Sections and keys (defaults in brackets)::

    [problem]   name (circular2d | inclined2d | beam | shearwall | custom)
                order [mesh order]     solution order p_u
                solver [pcg]           pcg | direct
                penalty [1e5]          Poisson Dirichlet penalty
                beta [20], k [20]      circular / inclined steepness
                load [1e-3 beam, 1 shearwall], plane [strain], traction [tangential]
                solution [sine]        custom: manufactured solution id
    [mesh]      nx [16 / beam 10], ny [nx / beam 4], n [24] (shear wall)
                order [2 / beam 1], type [quad], file (custom: native mesh path)
    [measure]   kind, alpha            (alpha required for circular2d and custom)
    [tmop]      metric [mu2 | nu107], target [ideal_shape | ideal_shape_oriented]
    [filter]    delta2 [0.005], geometry [frozen]
    [optimizer] method [mma], max_iters [300], grad_ratio_tol [1e-3],
                line_search [decrease], bounds_half_width [0.5], move [0.1]
    [output]    dir [out], vtk [yes]
    [study]     levels [1]
"""

import configparser
from dataclasses import dataclass, field

from .measures import MEASURES
from .optimizer import OptConfig
from .tmop import METRICS, TARGETS

PROBLEMS = ("circular2d", "inclined2d", "beam", "shearwall", "custom")
SECTIONS = ("problem", "mesh", "measure", "tmop", "filter", "optimizer", "output", "study")

_KEYS = {
    "problem": {"name", "order", "solver", "penalty", "beta", "k", "load", "plane",
                "traction", "solution"},
    "mesh": {"nx", "ny", "n", "order", "type", "file"},
    "measure": {"kind", "alpha"},
    "tmop": {"metric", "target"},
    "filter": {"delta2", "geometry"},
    "optimizer": {"method", "max_iters", "grad_ratio_tol", "line_search", "bounds_half_width",
                  "move", "max_halvings"},
    "output": {"dir", "vtk"},
    "study": {"levels"},
}


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


@dataclass
class RunConfig:
    problem: str
    mesh: dict
    p_u: int
    measure: str
    alpha: float
    metric: str
    target: str
    delta2: float
    filter_geometry: str
    optimizer: OptConfig
    out_dir: str
    vtk: bool = True
    levels: int = 1
    solver: str = "pcg"
    params: dict = field(default_factory=dict)


def _get(cp, sec, key, conv, default=None, required=False):
    if not cp.has_option(sec, key):
        if required:
            raise ConfigError(f"missing required key [{sec}] {key}")
        return default
    raw = cp.get(sec, key).strip()
    try:
        if conv is bool:
            return cp.getboolean(sec, key)
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: cannot parse {raw!r}") from None


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_config(text, source="<config>"):
    """Parse INI *text* into a validated :class:`RunConfig`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for sec in cp.sections():
        _check(sec in SECTIONS, f"unknown section [{sec}]")
        unknown = set(cp[sec]) - _KEYS[sec]
        _check(not unknown, f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")
    name = _get(cp, "problem", "name", str, required=True)
    _check(name in PROBLEMS, f"[problem] name must be one of {PROBLEMS}, got {name!r}")

    beam = name == "beam"
    mesh = {
        "nx": _get(cp, "mesh", "nx", int, 10 if beam else 16),
        "n": _get(cp, "mesh", "n", int, 24),
        "order": _get(cp, "mesh", "order", int, 1 if beam else 2),
        "type": _get(cp, "mesh", "type", str, "quad"),
        "file": _get(cp, "mesh", "file", str),
    }
    mesh["ny"] = _get(cp, "mesh", "ny", int, 4 if beam else mesh["nx"])
    _check(mesh["nx"] >= 1 and mesh["ny"] >= 1, "[mesh] nx and ny must be >= 1")
    _check(1 <= mesh["order"] <= 4, "[mesh] order must be in 1..4")
    _check(mesh["type"] in ("quad", "tri"), "[mesh] type must be quad or tri")
    _check(mesh["n"] >= 3 and mesh["n"] % 3 == 0, "[mesh] n must be a positive multiple of 3")
    if name == "custom":
        _check(mesh["file"], "custom problem needs [mesh] file")

    p_u = _get(cp, "problem", "order", int, mesh["order"])
    _check(1 <= p_u <= 4, "[problem] order must be in 1..4")
    solver = _get(cp, "problem", "solver", str, "pcg")
    _check(solver in ("pcg", "direct"), "[problem] solver must be pcg or direct")

    params = {}
    for key, conv in (("penalty", float), ("beta", float), ("k", float), ("load", float),
                      ("plane", str), ("traction", str), ("solution", str)):
        v = _get(cp, "problem", key, conv)
        if v is not None:
            params[key] = v
    if "penalty" in params:
        _check(params["penalty"] > 0, "[problem] penalty must be positive")
    if "plane" in params:
        _check(params["plane"] in ("strain", "stress"), "[problem] plane must be strain or stress")

    elastic = name in ("beam", "shearwall")
    default_measure = "load_functional" if elastic else "local_variation"
    kind = _get(cp, "measure", "kind", str, default_measure)
    _check(kind in MEASURES, f"[measure] kind must be one of {MEASURES}")
    _check(not (elastic and kind == "grad_continuity"),
           "grad_continuity is only available for Poisson problems")
    alpha_required = name in ("circular2d", "custom")
    alpha = _get(cp, "measure", "alpha", float, 1e6 if elastic else 4e4,
                 required=alpha_required)
    _check(alpha >= 0, "[measure] alpha must be non-negative")

    inclined = name == "inclined2d"
    metric = _get(cp, "tmop", "metric", str, "nu107" if inclined else "mu2")
    _check(metric in METRICS, f"[tmop] metric must be one of {tuple(METRICS)}")
    target = _get(cp, "tmop", "target", str,
                  "ideal_shape_oriented" if inclined else "ideal_shape")
    _check(target in TARGETS, f"[tmop] target must be one of {TARGETS}")
    _check(not (target == "ideal_shape_oriented" and name != "inclined2d"),
           "the oriented target is defined for inclined2d only")

    delta2 = _get(cp, "filter", "delta2", float, 0.005)
    _check(delta2 >= 0, "[filter] delta2 must be non-negative")
    geom = _get(cp, "filter", "geometry", str, "frozen")
    _check(geom in ("frozen", "current"), "[filter] geometry must be frozen or current")

    opt = {}
    for key, conv in (("method", str), ("max_iters", int), ("grad_ratio_tol", float),
                      ("line_search", str), ("bounds_half_width", float), ("move", float),
                      ("max_halvings", int)):
        v = _get(cp, "optimizer", key, conv)
        if v is not None:
            opt[key] = v
    try:
        optimizer = OptConfig(**opt)
    except ValueError as exc:
        raise ConfigError(f"[optimizer] {exc}") from None

    levels = _get(cp, "study", "levels", int, 1)
    _check(1 <= levels <= 4, "[study] levels must be in 1..4")
    return RunConfig(problem=name, mesh=mesh, p_u=p_u, measure=kind, alpha=alpha, metric=metric,
                     target=target, delta2=delta2, filter_geometry=geom, optimizer=optimizer,
                     out_dir=_get(cp, "output", "dir", str, "out"),
                     vtk=_get(cp, "output", "vtk", bool, True), levels=levels, solver=solver,
                     params=params)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))
