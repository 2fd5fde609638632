"""Native ASCII mesh files and legacy VTK output.

Native format::

    radapt-mesh v1 dim=2 order=<p> type=<quad|tri>
    nodes <N>
    <x> <y>                      (N lines)
    elements <E>
    <n_1> ... <n_Np>             (E lines, lattice order)
    boundary <B>
    <node> <attr> <normal-axis>  (B lines)

Blank lines and lines starting with ``#`` are ignored.  Coordinates are
written with 17 significant digits so a write/read cycle is exact.

VTK output subdivides each order-``p`` element into ``p^2`` linear cells on
its nodal lattice (VTK_QUAD = 9, VTK_TRIANGLE = 5).
"""

import os
import re

import numpy as np

from .mesh import QUAD, TRI, Mesh, ref_basis

VTK_CELL = {QUAD: 9, TRI: 5}
_HEADER = re.compile(r"^radapt-mesh\s+v1\s+dim=(\d+)\s+order=(\d+)\s+type=(\w+)\s*$")


class MeshFormatError(ValueError):
    """Malformed native mesh file; ``lineno`` is 1-based (0 if unknown)."""

    def __init__(self, msg, lineno=0, path=None):
        where = f"{path or '<mesh>'}:{lineno}: " if lineno else ""
        super().__init__(where + msg)
        self.lineno = lineno
        self.path = path


def write_native(mesh, path):
    """Write *mesh* (its current coordinates) in the native format."""
    pts = mesh.points
    with open(path, "w") as fh:
        fh.write(f"radapt-mesh v1 dim=2 order={mesh.order} type={mesh.elem_type}\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for x, y in pts:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for row in mesh.elements:
            fh.write(" ".join(map(str, row.tolist())) + "\n")
        fh.write(f"boundary {len(mesh.boundary)}\n")
        for node, attr, axis in mesh.boundary:
            fh.write(f"{node} {attr} {axis}\n")


def _lines(text):
    for k, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield k, s


def read_native(path):
    """Read a native mesh file; raises :class:`MeshFormatError` with line numbers."""
    with open(path) as fh:
        text = fh.read()
    return parse_native(text, path=path)


def parse_native(text, path=None):
    it = _lines(text)

    def next_line(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshFormatError(f"unexpected end of file, expected {what}", 0, path) from None

    k, line = next_line("header")
    m = _HEADER.match(line)
    if not m:
        raise MeshFormatError("bad header, expected 'radapt-mesh v1 dim=<d> order=<p> "
                              "type=<quad|tri>'", k, path)
    dim, order, etype = int(m.group(1)), int(m.group(2)), m.group(3)
    if dim != 2:
        raise MeshFormatError(f"unsupported dimension {dim}", k, path)
    if etype not in (QUAD, TRI):
        raise MeshFormatError(f"unsupported element type {etype!r}", k, path)
    if not 1 <= order <= 4:
        raise MeshFormatError(f"unsupported order {order}", k, path)
    npe = ref_basis(etype, order).n

    def section(name):
        k, line = next_line(f"'{name} <count>'")
        parts = line.split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshFormatError(f"expected '{name} <count>', got {line!r}", k, path)
        try:
            n = int(parts[1])
        except ValueError:
            raise MeshFormatError(f"bad {name} count {parts[1]!r}", k, path) from None
        if n < 0:
            raise MeshFormatError(f"negative {name} count", k, path)
        return n

    def rows(n, width, conv, what):
        out = []
        for _ in range(n):
            k, line = next_line(what)
            parts = line.split()
            if len(parts) != width:
                raise MeshFormatError(f"expected {width} values for {what}, got {len(parts)}",
                                      k, path)
            try:
                out.append([conv(p) for p in parts])
            except ValueError:
                raise MeshFormatError(f"cannot parse {what}: {line!r}", k, path) from None
            out[-1].append(k)
        return out

    nn = section("nodes")
    nodes = rows(nn, 2, float, "node coordinates")
    ne = section("elements")
    elems = rows(ne, npe, int, "element connectivity")
    nb = section("boundary")
    bdr = rows(nb, 3, int, "boundary row")
    for row in elems:
        ids = row[:-1]
        if min(ids) < 0 or max(ids) >= nn:
            raise MeshFormatError("element node id out of range", row[-1], path)
        if len(set(ids)) != len(ids):
            raise MeshFormatError("repeated node id within an element", row[-1], path)
    for row in bdr:
        if not 0 <= row[0] < nn:
            raise MeshFormatError("boundary node id out of range", row[-1], path)
        if row[2] not in (-1, 0, 1):
            raise MeshFormatError("normal axis must be -1, 0 or 1", row[-1], path)
    extra = next(it, None)
    if extra is not None:
        raise MeshFormatError("trailing content after boundary section", extra[0], path)
    pts = np.array([r[:2] for r in nodes], dtype=float).reshape(-1, 2)
    x = np.concatenate([pts[:, 0], pts[:, 1]])
    E = np.array([r[:-1] for r in elems], dtype=np.int64).reshape(-1, npe)
    B = np.array([r[:-1] for r in bdr], dtype=np.int64).reshape(-1, 3)
    return Mesh(order, etype, x, E, B)


# ---- VTK ------------------------------------------------------------------
def lattice_cells(elem_type, order):
    """Local node ids of the ``order^2`` linear sub-cells of one element."""
    basis = ref_basis(elem_type, order)
    idx = {tuple(v): k for k, v in enumerate(basis.lattice.tolist())}
    p = order
    cells = []
    if elem_type == QUAD:
        for j in range(p):
            for i in range(p):
                cells.append([idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]])
    else:
        for j in range(p):
            for i in range(p - j):
                cells.append([idx[i, j], idx[i + 1, j], idx[i, j + 1]])
                if i + j <= p - 2:
                    cells.append([idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]])
    return np.array(cells, dtype=np.int64)


def _write_vtk(path, pts, cells, ctype, title, point_data):
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title[:255].replace("\n", " ") + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        for x, y in pts:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        nv = cells.shape[1]
        fh.write(f"CELLS {len(cells)} {len(cells) * (nv + 1)}\n")
        for c in cells:
            fh.write(f"{nv} " + " ".join(map(str, c.tolist())) + "\n")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        fh.write("\n".join([str(ctype)] * len(cells)) + ("\n" if len(cells) else ""))
        if point_data:
            fh.write(f"POINT_DATA {len(pts)}\n")
            for name, vals in point_data.items():
                vals = np.asarray(vals, dtype=float)
                if vals.ndim == 1:
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    fh.write("\n".join(f"{v:.17g}" for v in vals) + "\n")
                else:
                    fh.write(f"VECTORS {name} double\n")
                    for v in vals:
                        fh.write(f"{v[0]:.17g} {v[1]:.17g} 0\n")


def write_vtk(mesh, path, fields=None, title="radapt mesh"):
    """Legacy ASCII VTK of *mesh*, optionally with finite element fields.

    ``fields`` maps names to :class:`~radapt.fespace.FieldVector` objects,
    all on one space.  Without fields the mesh nodes are the VTK points;
    with fields the points are the field's DOF points (so the subdivision
    follows the solution order) and values are written as point data.
    """
    fields = fields or {}
    spaces = {id(f.space): f.space for f in fields.values()}
    if len(spaces) > 1:
        orders = {(s.order, s.n_scalar) for s in spaces.values()}
        if len(orders) > 1:
            raise ValueError("all fields written to one VTK file must share a space")
    if fields:
        space = next(iter(fields.values())).space
        if space.mesh.n_elements != mesh.n_elements:
            raise ValueError("field space does not match the mesh")
        space = space.with_mesh(mesh)
        pts = space.dof_points()
        order, dofs = space.order, space.dofs
    else:
        pts, order, dofs = mesh.points, mesh.order, mesh.elements
    local = lattice_cells(mesh.elem_type, order)
    cells = dofs[:, local].reshape(-1, local.shape[1])
    data = {}
    for name, f in fields.items():
        c = f.coeffs.reshape(f.space.vdim, -1)
        data[name] = c[0] if f.space.vdim == 1 else c.T
    _write_vtk(path, pts, cells, VTK_CELL[mesh.elem_type], title, data)


def read_vtk_counts(path):
    """``(n_points, n_cells, cell_types)`` of a legacy VTK file (for checks)."""
    with open(path) as fh:
        toks = fh.read().split()
    i = toks.index("POINTS")
    npts = int(toks[i + 1])
    j = toks.index("CELL_TYPES")
    nc = int(toks[j + 1])
    types = np.array(toks[j + 2:j + 2 + nc], dtype=int)
    return npts, nc, types


def mesh_io(mesh, path, mode):
    """Dispatch: ``read_native`` returns a mesh; the write modes return None."""
    if mode == "read_native":
        return read_native(path)
    if mode == "write_native":
        return write_native(mesh, path)
    if mode == "write_vtk":
        return write_vtk(mesh, path)
    raise ValueError(f"unknown mesh_io mode {mode!r}")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
