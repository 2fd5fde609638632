"""PDE-constrained r-adaptivity of high-order 2D finite element meshes."""

import os

# cap BLAS threads before numpy loads; all element kernels are single-threaded
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, os.environ.get("RADAPT_THREADS", "1"))

from .kernels import BACKEND
from .mesh import Mesh, InvalidMeshError, make_cartesian, min_det_jacobian
from .fespace import FieldVector, Space
from .physics import ProblemDef, solve_forward

__version__ = "0.1.0"

__all__ = ["BACKEND", "Mesh", "InvalidMeshError", "make_cartesian", "min_det_jacobian",
           "FieldVector", "Space", "ProblemDef", "solve_forward", "__version__"]
