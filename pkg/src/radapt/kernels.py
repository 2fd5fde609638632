"""Backend selection for the hot kernels.

The compiled extension ``radapt._kernels`` is used when it imports; the
numpy implementations in :mod:`radapt._fallback` are used otherwise, or
when ``RADAPT_PURE_PYTHON=1`` is set in the environment.
"""

import os

from . import _fallback

BACKEND = "python"
pcg = _fallback.pcg
tmop_eval = _fallback.tmop_eval

if os.environ.get("RADAPT_PURE_PYTHON", "0") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "compiled"
        pcg = _kernels.pcg
        tmop_eval = _kernels.tmop_eval


def use_backend(name):
    """Switch backend at runtime (``"compiled"`` or ``"python"``); returns the previous one."""
    global BACKEND, pcg, tmop_eval
    previous = BACKEND
    if name == "compiled":
        from . import _kernels
        pcg, tmop_eval = _kernels.pcg, _kernels.tmop_eval
    elif name == "python":
        pcg, tmop_eval = _fallback.pcg, _fallback.tmop_eval
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    return previous
