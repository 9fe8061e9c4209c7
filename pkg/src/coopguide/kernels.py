"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
twin is used.  Set ``COOPGUIDE_KERNELS=python`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("COOPGUIDE_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

raycast_first_occupied = _impl.raycast_first_occupied
integrate_rays = _impl.integrate_rays
astar = _impl.astar

STATUS_FOUND = _pykernels.STATUS_FOUND
STATUS_UNREACHABLE = _pykernels.STATUS_UNREACHABLE
STATUS_BUDGET = _pykernels.STATUS_BUDGET

__all__ = [
    "BACKEND",
    "raycast_first_occupied",
    "integrate_rays",
    "astar",
    "STATUS_FOUND",
    "STATUS_UNREACHABLE",
    "STATUS_BUDGET",
]
