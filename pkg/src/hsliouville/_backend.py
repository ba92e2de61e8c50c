"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
kernels take over.  Setting ``HSLIOUVILLE_BACKEND=numpy`` forces the
fallback (used by the benchmark and the backend-agreement tests).
"""

import os

from . import _pykernels

kernels = _pykernels
BACKEND = "numpy"

if os.environ.get("HSLIOUVILLE_BACKEND", "").lower() != "numpy":
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        kernels = _ckernels
        BACKEND = "cython"

NON, PRE, POST, INVALID = _pykernels.NON, _pykernels.PRE, _pykernels.POST, _pykernels.INVALID
