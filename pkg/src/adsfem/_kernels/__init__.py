"""CSR matvec kernel selection.

The compiled extension is used when it was built; otherwise the numpy
fallback takes over transparently.  Set ``ADSFEM_PURE_PYTHON=1`` to force
the fallback even when the extension is available.
"""

import os

from . import _csr_py

_FORCE_PY = os.environ.get("ADSFEM_PURE_PYTHON", "") not in ("", "0")

if _FORCE_PY:
    csr_matvec = _csr_py.csr_matvec
    BACKEND = "python"
else:
    try:
        from ._csr_cy import csr_matvec

        BACKEND = "cython"
    except ImportError:
        csr_matvec = _csr_py.csr_matvec
        BACKEND = "python"


def available_backends():
    """Map backend name -> matvec callable for every importable backend."""
    backends = {"python": _csr_py.csr_matvec}
    try:
        from ._csr_cy import csr_matvec as cy_matvec

        backends["cython"] = cy_matvec
    except ImportError:
        pass
    return backends
