"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; setting the
environment variable ``SSCOPS_PURE_PYTHON=1`` forces the pure fallback
(useful for debugging and for the kernel benchmark).
"""

import os

from . import _kernels_py

if os.environ.get("SSCOPS_PURE_PYTHON"):
    _impl = _kernels_py
    HAVE_COMPILED = False
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        HAVE_COMPILED = True
    except ImportError:
        _impl = _kernels_py
        HAVE_COMPILED = False

sylvester_triu = _impl.sylvester_triu
lti_propagate = _impl.lti_propagate
lti_propagate_forced = _impl.lti_propagate_forced


def backend_name() -> str:
    """Name of the active kernel backend: ``"compiled"`` or ``"python"``."""
    return "compiled" if HAVE_COMPILED else "python"
