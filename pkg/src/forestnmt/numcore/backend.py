"""Kernel backend selection.

The compiled Cython kernels are used when the extension was built;
otherwise the numpy fallback is selected. ``FORESTNMT_BACKEND=py`` or
``=c`` forces the choice (forcing ``c`` without a built extension raises).
"""

import os

from . import numpy_kernels

_forced = os.environ.get("FORESTNMT_BACKEND", "").strip().lower()

if _forced in ("py", "numpy", "python"):
    kernels = numpy_kernels
elif _forced in ("c", "ext", "cython"):
    from . import _ckernels as kernels  # noqa: F401  (ImportError is the contract)
elif _forced == "":
    try:
        from . import _ckernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = numpy_kernels
else:
    raise RuntimeError(f"FORESTNMT_BACKEND={_forced!r}: expected 'py' or 'c'")


def backend_name() -> str:
    """Name of the active kernel backend: 'cython' or 'numpy'."""
    return kernels.NAME
