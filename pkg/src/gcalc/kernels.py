"""Hot loops, compiled when the extension is built.

The Cython module is used when importable; otherwise (or when
``GCALC_PURE_PYTHON=1``) the numpy implementation is selected.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("GCALC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py

gheat_steps = _impl.gheat_steps
lattice_steps = _impl.lattice_steps

__all__ = ["BACKEND", "gheat_steps", "lattice_steps"]
