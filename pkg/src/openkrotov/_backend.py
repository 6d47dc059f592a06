"""Select the propagation kernels: compiled extension if importable, else numpy.

Set ``OPENKROTOV_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _pykernels

if os.environ.get("OPENKROTOV_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
    NAME = "python"
else:
    try:
        from . import _kernels as kernels
        NAME = "cython"
    except ImportError:  # extension not built
        kernels = _pykernels
        NAME = "python"

expm_apply = kernels.expm_apply
propagate = kernels.propagate
sweep = kernels.sweep
