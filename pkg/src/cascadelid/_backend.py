"""Select the compiled kernels when importable, else the pure-Python ones.

Set ``CASCADELID_PURE=1`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("CASCADELID_PURE"):
    kernels = _pykernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _pykernels

NAME = "cython" if kernels is not _pykernels else "python"
