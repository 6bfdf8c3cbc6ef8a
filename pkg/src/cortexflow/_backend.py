"""Select the integration kernel at import time.

The compiled extension is preferred; set ``CORTEXFLOW_PURE_PYTHON=1`` to
force the NumPy implementation.
"""

import os

from . import _pykernels

python_advance = _pykernels.advance

try:
    if os.environ.get("CORTEXFLOW_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from ._kernels import advance as compiled_advance
except ImportError:
    compiled_advance = None

advance = compiled_advance if compiled_advance is not None else python_advance
BACKEND = "compiled" if compiled_advance is not None else "python"
