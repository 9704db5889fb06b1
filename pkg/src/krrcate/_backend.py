"""Pick the Gram-kernel implementation at import time.

The compiled extension is used when it was built; ``KRRCATE_PURE_PYTHON=1``
forces the numpy fallback.
"""

import os

from . import _gram_py

if os.environ.get("KRRCATE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _gram_py
    BACKEND = "python"
else:
    try:
        from . import _gram_ext as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _gram_py
        BACKEND = "python"

matern_gram = _impl.matern_gram
rbf_gram = _impl.rbf_gram
sobolev_gram = _impl.sobolev_gram

__all__ = ["BACKEND", "matern_gram", "rbf_gram", "sobolev_gram"]
