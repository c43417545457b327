"""Backend switch for the hot kernels.

Set ``COPULASIM_DISABLE_NUMBA=1`` to force the vectorised numpy path; the
flag is read once at import time.
"""

from __future__ import annotations

import os

_flag = os.environ.get("COPULASIM_DISABLE_NUMBA", "").strip().lower()

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _flag not in ("1", "true", "yes")


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
