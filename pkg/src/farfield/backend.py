"""Selects the compiled core when available, else the numpy fallback.

Set FARFIELD_PURE_PYTHON=1 to force the fallback.
"""

import os

if os.environ.get("FARFIELD_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as core
else:
    try:
        from . import _speedups as core
    except ImportError:  # extension not built
        from . import _fallback as core

BACKEND = core.BACKEND
potential_radials = core.potential_radials
table_sum = core.table_sum
