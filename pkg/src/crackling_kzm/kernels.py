"""Backend selection for the hot kernels.

The compiled extension is used when it imports; ``CRACKLING_KZM_BACKEND=python``
forces the numpy fallback. Both backends are always importable by name so tests
and the benchmark can compare them directly.
"""

from __future__ import annotations

import os

from . import _fallback

python = _fallback

try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("CRACKLING_KZM_BACKEND", "").lower() != "python":
    BACKEND = "cython"
    _active = compiled
else:
    BACKEND = "python"
    _active = _fallback

phi4_integrate = _active.phi4_integrate
betweenness = _active.betweenness
