"""Backend selection for the chunk kernel.

The compiled extension is used when it imports; otherwise the numpy version.
Set ``BUBBLERED_KERNEL=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernel_py

BACKEND = "python"
accumulate = _kernel_py.accumulate

if os.environ.get("BUBBLERED_KERNEL", "").lower() != "python":
    try:
        from . import _kernel  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        accumulate = _kernel.accumulate
        BACKEND = "compiled"

__all__ = ["accumulate", "BACKEND"]
