"""Hot loops, compiled when available.

Set ``RALPDE_PURE_PYTHON=1`` to force the pure-Python implementations.
"""
import os

if os.environ.get("RALPDE_PURE_PYTHON"):
    from ._cd_py import cd_path
    COMPILED = False
else:
    try:
        from ._cd import cd_path
        COMPILED = True
    except ImportError:  # extension not built
        from ._cd_py import cd_path
        COMPILED = False

__all__ = ["cd_path", "COMPILED"]
