"""Select the compiled core when it is importable, else the numpy fallback.

Set ``GFRAC_PURE_PYTHON=1`` to force the fallback.
"""

import os

NAME = "python"
if os.environ.get("GFRAC_PURE_PYTHON") != "1":
    try:
        from ._core import l1_march, resolvent_sum  # noqa: F401
        NAME = "cython"
    except ImportError:
        pass
if NAME == "python":
    from ._pycore import l1_march, resolvent_sum  # noqa: F401

__all__ = ["NAME", "l1_march", "resolvent_sum"]
