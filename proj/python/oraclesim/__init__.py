"""Python surface for the oraclesim core.

Everything useful lives in the compiled extension; this package just
re-exports it under a stable name.
"""

from oraclesim import _core
from oraclesim._core import *  # noqa: F401,F403

__all__ = [name for name in dir(_core) if not name.startswith("_")]
