"""Python bindings for the streetstage core.

Angles are radians throughout, like the C++ API; ``deg`` and ``rad`` are
small conveniences. Images are HxWxC uint8 numpy arrays.
"""

import math

from ._core import *  # noqa: F401,F403
from ._core import Error


def deg(radians):
    return math.degrees(radians)


def rad(degrees):
    return math.radians(degrees)


__all__ = [n for n in dir() if not n.startswith("_")]
