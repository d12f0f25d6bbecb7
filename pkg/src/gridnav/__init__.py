"""gridnav: 2D gridworld navigation with an explore/verify/exploit switch.

The package simulates instance-goal navigation in planar gridworlds: an
agent with a range/label sensor builds a semantic map online, decides
between exploring, moving closer to double-check a candidate object, and
committing to a confirmed goal, and is scored with Success and SPL
against ground-truth shortest paths.
"""

__version__ = "0.1.0"

from .errors import GridNavError

__all__ = ["GridNavError", "__version__"]
