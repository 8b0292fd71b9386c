"""Safety certification of perception-based lane-world RL policies."""

from safecert._core import *  # noqa: F401,F403
from safecert._core import __doc__  # noqa: F401

__version__ = "0.1.0"
