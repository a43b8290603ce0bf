"""Photodiode I-V regression engines, a truncated-Fock simulator and diode
physics extraction, backed by the C++ core."""

from ._diodeq import *  # noqa: F401,F403
from ._diodeq import __version__  # noqa: F401
