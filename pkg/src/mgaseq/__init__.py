"""Low-thrust multiple-gravity-assist transfer optimization.

An inner loop shapes and scores individual trajectories (hodographic
shaping plus an island-model genetic algorithm); an outer loop searches the
combinatorial tree of flyby sequences and ranks them by blended delta-v
fitness.
"""

from .ephemeris import AU, SUN_MU, Body, HelioState, Planet, builtin_bodies
from .ltto import Sequence
from .rtba import RtbaConfig, run_rtba

__all__ = [
    "AU",
    "SUN_MU",
    "Body",
    "HelioState",
    "Planet",
    "RtbaConfig",
    "Sequence",
    "builtin_bodies",
    "run_rtba",
]

__version__ = "0.1.0"
