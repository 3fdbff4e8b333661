"""Anisotropic Hardy and Campanato machinery on uniform grids.

Expansive dilations and their ellipsoid balls, ball quasi-Banach function
space norms, maximal functions, Littlewood-Paley square functions,
Campanato-type norms, atoms, tents and Carleson measures.
"""
from .errors import *  # noqa: F401,F403
from .dilation import *  # noqa: F401,F403
from .gridfn import *  # noqa: F401,F403
from .spaces import *  # noqa: F401,F403
from .lpaley import *  # noqa: F401,F403
from .maximal import *  # noqa: F401,F403
from .campanato import *  # noqa: F401,F403
from .atoms import *  # noqa: F401,F403
from .carleson import *  # noqa: F401,F403

__version__ = "0.1.0"
