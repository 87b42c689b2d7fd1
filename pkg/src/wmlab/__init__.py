"""wmlab: a numerical laboratory for blow-up of co-rotational wave maps
into surfaces of revolution.

Pipeline: target geometry g -> ground state Q -> iterative approximate
blow-up solutions with controlled errors -> distorted Fourier theory of
the linearised operator -> full nonlinear evolution and rate extraction.
"""

__version__ = "0.1.0"

from .geometry import (SurfaceProfile, make_deformed_sphere, make_flat,
                       make_sphere, profile_from_key, validate_profile)
from .ground_state import GridSpec, GroundState, solve_ground_state, zero_mode

__all__ = [
    "__version__", "SurfaceProfile", "make_sphere", "make_deformed_sphere",
    "make_flat", "profile_from_key", "validate_profile", "GridSpec",
    "GroundState", "solve_ground_state", "zero_mode",
]
