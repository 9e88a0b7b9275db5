"""Timing and shape sensitivity of limit cycles with sliding components."""
from .errors import *  # noqa: F401,F403
from .filippov import (
    FilippovSystem, HardBoundary, InteriorField, Interior, Mode, Perturbation, Sliding,
    SurfaceRole, TransversalSurface, in_sliding_region, liftoff_indicator,
    nondegeneracy_at_liftoff, periodic_difference, sliding_field,
)
from .integrator import (
    EventKind, EventRecord, LimitCycle, TimeRescaling, TimingRegion, displacement,
    find_limit_cycle, integrate, perturbed_cycle, region_window, rescale_time,
)
from .sensitivity import (
    fundamental_matrix, iprc, isrc, isrc_offset_fit, jump_matrix, ltrc, period_shift_T1,
    reversed_jump_matrix, saltation_matrix, shape_error, variational_forward,
)

__version__ = "0.1.0"
