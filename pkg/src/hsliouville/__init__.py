"""Two hard spheres: collision geometry, flows and weak-form checks."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .distribution import (
    BumpDatum,
    OneParticleDatum,
    make_bump,
    make_chaotic_datum,
    marginal_one,
    mild_solution,
    mild_values,
)
from .errors import (
    AsymmetricDatum,
    CornerHit,
    Degenerate,
    InvalidState,
    NotInCone,
    ParseError,
    SupportWarning,
    UnsupportedRegion,
    ValidationError,
)
from .flow import SheetPoint, doubled_flow, fold, hard_sphere_flow, trajectory
from .geometry import (
    ConeClass,
    PhasePoint,
    classify_velocity,
    collision_time,
    scattering_matrix,
    sigma_star_map,
)
from .quadrature import QuadratureSpec, TestFunction, bump_test_function
from .sinai import sinai_flow, sinai_unfold
from .verify import CheckReport, identity_suite
