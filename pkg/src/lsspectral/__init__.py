"""
lsspectral: spectral solver for the 3-D acoustic Lippmann-Schwinger equation.

The total field ``u`` of a penetrable scatterer with contrast
``m = 1 - n^2`` satisfies ``u = u^i - k^2 int Phi(x, y) m(y) u(y) dy``.
Fields are expanded in spherical harmonics up to band ``F`` at Chebyshev
radial nodes; the volume potential is applied mode by mode through running
radial integrals, and the resulting system is solved with GMRES.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BandMismatch,
    BandTooSmall,
    Breakdown,
    InvalidConfig,
    InvalidGeometry,
    LSSpectralError,
    MaxIterations,
    NonSeparated,
    ScalingOverflow,
    SingularMatching,
)
from .operator import LSOperator, ProblemSpec, SolveReport, apply_forward, field_error, solve  # noqa: E402
from .radial import MomentTable, RadialGrid, RadialKernel, precompute_moments  # noqa: E402
from .scenarios import (  # noqa: E402
    ContrastSpec,
    IncidentSpec,
    contrast_coefficients,
    exact_solution_shifted,
    exact_solution_sphere,
    incident_coefficients,
)
from .sht import AngularGrid, ModeField, analyze, synthesize  # noqa: E402
