"""Random walks conditioned to stay above a concave obstacle.

Exact transfer-matrix computations for lattice walks (:mod:`.kernel`), a
Gaussian laboratory for the ``1 - |x|^p`` obstacle (:mod:`.gaussian`) and
exponent-fitting experiments on top of both (:mod:`.scaling`).
"""

from .errors import (
    ConfigError,
    DegenerateError,
    DomainError,
    InsufficientData,
    MassLossError,
    NotCoupledError,
    ObstacleWalkError,
    SlopeError,
)
from .kernel import HeightGrid, KernelTables, build_for, build_tables
from .obstacle import ObstacleProfile, ObstacleSpec, TiltSchedule, cosine, discretize, quadratic, tilt_schedule
from .step_law import (
    StepLaw,
    centered_binomial,
    cumulant,
    cumulant_derivatives,
    gaussian,
    invert_mean,
    law_from_name,
    lazy_srw,
    rate_function,
    tilt,
    two_sided_geometric,
    uniform3,
)

__version__ = "0.1.0"
