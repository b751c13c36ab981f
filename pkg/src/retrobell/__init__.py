"""Time-symmetric (retarded + advanced) hidden-variable model of the EPRB experiment."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .outcomes import (  # noqa: F401
    CANDIDATES,
    CaseLabel,
    ConsistentSet,
    ModelParams,
    OutcomePair,
    Particle,
    SfpPolicy,
    classify_case,
    consistent_outcomes,
    final_spin,
    resolve_sfp,
)
from .probability import (  # noqa: F401
    BellTriple,
    ProbabilityBounds,
    SweepRow,
    bell_sum,
    cap_overlap_fraction,
    chsh_value,
    local_anticoincidence,
    monte_carlo_anticoincidence,
    nu_params,
    probability_bounds,
    qm_anticoincidence,
    screening_analysis,
    sweep_beta_gamma,
    sweep_nu,
)
from .sphere import (  # noqa: F401
    Outcome,
    TangentVec3,
    UnitVec3,
    measure_spin,
    normalize,
    project_spin,
    sample_uniform,
    sphere_distance_vector,
)
