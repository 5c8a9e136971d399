"""bornlab: a desk-scale laboratory for probability in quantum mechanics.

Subpackages cover the finite-dimensional Hilbert kernel, frame-function
constraint machinery, the coarse-graining derivation of Born weights,
stochastic collapse dynamics, history-consistency checks, the quantum-game
value calculus, and exact law-of-large-numbers tails, all driven by a
scenario CLI.
"""

__version__ = "0.1.0"

from .collapse import (  # noqa: F401
    CollapseModel,
    Trajectory,
    drift_diffusion,
    em_step,
    ensemble_outcomes,
    martingale_check,
    simulate,
)
from .emergence import (  # noqa: F401
    MassProfile,
    RationalState,
    born_limit,
    equal_mass_refine,
    equiprobable_values,
    hypercube_split_count,
    measure_uniqueness_solve,
    rational_born_values,
)
from .games import (  # noqa: F401
    Game,
    Relabeling,
    derive_pivotal,
    linear_payoff,
    relabel_game,
    transform_game,
    value_solve,
)
from .hilbert import (  # noqa: F401
    BooleanSublattice,
    CoarseGraining,
    DensityMatrix,
    GrainingFamily,
    MeasureTable,
    Projector,
    SeparatingSet,
    StateVector,
    SymmetryUnitary,
    born_weight,
    check_additivity,
    permutation_unitary,
    phase_unitary,
    sublattice_from_graining,
    trace_weight,
)
from .histories import (  # noqa: F401
    HistorySet,
    HistoryStep,
    collapsed_probability,
    consistency_check,
    uncollapsed_probability,
)
from .lln import frequency_audit, lln_limit_scan, lln_tail, lln_tail_exact  # noqa: F401
from .nogo import (  # noqa: F401
    PMSystem,
    RaySet,
    dispersion_free_search,
    propagate_pm_constraint,
    rotation_jump_demo,
    separation_check,
)
