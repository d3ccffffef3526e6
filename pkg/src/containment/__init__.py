"""Controllable-set toolkit for a planar dose-response model with a slowly
co-evolving resistance trait.

The package audits the structural hypotheses of a model instance,
classifies its equilibrium branch, constructs the closed boundary curves
of controllable sets, verifies the claimed invariance/controllability/
limit properties by seeded sampling, and solves the dose-minimal periodic
treatment problem.
"""

from .landscape import (
    HypothesisReport,
    Interaction,
    Landscape,
    PRESET_NAMES,
    RateFunction,
    check_hypotheses,
    preset,
)
from .dynamics import Schedule, Trajectory, f0, f1, f_full, f_reduced, flow, \
    flow_batch, killing_time, rescale_time
from .equilibria import (
    Component,
    EquilibriumBranch,
    NonHyperbolicRange,
    a_star,
    a_star_d1,
    branch,
    classify,
    components,
    folds,
    h_star,
    is_hyperbolic,
    jacobian_eigs,
)
from .omega import (
    OmegaConstructionError,
    OmegaCurve,
    build_all,
    build_omega,
    encloses,
    forward_orbit_to_attractor,
    saddle_manifolds,
)
from .analysis import (
    CurativeField,
    SweepResult,
    VerificationReport,
    b_delta_contains,
    bifurcation_sweep,
    check_nesting,
    estimate_curative_set,
    verify_angle_condition,
    verify_band_invariance,
    verify_controllability,
    verify_forward_invariance,
    verify_limit_sets,
    verify_no_return,
)
from .control import (
    OptimalRun,
    classify_exit,
    exit_experiment,
    fbsm_solve,
    find_split,
    run_cycles,
)

__version__ = "0.1.0"
