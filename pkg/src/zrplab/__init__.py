"""Asymmetric zero-range process on a segment: hydrodynamics, mixing and couplings."""
from .coupling import (
    ColoredState,
    CoupledPair,
    border_discrepancy,
    coalescence_time,
    run_pair,
    simulate_colored,
    simulate_pair,
)
from .errors import *  # noqa: F401,F403
from .exclusion import ExclusionConfig, conjugation_residual, sep_to_zrp, simulate_asep, zrp_to_sep
from .flux import (
    FluxModel,
    GrandCanonical,
    build_flux_model,
    check_condition_5,
    conjugate_at,
    eval_partition,
    grand_canonical,
    mean_density,
)
from .macro import (
    InitialData,
    MacroProfile,
    dirac_profile,
    equilibrium_time,
    front_functions,
    hopf_lax_eval,
    segment_profile,
)
from .mixing import (
    StateIndex,
    TVCurve,
    front_trajectory_experiment,
    hydro_profile_experiment,
    leftmost_tail_check,
    leftmost_tail_profile,
    mixing_time_from_curve,
    poisson_max_experiment,
    stationary_law,
    transient_law,
    tv_curve,
)
from .particles import (
    Configuration,
    LatticeGeometry,
    ProcessSpec,
    empirical_cdf,
    make_config,
    run_replicas,
    simulate,
    total_jump_rate,
)
from .rates import RateFunction

__version__ = "0.1.0"
