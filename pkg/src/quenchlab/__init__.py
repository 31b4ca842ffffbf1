"""Quenching and propagation experiments for reactive flows in cellular stirring.

The package studies T_t + A u . grad T = Lap T + M f(T) on a strip with
Dirichlet ends, where u is the unit-amplitude cellular flow of cell size
pi*l.  It provides the explicit sub-solution machinery that certifies
propagation in large cells, Nash-type decay diagnostics and exit-probability
tools for the small-cell quenching regime, and a verdict harness that brackets
the critical amplitude A0(L0) for slab data.

Public surface re-exported here; the CLI entry point is quenchlab.cli:main.
"""

from .errors import QuenchlabError, ValidationError, NumericalAbort
from .flowfield import CellularFlow, StripDomain, trace_streamline, polyline_arc_length
from .reaction import (
    IgnitionReaction,
    ChordModifiedReaction,
    build_chord_modification,
    auto_select_chord,
    load_profile_csv,
)
from .subsolution import (
    bessel_j0,
    bessel_j1,
    BesselTable,
    critical_radius,
    SubSolution,
    build_subsolution,
    critical_cell_size,
    verify_subsolution,
)
from .pde_solver import (
    Field,
    make_initial_data,
    SolverConfig,
    RunRecord,
    run,
    step,
    CellRecord,
    run_dirichlet_cell,
)
from .decay_analysis import (
    NashRate,
    nash_n,
    decay_exponent,
    streamline_oscillation,
    hot_cell_count,
    cell_drop,
    select_h0,
    CellStats,
    check_streamline_constant,
    oscillation_decay_check,
)
from .exit_probability import (
    ExitProblem,
    SurvivalEstimate,
    simulate_survival,
    pde_exit_oracle,
    lowercell_check,
    heat_uptake,
    duhamel_reconstruct,
    l1_lower_check,
    oracle_at,
    save_q_table,
    load_q_table,
    write_mc_csv,
)
from .harness import (
    Verdict,
    classify,
    slab_run,
    BracketRow,
    find_A0,
    SweepResult,
    run_sweep,
    FitReport,
    scaling_fit,
    Theorem1Result,
    seed_center_value,
    theorem1_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "QuenchlabError",
    "ValidationError",
    "NumericalAbort",
    "CellularFlow",
    "StripDomain",
    "trace_streamline",
    "polyline_arc_length",
    "IgnitionReaction",
    "ChordModifiedReaction",
    "build_chord_modification",
    "auto_select_chord",
    "load_profile_csv",
    "bessel_j0",
    "bessel_j1",
    "BesselTable",
    "critical_radius",
    "SubSolution",
    "build_subsolution",
    "critical_cell_size",
    "verify_subsolution",
    "Field",
    "make_initial_data",
    "SolverConfig",
    "RunRecord",
    "run",
    "step",
    "CellRecord",
    "run_dirichlet_cell",
    "NashRate",
    "nash_n",
    "decay_exponent",
    "streamline_oscillation",
    "hot_cell_count",
    "cell_drop",
    "select_h0",
    "CellStats",
    "check_streamline_constant",
    "oscillation_decay_check",
    "ExitProblem",
    "SurvivalEstimate",
    "simulate_survival",
    "pde_exit_oracle",
    "lowercell_check",
    "heat_uptake",
    "duhamel_reconstruct",
    "l1_lower_check",
    "oracle_at",
    "save_q_table",
    "load_q_table",
    "write_mc_csv",
    "Verdict",
    "classify",
    "slab_run",
    "BracketRow",
    "find_A0",
    "SweepResult",
    "run_sweep",
    "FitReport",
    "scaling_fit",
    "Theorem1Result",
    "seed_center_value",
    "theorem1_experiment",
    "__version__",
]
