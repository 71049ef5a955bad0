"""Particle solver for deterministic mean-field optimal control.

Forward mean-field dynamics, the backward costate system, Hamiltonian
maximization and spike variations, with the mean-field LQR (Riccati
feedback) as an analytic benchmark.
"""

from ._kernels import BACKEND, get_num_threads, set_num_threads
from .diagnostics import JointSnapshot, TestFunction, joint_snapshot, polynomial_bump, weak_continuity_residual
from .dynamics import (
    ControlField,
    CostateTrajectory,
    Trajectory,
    VariationField,
    costate_solve,
    forward_solve,
    picard_forward_solve,
    transversality,
    variational_solve,
)
from .errors import (
    ConfigError,
    DivergenceError,
    GridMismatchError,
    HamiltonianAscentError,
    InvalidInputError,
    MfpmpError,
    PicardConvergenceError,
    RiccatiError,
    TransversalityMismatch,
)
from .lqr import RiccatiSolution, lqr_closed_loop, lqr_feedback_control, riccati_pair, solve_riccati
from .measures import (
    Ensemble,
    TimeGrid,
    empirical_moment_p,
    ensemble_mean,
    l_p_distance,
    wasserstein_p,
)
from .pmp import (
    PmpResidualReport,
    SweepReport,
    hamiltonian,
    hamiltonian_gradient_u,
    maximize_hamiltonian,
    pmp_residual,
    spike_variation_experiment,
    sweep_solve,
    total_cost,
)
from .problem import (
    ControlSet,
    LqrSpec,
    MeanFieldProblem,
    build_lqr_problem,
    grad_averaged_functional,
    grad_mean_functional,
    project_control,
)

__version__ = "0.1.0"
