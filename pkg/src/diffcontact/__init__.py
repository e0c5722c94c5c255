"""Differentiable rigid-body simulation with exact frictional contact.

Forward dynamics steps solve the unrelaxed nonlinear complementarity
problem of frictional contact; step derivatives come from implicit
differentiation of the contact modes rather than finite differences.
"""

__version__ = "0.1.0"

from .contact import ContactProblem, ContactSolution, Mode, ncp_residual, solve_ncp
from .derivatives import StepJacobian, step_jacobian
from .fd import fd_rollout_jacobian, fd_step_jacobian
from .inverse import (
    GnSettings,
    GnTrace,
    estimate_initial_conditions,
    gauss_newton,
    inverse_dynamics_contact,
)
from .model import (
    BodyInertia,
    FrictionPair,
    Geometry,
    JointSpec,
    KinematicModel,
    difference,
    integrate,
)
from .simulator import SimParams, SimState, StepResult, rollout, rollout_jacobian, step

__all__ = [
    "BodyInertia", "ContactProblem", "ContactSolution", "FrictionPair",
    "Geometry", "GnSettings", "GnTrace", "JointSpec", "KinematicModel",
    "Mode", "SimParams", "SimState", "StepJacobian", "StepResult",
    "difference", "estimate_initial_conditions", "fd_rollout_jacobian",
    "fd_step_jacobian", "gauss_newton", "integrate",
    "inverse_dynamics_contact", "ncp_residual", "rollout",
    "rollout_jacobian", "solve_ncp", "step", "step_jacobian",
]
