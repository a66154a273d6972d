"""Dynamic-circuit quantum lattice-Boltzmann method for linear advection-diffusion."""

from .engine import (
    InstructionArray,
    ShotEstimate,
    enumerate_branches,
    estimate_density,
    gate_accounting,
    presample_instructions,
    run_ensemble,
    run_hybrid,
    run_shot,
    static_collision_circuit,
)
from .errors import ConfigurationError, DomainError, InternalError, QLBMError, UsageError
from .lattice import (
    LatticeGrid,
    VelocitySet,
    digital_step,
    equilibrium,
    make_velocity_set,
    run_digital,
    stream_periodic,
)
from .plan import CollisionAngles, PairSelectionPlan, build_pair_selection_plan, collision_angles
from .stats import GateStats

__version__ = "0.1.0"
