"""Simulation and estimation toolkit for three-parameter spin rotation sensing."""
from .spin_algebra import (
    Constellation,
    Direction,
    RotationParams,
    SpinQuantum,
    SpinState,
    angular_momentum_ops,
    coherent_state,
    majorana_constellation,
    rotation_operator,
)
from .probe_states import (
    anticoherence_report,
    coherent,
    king_j2,
    king_j3,
    mean_spin,
    noon,
    spin_covariance,
    stabilizer,
)
from .metrology import (
    DegenerateGeometryError,
    fmax_axis,
    h_matrix,
    omega_grid,
    qcrb_weighted_cost,
    qfim,
    saturability_check,
    ultimate_weighted_limit,
)
from .measurement import (
    DetectionModel,
    ProjectionRecord,
    ProtocolDirections,
    RawDataset,
    calibrate_and_project,
    default_protocol,
    husimi,
    simulate_powers,
)
from .estimation import (
    AxisEstimate,
    ObservedFisher,
    RotationEstimate,
    deviation_angle,
    estimate_axis,
    estimate_rotation,
    observed_fisher,
    weighted_uncertainty,
)

__version__ = "0.1.0"
