"""Multi-plane phase retrieval with sparse amplitude/phase regularization."""

from dalpr.field import (
    FieldFormatError,
    OpticalSetup,
    WaveField,
    amplitude,
    compose,
    make_chessboard_object,
    phase,
    read_field,
    rmse,
    rmse_phase_aligned,
    write_field,
)
from dalpr.propagation import (
    TransferFunction,
    make_transfer,
    propagate_adjoint,
    propagate_forward,
)
from dalpr.frames import FrameOperator, SpectrumVector, analyze, soft_threshold, synthesize
from dalpr.solvers import (
    AlgoParams,
    fit_observation_pixel,
    fit_observation_plane,
    lagrange_update,
    object_update,
)
from dalpr.algorithms import (
    ObservationStack,
    ReconstructionState,
    evaluate_objective,
    make_initial_guess,
    read_observations,
    run_al,
    run_dal,
    run_sbmir_fb,
    run_two_stage,
    simulate_observations,
    write_observations,
)

__version__ = "0.1.0"

__all__ = [
    "AlgoParams",
    "FieldFormatError",
    "FrameOperator",
    "ObservationStack",
    "OpticalSetup",
    "ReconstructionState",
    "SpectrumVector",
    "TransferFunction",
    "WaveField",
    "amplitude",
    "analyze",
    "compose",
    "evaluate_objective",
    "fit_observation_pixel",
    "fit_observation_plane",
    "lagrange_update",
    "make_chessboard_object",
    "make_initial_guess",
    "make_transfer",
    "object_update",
    "phase",
    "propagate_adjoint",
    "propagate_forward",
    "read_field",
    "read_observations",
    "rmse",
    "rmse_phase_aligned",
    "run_al",
    "run_dal",
    "run_sbmir_fb",
    "run_two_stage",
    "simulate_observations",
    "soft_threshold",
    "synthesize",
    "write_field",
    "write_observations",
]
