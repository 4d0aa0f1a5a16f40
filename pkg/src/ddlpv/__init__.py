"""Data-driven state-feedback synthesis for affine LPV systems from noisy data."""

from .consistency import (ConsistencyQmi, MatrixBall, Qmi, build_consistency_qmi, qmi_membership, qmi_to_ball,
                          sample_compatible_systems, schedule_lift_qmi)
from .data import (DataSet, NoiseModel, build_dataset, energy_bound_from_noise, is_persistently_exciting,
                   noise_model_from_energy_bound, validate_noise_model)
from .lpv import (AffineGain, LpvPlant, SchedulingMap, SchedulingPolytope, Trajectory, example_plant,
                  lift_scheduling, simulate)
from .lyapunov import BiquadraticLyapunov, QuadraticLyapunov, check_decrease_on_polytope, decrease_lmi, eval_V
from .synthesis import (SynthesisResult, analyze_stability, recover_controller, synthesize_blf, synthesize_fbsp,
                        synthesize_slf_baseline)
from .verify import certify_decrease, closed_loop_montecarlo, frozen_spectrum_diagnostic

__version__ = "0.1.0"

__all__ = [
    "ConsistencyQmi",
    "MatrixBall",
    "Qmi",
    "build_consistency_qmi",
    "qmi_membership",
    "qmi_to_ball",
    "sample_compatible_systems",
    "schedule_lift_qmi",
    "DataSet",
    "NoiseModel",
    "build_dataset",
    "energy_bound_from_noise",
    "is_persistently_exciting",
    "noise_model_from_energy_bound",
    "validate_noise_model",
    "AffineGain",
    "LpvPlant",
    "SchedulingMap",
    "SchedulingPolytope",
    "Trajectory",
    "example_plant",
    "lift_scheduling",
    "simulate",
    "BiquadraticLyapunov",
    "QuadraticLyapunov",
    "check_decrease_on_polytope",
    "decrease_lmi",
    "eval_V",
    "SynthesisResult",
    "analyze_stability",
    "recover_controller",
    "synthesize_blf",
    "synthesize_fbsp",
    "synthesize_slf_baseline",
    "certify_decrease",
    "closed_loop_montecarlo",
    "frozen_spectrum_diagnostic",
]
