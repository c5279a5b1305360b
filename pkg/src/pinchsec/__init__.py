"""Secrecy-rate maximization for pinching-antenna downlinks.

Submodules:
  channel    geometry, guided/free-space coefficients, channel matrices
  metrics    rates, secrecy rate, worst-case (robust) secrecy objective
  singlewg   exact single-waveguide solver (quartic position + power split)
  numerics   Jacobi Hermitian eigensolver, regularized inverse, sqrt
  autodiff   reverse-mode tape over real/complex numpy tensors
  optimizer  per-instance DNN trainer (perfect and robust CSI)
  robust     channel Jacobians, uncertainty ellipsoids, S-procedure LMIs
  harness    scenario sampling, Monte-Carlo sweeps, heatmaps, CSV output
"""

from .channel import (ChannelSet, PinchLayout, Scene, channel_matrices,
                      freespace_coeff, free_space_wavelength, guided_wavelength,
                      inwaveguide_coeff, path_gain_constant)
from .metrics import (NumeratorMode, Solution, rate_bob, rate_eve,
                      robust_secrecy_rate, secrecy_rate)
from .optimizer import (NetworkConfig, TrainConfig, TrainResult, decode_outputs,
                        forward, init_params, penalty_schedule, train_scenario)
from .robust import UncertaintySpec, build_ellipsoid, channel_jacobian, lmi_matrix
from .singlewg import (QuarticCoeffs, SingleWgState, alternate_optimize,
                       optimal_pa_position, optimal_power_split,
                       quartic_coefficients, solve_depressed_cubic, solve_quartic)

__all__ = [
    "ChannelSet", "PinchLayout", "Scene", "channel_matrices", "freespace_coeff",
    "free_space_wavelength", "guided_wavelength", "inwaveguide_coeff",
    "path_gain_constant", "NumeratorMode", "Solution", "rate_bob", "rate_eve",
    "robust_secrecy_rate", "secrecy_rate", "NetworkConfig", "TrainConfig",
    "TrainResult", "decode_outputs", "forward", "init_params",
    "penalty_schedule", "train_scenario", "UncertaintySpec", "build_ellipsoid",
    "channel_jacobian", "lmi_matrix", "QuarticCoeffs", "SingleWgState",
    "alternate_optimize", "optimal_pa_position", "optimal_power_split",
    "quartic_coefficients", "solve_depressed_cubic", "solve_quartic",
]

__version__ = "0.1.0"
