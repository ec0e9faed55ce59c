"""Sparse plane-wave sound-field reconstruction with SVD modal dictionaries
for hybrid spherical-linear microphone arrays."""

__version__ = "0.1.0"

from .errors import (ConfigError, NumericalError, RankDeficiencyError, SceneError,
                     SfmxFormatError)
from .geometry import (DirectionGrid, HybridConfig, MicArray, angular_distance,
                       build_direction_grid, build_hybrid, build_lma, build_sma)
from .metrics import (EnergyMap, PeakSet, angular_error, energy_map_mismatch, find_peaks,
                      kernel, score_map, truth_map)
from .modal import (ModalBasis, SHBasis, angle_sweep, directivity_index, mean_principal_angle,
                    principal_angles, sh_matrix, svd_decompose, truncate, whiten)
from .propagation import (ObservationBlock, RoomSpec, SceneSpec, TransferMatrix, add_noise,
                          image_source_rtf, plane_wave_matrix, sabine_absorption,
                          synthesize_scene)
from .solver import (IrlsParams, SparseSolution, estimate_diffuseness, irls_solve, recover,
                     recover_joint)
from .experiments import (ExperimentConfig, ResultTable, band_averages, moving_average,
                          run_monte_carlo, run_trial)
from .sfmx import read_matrix, write_matrix

__all__ = [
    "ConfigError", "NumericalError", "RankDeficiencyError", "SceneError", "SfmxFormatError",
    "DirectionGrid", "HybridConfig", "MicArray", "angular_distance",
    "build_direction_grid", "build_hybrid", "build_lma", "build_sma",
    "EnergyMap", "PeakSet", "angular_error", "energy_map_mismatch", "find_peaks",
    "kernel", "score_map", "truth_map",
    "ModalBasis", "SHBasis", "angle_sweep", "directivity_index", "mean_principal_angle",
    "principal_angles", "sh_matrix", "svd_decompose", "truncate", "whiten",
    "ObservationBlock", "RoomSpec", "SceneSpec", "TransferMatrix", "add_noise",
    "image_source_rtf", "plane_wave_matrix", "sabine_absorption", "synthesize_scene",
    "IrlsParams", "SparseSolution", "estimate_diffuseness", "irls_solve", "recover",
    "recover_joint",
    "ExperimentConfig", "ResultTable", "band_averages", "moving_average",
    "run_monte_carlo", "run_trial",
    "read_matrix", "write_matrix",
]
