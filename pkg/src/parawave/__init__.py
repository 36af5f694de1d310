"""Wave-propagation workbench: coarse/fine solvers for the periodic 2D wave
equation, a from-scratch encoder-decoder correction network, and
parallel-in-time iteration with plain, network-enhanced, and orthogonally
corrected coarse propagators."""

from .dataset import (
    Dataset,
    DatasetManifest,
    TrainingExample,
    build_training_set,
    gen_procrustes_pairs,
    gen_trajectory_pairs,
    make_pair,
    read_dataset,
    read_manifest,
    read_record,
    write_dataset,
)
from .dispersion import (
    correct_coarse_1d,
    correction_symbol,
    dispersion_error,
    dispersion_error_rel,
    energy_norm_1d,
    evolve_exact_1d,
    evolve_semidiscrete_1d,
    exact_symbol,
    omega_exact,
    omega_semidiscrete,
    omega_series,
    semidiscrete_symbol,
)
from .energy import (
    EnergyField,
    energy_norm,
    lambda_map,
    lambda_pinv,
    rel_energy_error,
)
from .errors import (
    ConfigError,
    DomainError,
    FormatError,
    GridError,
    NumericError,
    ParawaveError,
    RegionError,
    ShapeError,
    StabilityError,
)
from .fileio import read_field_file, write_field_file
from .grid import (
    DOMAIN_LENGTH,
    GridSpec,
    ScalarField,
    WaveField,
    prolong,
    prolong_wave,
    restrict,
    restrict_wave,
    spectral_grad,
    wavenumbers,
    zero_field,
    zero_wave,
)
from .jnet import (
    JNet,
    JNetConfig,
    backward,
    coarse_input_tensor,
    enhanced_step,
    eval_step_error,
    load_net,
    n_parameters,
    net_forward,
    phantom_energy,
    save_net,
    zero_kernel_net,
)
from .media import (
    MediumSource,
    PulseSpec,
    constant_medium,
    crop_medium,
    gaussian_pulse,
    sample_crop_params,
    sample_pulse,
    sample_training_medium,
    synth_inclusion,
    synth_waveguide,
)
from .parareal import (
    OrthogonalOperator,
    PararealRun,
    coarse_tilde,
    parareal_enhanced,
    parareal_plain,
    parareal_procrustes,
    procrustes_objective,
    procrustes_solve,
    serial_fine_trajectory,
)
from .solver import (
    CFL_LIMIT,
    COARSE_DT,
    COARSE_N,
    FINE_DT,
    FINE_N,
    Medium,
    StepParams,
    cfl_margin,
    coarse_params,
    coarse_propagate,
    fine_params,
    fine_propagate,
    verlet_step,
)
from .training import TrainConfig, TrainReport, lr_at, sgd_momentum_step, train

__version__ = "0.1.0"

__all__ = [
    "CFL_LIMIT",
    "COARSE_DT",
    "COARSE_N",
    "ConfigError",
    "DOMAIN_LENGTH",
    "Dataset",
    "DatasetManifest",
    "DomainError",
    "EnergyField",
    "FINE_DT",
    "FINE_N",
    "FormatError",
    "GridError",
    "GridSpec",
    "JNet",
    "JNetConfig",
    "Medium",
    "MediumSource",
    "NumericError",
    "OrthogonalOperator",
    "ParawaveError",
    "PararealRun",
    "PulseSpec",
    "RegionError",
    "ScalarField",
    "ShapeError",
    "StabilityError",
    "StepParams",
    "TrainConfig",
    "TrainReport",
    "TrainingExample",
    "WaveField",
    "backward",
    "build_training_set",
    "cfl_margin",
    "coarse_input_tensor",
    "coarse_params",
    "coarse_propagate",
    "coarse_tilde",
    "constant_medium",
    "correct_coarse_1d",
    "correction_symbol",
    "crop_medium",
    "dispersion_error",
    "dispersion_error_rel",
    "energy_norm",
    "energy_norm_1d",
    "enhanced_step",
    "eval_step_error",
    "evolve_exact_1d",
    "evolve_semidiscrete_1d",
    "exact_symbol",
    "fine_params",
    "fine_propagate",
    "gaussian_pulse",
    "gen_procrustes_pairs",
    "gen_trajectory_pairs",
    "lambda_map",
    "lambda_pinv",
    "load_net",
    "lr_at",
    "make_pair",
    "n_parameters",
    "net_forward",
    "omega_exact",
    "omega_semidiscrete",
    "omega_series",
    "parareal_enhanced",
    "parareal_plain",
    "parareal_procrustes",
    "phantom_energy",
    "procrustes_objective",
    "procrustes_solve",
    "prolong",
    "prolong_wave",
    "read_dataset",
    "read_field_file",
    "read_manifest",
    "read_record",
    "rel_energy_error",
    "restrict",
    "restrict_wave",
    "sample_crop_params",
    "sample_pulse",
    "sample_training_medium",
    "save_net",
    "semidiscrete_symbol",
    "serial_fine_trajectory",
    "sgd_momentum_step",
    "spectral_grad",
    "synth_inclusion",
    "synth_waveguide",
    "train",
    "verlet_step",
    "wavenumbers",
    "write_dataset",
    "write_field_file",
    "zero_field",
    "zero_kernel_net",
    "zero_wave",
]
