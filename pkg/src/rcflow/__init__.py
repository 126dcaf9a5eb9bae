"""Residual-corrected flow editing engine with analytic velocity fields."""

from .edit import (
    EditConfig,
    EditReport,
    consistency_residual,
    residual_corrected_velocity,
    restoration_velocity,
    run_edit,
)
from .engine import (
    ConditionBundle,
    NfeCounter,
    RunTrace,
    Schedule,
    VelocityField,
    consistent_pair,
    euler_step,
    generate,
    make_uniform_schedule,
    sample_noise,
)
from .errors import ConfigError, NumericError, ShapeMismatchError
from .fields import (
    MixtureDataset,
    ToyScene,
    constant_field,
    mixture_field,
    oracle_posterior_mean,
    point_field,
    render_target,
    scene_mixture_field,
)
from .flowedit import (
    EquivalenceReport,
    FlowEditConfig,
    NoiseMode,
    equivalence_check,
    flowedit_run,
)
from .latent import (
    FreqSplit,
    LatentField,
    Mask,
    Shape,
    axpy,
    downsample_mask,
    freq_decompose,
    hf_transfer,
    lerp_noise,
    rel_error,
)

__all__ = [
    "ConditionBundle",
    "ConfigError",
    "EditConfig",
    "EditReport",
    "EquivalenceReport",
    "FlowEditConfig",
    "FreqSplit",
    "LatentField",
    "Mask",
    "MixtureDataset",
    "NfeCounter",
    "NoiseMode",
    "NumericError",
    "RunTrace",
    "Schedule",
    "Shape",
    "ShapeMismatchError",
    "ToyScene",
    "VelocityField",
    "axpy",
    "consistency_residual",
    "consistent_pair",
    "constant_field",
    "downsample_mask",
    "equivalence_check",
    "euler_step",
    "flowedit_run",
    "freq_decompose",
    "generate",
    "hf_transfer",
    "lerp_noise",
    "make_uniform_schedule",
    "mixture_field",
    "oracle_posterior_mean",
    "point_field",
    "rel_error",
    "render_target",
    "residual_corrected_velocity",
    "restoration_velocity",
    "run_edit",
    "sample_noise",
    "scene_mixture_field",
]

__version__ = "0.1.0"
