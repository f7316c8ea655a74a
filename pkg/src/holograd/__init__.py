"""Phase-only hologram synthesis toolkit.

Regime-adaptive scalar diffraction, an unfolded phase-retrieval optimizer
with a learned complex deformable-attention denoiser, classical baselines,
and a small training loop, all on numpy.
"""

from .fields import ComplexField
from .metrics import MetricsReport, psnr, ssim
from .propagation import (
    OpticalConfig,
    PropagationPlan,
    Regime,
    asm_threshold,
    build_plan,
    far_threshold,
    propagate,
)
from .solvers import (
    DenoiserKind,
    Hologram,
    UnfoldConfig,
    gradient_step,
    gs_solve,
    hqs_unfold,
    tv_denoise_complex,
)
from .training import TrainConfig, train
from .weights_io import load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "ComplexField",
    "DenoiserKind",
    "GerchbergSaxtonCGH",
    "Hologram",
    "MetricsReport",
    "OpticalConfig",
    "PropagationPlan",
    "Regime",
    "TrainConfig",
    "UnfoldConfig",
    "UnfoldingCGH",
    "asm_threshold",
    "build_plan",
    "far_threshold",
    "gradient_step",
    "gs_solve",
    "hqs_unfold",
    "load_weights",
    "propagate",
    "psnr",
    "save_weights",
    "ssim",
    "train",
    "tv_denoise_complex",
    "__version__",
]

_LAZY = {"GerchbergSaxtonCGH", "UnfoldingCGH"}


def __getattr__(name: str):
    # the estimator layer pulls in scikit-learn; import it only on demand
    if name in _LAZY:
        from . import estimators

        return getattr(estimators, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
