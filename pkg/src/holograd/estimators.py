"""Estimator-style front end: fit/predict wrappers over the solvers.

``GerchbergSaxtonCGH`` and ``UnfoldingCGH`` are scikit-learn estimators
(``get_params``/``set_params``/``clone`` work, ``fit`` returns ``self``,
fitted state lives in trailing-underscore attributes) so they compose with
generic tooling. Both map target amplitude images to phase maps in
[0, 2*pi); ``fit`` binds the optical plan to the target resolution, and for
the learned denoiser it also runs the training loop.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, NotFittedError
from .fields import ComplexField
from .network import DEFAULT_CHANNELS
from .propagation import OpticalConfig, PropagationPlan, build_plan
from .solvers import DENOISER_NAMES, DenoiserKind, UnfoldConfig, gs_solve, hqs_unfold
from .training import TrainConfig, reconstruct_amplitude, scaled_metrics, train

__all__ = [
    "CGHEstimator",
    "GerchbergSaxtonCGH",
    "UnfoldingCGH",
    "check_target_stack",
]

DEFAULT_WAVELENGTH = 520e-9
DEFAULT_PITCH = 8e-6
DEFAULT_DISTANCE = 0.2


def check_target_stack(X, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Coerce targets to a (count, height, width) float64 stack.

    Accepts one 2-D image, a 3-D stack, or a sequence of equally shaped 2-D
    arrays. Rejects empty input, non-finite values, negative amplitudes, and
    (when ``shape`` is given) any resolution other than the fitted one.
    """
    try:
        stack = np.asarray(X, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"targets must stack into one array: {exc}") from None
    if stack.ndim == 2:
        stack = stack[np.newaxis]
    if stack.ndim != 3:
        raise ConfigError(f"targets must be 2-D images, got a rank-{stack.ndim} array")
    if stack.shape[0] == 0 or stack.shape[1] == 0 or stack.shape[2] == 0:
        raise ConfigError("need at least one non-empty target image")
    if not np.all(np.isfinite(stack)):
        raise ConfigError("target images contain non-finite values")
    if np.any(stack < 0):
        raise ConfigError("target amplitudes must be nonnegative")
    if shape is not None and stack.shape[1:] != tuple(shape):
        raise ConfigError(
            f"target resolution {stack.shape[1:]} does not match fitted plan {tuple(shape)}"
        )
    return stack


class CGHEstimator(BaseEstimator):
    """Shared estimator plumbing: plan binding, prediction, scoring.

    Subclasses set ``plan_`` in ``fit`` and implement ``_solve_phase`` for a
    single validated target image.
    """

    plan_: PropagationPlan | None = None

    def _build_plan(self, shape: tuple[int, int]) -> PropagationPlan:
        optics = OpticalConfig(
            wavelength=self.wavelength, pitch=self.pitch, width=shape[1], height=shape[0]
        )
        return build_plan(optics, self.distance)

    def _require_fitted(self) -> None:
        if self.plan_ is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted; call fit() first")

    def _solve_phase(self, img: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        """Phase maps in [0, 2*pi), one per target image, shape (n, H, W)."""
        self._require_fitted()
        stack = check_target_stack(X, self.plan_.config.shape)
        out = np.empty(stack.shape)
        for i, img in enumerate(stack):
            out[i] = self._solve_phase(img)
        return out

    # hologram synthesis is a target-to-phase transform
    transform = predict

    def score(self, X, y=None) -> float:
        """Mean PSNR of least-squares-scaled reconstructions vs targets."""
        self._require_fitted()
        stack = check_target_stack(X, self.plan_.config.shape)
        values = []
        for img in stack:
            field = ComplexField(np.exp(1j * self._solve_phase(img)), self.plan_.config.pitch)
            rec = reconstruct_amplitude(field, self.plan_)
            values.append(scaled_metrics(rec, img)[0])
        return float(np.mean(values))


class GerchbergSaxtonCGH(CGHEstimator):
    """Alternating-projection phase retrieval, solved per image.

    There is nothing to learn: ``fit`` validates parameters and binds the
    propagation plan to the target resolution.
    """

    def __init__(
        self,
        iterations: int = 50,
        wavelength: float = DEFAULT_WAVELENGTH,
        pitch: float = DEFAULT_PITCH,
        distance: float = DEFAULT_DISTANCE,
        seed: int = 0,
    ):
        self.iterations = iterations
        self.wavelength = wavelength
        self.pitch = pitch
        self.distance = distance
        self.seed = seed

    def fit(self, X, y=None) -> "GerchbergSaxtonCGH":
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        stack = check_target_stack(X)
        self.plan_ = self._build_plan(stack.shape[1:])
        return self

    def _solve_phase(self, img: np.ndarray) -> np.ndarray:
        holo, _ = gs_solve(img, self.plan_, self.iterations, seed=self.seed)
        return holo.phase


class UnfoldingCGH(CGHEstimator):
    """Unfolded gradient descent with an optional denoiser between stages.

    ``denoiser`` selects "pcd" (learned; ``fit`` trains it on the given
    targets), "tv" (total-variation proximal step), or "none" (pure descent).
    The learned variant needs resolutions divisible by 32.
    """

    def __init__(
        self,
        stages: int = 3,
        denoiser: str = "pcd",
        step: float = 1.0,
        tv_weight: float = 0.01,
        channels: int = DEFAULT_CHANNELS,
        lr: float = 1e-4,
        epochs: int = 30,
        batch_size: int = 1,
        val_fraction: float = 0.2,
        wavelength: float = DEFAULT_WAVELENGTH,
        pitch: float = DEFAULT_PITCH,
        distance: float = DEFAULT_DISTANCE,
        seed: int = 0,
    ):
        self.stages = stages
        self.denoiser = denoiser
        self.step = step
        self.tv_weight = tv_weight
        self.channels = channels
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.val_fraction = val_fraction
        self.wavelength = wavelength
        self.pitch = pitch
        self.distance = distance
        self.seed = seed

    def _unfold_config(self) -> UnfoldConfig:
        kind = DENOISER_NAMES.get(self.denoiser)
        if kind is None:
            choices = ", ".join(sorted(DENOISER_NAMES))
            raise ConfigError(f"unknown denoiser {self.denoiser!r}; choose one of {choices}")
        return UnfoldConfig(
            stages=self.stages, step=self.step, tv_weight=self.tv_weight, denoiser_kind=kind
        )

    def fit(self, X, y=None) -> "UnfoldingCGH":
        cfg = self._unfold_config()
        stack = check_target_stack(X)
        plan = self._build_plan(stack.shape[1:])
        if cfg.denoiser_kind is DenoiserKind.PCD:
            tcfg = TrainConfig(
                lr=self.lr,
                epochs=self.epochs,
                batch_size=self.batch_size,
                seed=self.seed,
                val_fraction=self.val_fraction,
            )
            self.weights_ = train(list(stack), plan, tcfg, cfg, channels=self.channels)
        else:
            self.weights_ = None
        self.config_ = cfg
        self.plan_ = plan
        return self

    def _solve_phase(self, img: np.ndarray) -> np.ndarray:
        holo, _ = hqs_unfold(img, self.plan_, self.config_, self.weights_, seed=self.seed)
        return holo.phase
