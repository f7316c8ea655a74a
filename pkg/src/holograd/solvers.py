"""Phase-retrieval optimizers over the propagation model.

Everything here minimizes (variants of) the amplitude fidelity
``F(x) = 1/2 ||y - |P x|||^2`` for a target amplitude ``y`` and the plan's
propagation operator ``P``:

* :func:`gs_solve` — alternating projections between the image-plane
  amplitude constraint and the unit-amplitude hologram constraint.
* :func:`gradient_step` — the closed-form steepest-descent update
  ``v = x + rho * P^H[(Px/|Px|) (y - |Px|)]``, with the phase factor
  replaced by 1 wherever ``|Px|`` falls below the zero guard.
* :func:`tv_denoise_complex` — proximal total-variation denoising of a
  complex field (projected dual ascent), the classical stand-in for the
  learned denoiser.
* :func:`hqs_unfold` — the half-quadratic-splitting unfolding: alternate
  gradient steps with a denoiser (identity, TV, or the learned network).

The gradient step is written on the autodiff primitives, so the same code
runs untracked for inference and on a tape for training.

Targets are normalized to mean-unit energy (``||y||^2 = H*W``) inside the
drivers: a unit-amplitude hologram propagated by an energy-conserving
kernel lands on the same scale, which keeps residuals meaningful across
8-bit inputs of any brightness.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DataError
from .fields import ComplexField
from .network import PcdWeights, pcd_forward
from .propagation import PropagationPlan, adjoint_propagate, propagate

__all__ = [
    "DenoiserKind",
    "DENOISER_NAMES",
    "UnfoldConfig",
    "UnfoldState",
    "Hologram",
    "ZERO_GUARD",
    "TV_DUAL_ITERS",
    "MAX_STAGES",
    "extract_phase",
    "init_field",
    "normalize_target",
    "gradient_step",
    "gradient_step_map",
    "propagate_map",
    "gs_solve",
    "tv_denoise_complex",
    "unfold_estimate",
    "hqs_unfold",
]

ZERO_GUARD = 1e-12  # |Px| below this keeps the unit-phase factor at 1
TV_DUAL_ITERS = 50
MAX_STAGES = 8


class DenoiserKind(Enum):
    NONE = "none"
    COMPLEX_TV = "complex_tv"
    PCD = "pcd"


# user-facing spellings (flags, config files, estimator parameters)
DENOISER_NAMES: dict[str, DenoiserKind] = {
    "none": DenoiserKind.NONE,
    "tv": DenoiserKind.COMPLEX_TV,
    "pcd": DenoiserKind.PCD,
}


@dataclass(frozen=True)
class UnfoldConfig:
    """Unfolding hyperparameters: stage count, step size, denoiser choice."""

    stages: int = 3
    step: float = 1.0
    tv_weight: float = 0.01
    denoiser_kind: DenoiserKind = DenoiserKind.PCD

    def __post_init__(self):
        if not 1 <= int(self.stages) <= MAX_STAGES:
            raise ConfigError(f"stage count must be in [1, {MAX_STAGES}], got {self.stages}")
        if not self.step > 0:
            raise ConfigError(f"step size must be positive, got {self.step}")
        if self.denoiser_kind is DenoiserKind.COMPLEX_TV and not self.tv_weight > 0:
            raise ConfigError(f"TV weight must be positive, got {self.tv_weight}")


@dataclass
class UnfoldState:
    """One unfolding stage: pre-denoiser iterate ``v`` and estimate ``x``."""

    x: ComplexField
    v: ComplexField
    k: int

    def __post_init__(self):
        # ComplexField construction already guarantees finite values
        if self.x.shape != self.v.shape:
            raise ConfigError(f"state shapes differ: x {self.x.shape} vs v {self.v.shape}")


@dataclass(frozen=True)
class Hologram:
    """Phase-only hologram: per-pixel phase in [0, 2*pi) plus pixel pitch."""

    phase: np.ndarray
    pitch: float

    def __post_init__(self):
        p = np.asarray(self.phase)
        if p.ndim != 2 or np.iscomplexobj(p):
            raise ConfigError(f"hologram phase must be a real 2-D array, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ConfigError("hologram phase contains non-finite values")
        if p.size and (p.min() < 0 or p.max() >= 2 * np.pi):
            raise ConfigError("hologram phase must lie in [0, 2*pi)")
        if not self.pitch > 0:
            raise ConfigError(f"pitch must be positive, got {self.pitch}")

    @property
    def shape(self) -> tuple:
        return self.phase.shape

    def field(self) -> ComplexField:
        """The unit-amplitude field the modulator would display."""
        return ComplexField(np.exp(1j * self.phase), self.pitch)


def extract_phase(x: ComplexField) -> Hologram:
    """Phase of a field wrapped into [0, 2*pi); exact zeros map to phase 0."""
    phase = np.mod(np.angle(x.data), 2 * np.pi)
    # mod can round up to the open endpoint for tiny negative angles
    phase[phase >= 2 * np.pi] = 0.0
    phase[np.abs(x.data) == 0] = 0.0
    return Hologram(phase, x.pitch)


def _check_target(y: np.ndarray, plan: PropagationPlan) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != plan.config.shape:
        raise ConfigError(f"target shape {y.shape} does not match plan {plan.config.shape}")
    if not np.all(np.isfinite(y)):
        raise ConfigError("target amplitude contains non-finite values")
    return y


def normalize_target(y: np.ndarray) -> np.ndarray:
    """Scale a nonnegative amplitude so its energy equals the pixel count."""
    y = np.asarray(y, dtype=np.float64)
    energy = float(np.sum(y * y))
    if energy == 0.0:
        raise DataError("target amplitude is identically zero")
    return y * np.sqrt(y.size / energy)


def init_field(y: np.ndarray, plan: PropagationPlan, seed: int = 0) -> ComplexField:
    """Back-propagate the target under a seeded random phase.

    ``x0 = P^H(y * exp(i*theta))`` with theta i.i.d. uniform on [0, 2*pi);
    deterministic given the seed.
    """
    y = _check_target(y, plan)
    if np.any(y < 0):
        raise ConfigError("target amplitude must be nonnegative")
    theta = np.random.default_rng(seed).uniform(0.0, 2 * np.pi, size=y.shape)
    seeded = ComplexField(y * np.exp(1j * theta), plan.config.pitch)
    return adjoint_propagate(seeded, plan)


def propagate_map(u, kernel: np.ndarray):
    """Apply a propagation kernel to a raw array or tape variable."""
    return ad.ifft2c(ad.mul(kernel, ad.fft2c(u)))


def gradient_step_map(x, y, kernel: np.ndarray, step=1.0):
    """Steepest-descent update on raw arrays or tape variables.

    Accepts ``x`` as an ndarray or a tracked Var; with tracked inputs the
    whole update lands on the tape, which is how training differentiates
    through the unfolding. ``step`` may likewise be a scalar or a tracked
    scalar (the learned per-stage step).
    """
    px = propagate_map(x, kernel)
    residual = ad.sub(y, ad.absval(px, guard=ZERO_GUARD))
    correction = propagate_map(
        ad.mul(ad.unit_phase(px, guard=ZERO_GUARD), residual), np.conj(kernel)
    )
    if not isinstance(step, ad.Var):
        step = np.asarray(step, dtype=np.float64)
    return ad.add(x, ad.mul(correction, step))


def gradient_step(
    x: ComplexField, y: np.ndarray, plan: PropagationPlan, step: float = 1.0
) -> ComplexField:
    """One descent step on the amplitude fidelity at the given target scale."""
    if not step > 0:
        raise ConfigError(f"step size must be positive, got {step}")
    y = _check_target(y, plan)
    if x.shape != y.shape:
        raise ConfigError(f"field shape {x.shape} does not match target {y.shape}")
    return ComplexField(gradient_step_map(x.data, y, plan.kernel, step), x.pitch)


def gs_solve(
    y: np.ndarray,
    plan: PropagationPlan,
    iters: int,
    seed: int = 0,
    trace_out: list | None = None,
):
    """Alternating-projection baseline.

    Each iteration propagates the hologram estimate to the image plane,
    replaces the amplitude with the target (keeping phase), back-propagates,
    and projects onto unit amplitude. Returns the final hologram and the
    final image-plane field; ``trace_out`` collects the amplitude error
    ``||y - |Px|||`` after each iteration.
    """
    if iters < 1:
        raise ConfigError(f"iteration count must be at least 1, got {iters}")
    yn = normalize_target(_check_target(y, plan))
    pitch = plan.config.pitch
    x = init_field(yn, plan, seed)
    for _ in range(iters):
        img = propagate(x, plan)
        replaced = ComplexField(yn * ad.unit_phase(img.data, guard=ZERO_GUARD), pitch)
        back = adjoint_propagate(replaced, plan)
        x = ComplexField(ad.unit_phase(back.data, guard=ZERO_GUARD), pitch)
        if trace_out is not None:
            trace_out.append(float(np.linalg.norm(yn - np.abs(propagate(x, plan).data))))
    return extract_phase(x), propagate(x, plan)


def _tv_gradient(u: np.ndarray):
    gr = np.zeros_like(u)
    gr[:-1] = u[1:] - u[:-1]
    gc = np.zeros_like(u)
    gc[:, :-1] = u[:, 1:] - u[:, :-1]
    return gr, gc


def _tv_divergence(pr: np.ndarray, pc: np.ndarray) -> np.ndarray:
    d = np.zeros_like(pr)
    d[0] = pr[0]
    d[1:-1] = pr[1:-1] - pr[:-2]
    d[-1] = -pr[-2]
    e = np.zeros_like(pc)
    e[:, 0] = pc[:, 0]
    e[:, 1:-1] = pc[:, 1:-1] - pc[:, :-2]
    e[:, -1] = -pc[:, -2]
    return d + e


def tv_objective(x: np.ndarray, v: np.ndarray, weight: float) -> float:
    """Proximal TV objective: 1/2 ||x - v||^2 + weight * TV(x)."""
    gr, gc = _tv_gradient(x)
    tv = float(np.sum(np.sqrt(np.abs(gr) ** 2 + np.abs(gc) ** 2)))
    return float(0.5 * np.sum(np.abs(x - v) ** 2) + weight * tv)


def tv_denoise_complex(
    v: ComplexField,
    weight: float,
    iters: int = TV_DUAL_ITERS,
    trace_out: list | None = None,
) -> ComplexField:
    """Isotropic total-variation proximal step on a complex field.

    Real and imaginary parts share one gradient magnitude, so edges are
    penalized jointly. Solved by projected dual ascent with the classical
    1/8 step bound; the iteration budget is fixed, not adaptive.
    """
    if not weight > 0:
        raise ConfigError(f"TV weight must be positive, got {weight}")
    if iters < 1:
        raise ConfigError(f"iteration count must be at least 1, got {iters}")
    g = v.data
    tau = 0.125
    pr = np.zeros_like(g)
    pc = np.zeros_like(g)
    x = g.copy()
    for _ in range(iters):
        gr, gc = _tv_gradient(_tv_divergence(pr, pc) - g / weight)
        mag = np.sqrt(np.abs(gr) ** 2 + np.abs(gc) ** 2)
        denom = 1.0 + tau * mag
        pr = (pr + tau * gr) / denom
        pc = (pc + tau * gc) / denom
        x = g - weight * _tv_divergence(pr, pc)
        if trace_out is not None:
            trace_out.append(tv_objective(x, g, weight))
    return ComplexField(x, v.pitch)


def _check_stage_weights(cfg: UnfoldConfig, weights) -> None:
    if cfg.denoiser_kind is DenoiserKind.PCD:
        if weights is None:
            raise ConfigError("learned denoiser selected but no weights supplied")
        if len(weights) != cfg.stages:
            raise ConfigError(
                f"{cfg.stages} stages need {cfg.stages} weight sets, got {len(weights)}"
            )
        for i, w in enumerate(weights):
            if not isinstance(w, PcdWeights):
                raise ConfigError(f"stage {i} weights have unexpected type {type(w).__name__}")
    elif weights is not None:
        raise ConfigError(f"denoiser {cfg.denoiser_kind.value!r} takes no weights")


def unfold_estimate(
    y: np.ndarray,
    plan: PropagationPlan,
    cfg: UnfoldConfig,
    weights: list[PcdWeights] | None = None,
    seed: int = 0,
    state_out: list | None = None,
):
    """Run the unfolding loop and return the final estimate.

    The return value is a raw array for plain inputs or a tracked Var when
    the weights hold tape variables (training). ``state_out`` collects the
    per-stage iterates in inference mode.
    """
    _check_stage_weights(cfg, weights)
    yn = normalize_target(_check_target(y, plan))
    if np.any(yn < 0):
        raise ConfigError("target amplitude must be nonnegative")
    pitch = plan.config.pitch
    x = init_field(yn, plan, seed).data
    for k in range(cfg.stages):
        # PCD stages carry their own learned step; the classics use cfg.step.
        step = weights[k].step if cfg.denoiser_kind is DenoiserKind.PCD else cfg.step
        v = gradient_step_map(x, yn, plan.kernel, step)
        if cfg.denoiser_kind is DenoiserKind.NONE:
            x = v
        elif cfg.denoiser_kind is DenoiserKind.COMPLEX_TV:
            if isinstance(v, ad.Var):
                raise ConfigError("the TV denoiser has no parameters to differentiate")
            x = tv_denoise_complex(ComplexField(v, pitch), cfg.tv_weight).data
        else:
            x = pcd_forward(v, weights[k])
        if state_out is not None and not isinstance(x, ad.Var):
            state_out.append(
                UnfoldState(x=ComplexField(x, pitch), v=ComplexField(np.asarray(v), pitch), k=k)
            )
    return x


def hqs_unfold(
    y: np.ndarray,
    plan: PropagationPlan,
    cfg: UnfoldConfig,
    weights: list[PcdWeights] | None = None,
    seed: int = 0,
    state_out: list | None = None,
):
    """Unfolded optimization; returns the hologram and the final estimate."""
    x = unfold_estimate(y, plan, cfg, weights, seed, state_out)
    if isinstance(x, ad.Var):
        raise ConfigError("tracked weights belong in the training loop, not inference")
    field = ComplexField(x, plan.config.pitch)
    return extract_phase(field), field
