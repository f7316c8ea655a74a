"""Desk-scale training of the unfolded optimizer's denoiser stages.

The loss re-propagates the phase-only projection of the final estimate and
measures amplitude MSE against the normalized target, so it matches what
the hologram can physically display. Quantization to modulator levels never
enters the graph; it happens only at export.

Weights live on the float32 grid (see ``snap_to_float32``): every update is
snapped after the optimizer step, which makes training bit-reproducible
across runs and the on-disk container a lossless image of the result.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import autodiff as ad
from .data import imread_resized, list_images
from .errors import ConfigError, DataError, NumericError
from .metrics import psnr as psnr_metric, ssim as ssim_metric
from .network import (
    CdatWeights,
    DEFAULT_CHANNELS,
    PcdWeights,
    init_stage_weights,
    snap_to_float32,
)
from .propagation import PropagationPlan, propagate
from .solvers import (
    DenoiserKind,
    UnfoldConfig,
    ZERO_GUARD,
    extract_phase,
    hqs_unfold,
    normalize_target,
    propagate_map,
    unfold_estimate,
)

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "training_loss",
    "train",
    "reconstruct_amplitude",
    "scaled_metrics",
    "evaluate_hologram",
    "LOG_HEADER",
]

LOG_HEADER = "epoch,step,loss,val_psnr,val_ssim,wall_ms"


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings for one training run."""

    lr: float = 1e-4
    epochs: int = 30
    batch_size: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.2

    def __post_init__(self):
        # lr = 0 is allowed: it freezes the weights, which is the documented
        # optimizer fixed point
        if self.lr < 0:
            raise ConfigError(f"learning rate must be nonnegative, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epoch count must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be at least 1, got {self.batch_size}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"validation fraction must be in [0, 1), got {self.val_fraction}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.eps > 0):
            raise ConfigError("invalid optimizer moment settings")


# ---------------------------------------------------------------------------
# weight flattening


_FEM_PIRM_ATTRS = {
    "step": "step",
    "fem.w1": "fem_w1",
    "fem.w2": "fem_w2",
    "pirm.w1": "pirm_w1",
    "pirm.b1": "pirm_b1",
    "pirm.w2": "pirm_w2",
    "pirm.b2": "pirm_b2",
}


def _set_tensor(w: PcdWeights, name: str, value) -> None:
    if name in _FEM_PIRM_ATTRS:
        setattr(w, _FEM_PIRM_ATTRS[name], value)
        return
    head, _, fld = name.partition(".")
    setattr(w.blocks[int(head[4:])], fld, value)


def _tracked_copy(tape: ad.Tape, weights: list[PcdWeights]):
    """Leaf every tensor of every stage; returns tracked structs and leaves."""
    tracked = []
    leaves = []
    slots = []
    for si, w in enumerate(weights):
        blocks = []
        for blk in w.blocks:
            blocks.append(CdatWeights(**{f: None for f, _ in blk.named_tensors()}))
        tw = PcdWeights(
            step=None, fem_w1=None, fem_w2=None, blocks=blocks,
            pirm_w1=None, pirm_b1=None, pirm_w2=None, pirm_b2=None,
        )
        for name, arr in w.named_tensors():
            leaf = tape.leaf(arr)
            _set_tensor(tw, name, leaf)
            leaves.append(leaf)
            slots.append((si, name))
        tracked.append(tw)
    return tracked, leaves, slots


# ---------------------------------------------------------------------------
# loss


def _sample_seed(base_seed: int, index: int) -> int:
    # one fixed starting phase per dataset index keeps the per-sample
    # objective stationary across epochs
    return base_seed * 1000003 + index


def training_loss(weights, y: np.ndarray, plan: PropagationPlan, cfg: UnfoldConfig, seed: int = 0):
    """Amplitude MSE of the re-propagated phase-only estimate.

    Returns a tracked Var when the weights carry tape leaves, else a float.
    """
    yn = normalize_target(y)
    x = unfold_estimate(y, plan, cfg, weights, seed)
    u = ad.unit_phase(x, guard=ZERO_GUARD)
    r = ad.absval(propagate_map(u, plan.kernel), guard=ZERO_GUARD)
    d = ad.sub(r, yn)
    loss = ad.mean_(ad.mul(d, d))
    return loss if isinstance(loss, ad.Var) else float(loss)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """First/second moments per parameter; second moments are |g|^2 (real)."""

    m: list = dataclass_field(default_factory=list)
    v: list = dataclass_field(default_factory=list)
    t: int = 0

    @classmethod
    def for_leaves(cls, values: list[np.ndarray]) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in values],
            v=[np.zeros(np.shape(a)) for a in values],
            t=0,
        )


def adam_step(values: list[np.ndarray], grads: list[np.ndarray], state: AdamState, cfg: TrainConfig):
    """One optimizer update; returns the new parameter values."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    out = []
    for i, (p, g) in enumerate(zip(values, grads)):
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * np.abs(g) ** 2
        update = (state.m[i] / bc1) / (np.sqrt(state.v[i] / bc2) + cfg.eps)
        out.append(p - cfg.lr * update)
    return out


# ---------------------------------------------------------------------------
# evaluation protocol


def reconstruct_amplitude(x_field, plan: PropagationPlan) -> np.ndarray:
    """Image-plane amplitude of the phase-only projection of an estimate."""
    holo = extract_phase(x_field)
    return np.abs(propagate(holo.field(), plan).data)


def scaled_metrics(rec: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """PSNR/SSIM after least-squares amplitude scaling of the reconstruction."""
    denom = float(np.sum(rec * rec))
    scale = float(np.sum(rec * target)) / denom if denom > 0 else 1.0
    scaled = scale * rec
    return psnr_metric(target, scaled), ssim_metric(target, scaled)


def evaluate_hologram(weights, img: np.ndarray, plan: PropagationPlan, cfg: UnfoldConfig, seed: int):
    """Held-out quality: least-squares-scaled reconstruction vs the target."""
    _, x = hqs_unfold(img, plan, cfg, weights, seed)
    rec = reconstruct_amplitude(x, plan)
    return scaled_metrics(rec, np.asarray(img, dtype=np.float64))


# ---------------------------------------------------------------------------
# driver


def train(
    dataset,
    plan: PropagationPlan,
    train_cfg: TrainConfig,
    unfold_cfg: UnfoldConfig,
    weights: list[PcdWeights] | None = None,
    channels: int = DEFAULT_CHANNELS,
    log_path=None,
) -> list[PcdWeights]:
    """Train the per-stage denoisers; returns the final weights.

    ``dataset`` is an image directory, a list of paths, or a list of
    grayscale arrays (resized to the plan resolution when needed). The
    validation split, data order, and starting phases all derive from the
    seed, so two runs with identical inputs produce bit-identical weights.
    A per-epoch row (``epoch,step,loss,val_psnr,val_ssim,wall_ms``) goes to
    ``log_path`` when given.
    """
    if unfold_cfg.denoiser_kind is not DenoiserKind.PCD:
        raise ConfigError("training requires the learned denoiser")
    paths = list_images(dataset) if isinstance(dataset, (str, os.PathLike)) else list(dataset)
    if not paths:
        raise DataError(f"no training images found in {dataset}")
    shape = plan.config.shape
    images = [imread_resized(p, shape) for p in paths]
    for k, (p, img) in enumerate(zip(paths, images)):
        if not np.any(img):
            label = f"#{k}" if isinstance(p, np.ndarray) else p
            raise DataError(f"image {label} is identically zero")

    rng = np.random.default_rng(train_cfg.seed)
    perm = rng.permutation(len(images))
    n_val = int(round(len(images) * train_cfg.val_fraction))
    if len(images) - n_val < 1:
        raise DataError(f"validation split leaves no training images ({len(images)} total)")
    val_idx = [int(i) for i in perm[:n_val]]
    train_idx = [int(i) for i in perm[n_val:]]

    if weights is None:
        weights = init_stage_weights(
            unfold_cfg.stages, channels=channels, seed=train_cfg.seed, step=unfold_cfg.step
        )
    if len(weights) != unfold_cfg.stages:
        raise ConfigError(f"{unfold_cfg.stages} stages need {unfold_cfg.stages} weight sets")
    for w in weights:
        snap_to_float32(w)

    state = None
    rows = []
    step = 0
    for epoch in range(train_cfg.epochs):
        t0 = time.perf_counter()
        order = [int(i) for i in rng.permutation(train_idx)]
        epoch_losses = []
        for lo in range(0, len(order), train_cfg.batch_size):
            batch = order[lo : lo + train_cfg.batch_size]
            tape = ad.Tape()
            tracked, leaves, slots = _tracked_copy(tape, weights)
            loss = None
            for idx in batch:
                sample = training_loss(
                    tracked, images[idx], plan, unfold_cfg,
                    seed=_sample_seed(train_cfg.seed, idx),
                )
                loss = sample if loss is None else ad.add(loss, sample)
            if len(batch) > 1:
                loss = ad.mul(loss, 1.0 / len(batch))
            loss_value = float(np.real(loss.value))
            if not np.isfinite(loss_value):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {step}")
            grads = tape.gradients(loss, leaves)
            if any(not np.all(np.isfinite(g)) for g in grads):
                raise NumericError(f"non-finite gradient at epoch {epoch}, step {step}")
            if state is None:
                state = AdamState.for_leaves([l.value for l in leaves])
            new_values = adam_step([l.value for l in leaves], grads, state, train_cfg)
            for (si, name), val in zip(slots, new_values):
                _set_tensor(weights[si], name, val)
            for w in weights:
                snap_to_float32(w)
            epoch_losses.append(loss_value)
            step += 1

        if val_idx:
            scores = [
                evaluate_hologram(
                    weights, images[i], plan, unfold_cfg,
                    seed=_sample_seed(train_cfg.seed, i),
                )
                for i in val_idx
            ]
            val_psnr = float(np.mean([s[0] for s in scores]))
            val_ssim = float(np.mean([s[1] for s in scores]))
        else:
            val_psnr = float("nan")
            val_ssim = float("nan")
        wall_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(
            f"{epoch},{step},{np.mean(epoch_losses):.10g},{val_psnr:.4f},{val_ssim:.6f},{wall_ms:.1f}"
        )

    if log_path is not None:
        with open(log_path, "w") as fh:
            fh.write(LOG_HEADER + "\n")
            fh.write("\n".join(rows) + "\n")
    return weights
