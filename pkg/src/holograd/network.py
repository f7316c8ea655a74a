"""Learned complex-valued denoiser with deformable attention.

The denoiser maps a complex field estimate to a cleaner one in three parts:
a feature-extraction head of two stride-2 complex convolutions (4x spatial
reduction into C channels), a stack of transformer blocks whose attention
samples keys and values at learned offsets from a sparse reference grid
(64x fewer keys than queries), and a recovery tail of two upsample+conv
stages that returns to one channel and adds the input back. With the final
recovery convolution zero-initialized the whole module starts as the
identity, so an untrained unfolding behaves exactly like plain gradient
descent.

All forward functions are written on the autodiff primitives and accept
either tracked variables (training) or plain arrays (inference).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .fields import ComplexField

__all__ = [
    "CdatWeights",
    "PcdWeights",
    "AttentionGeometry",
    "init_pcd_weights",
    "init_stage_weights",
    "snap_to_float32",
    "count_parameters",
    "fem_forward",
    "compute_offsets",
    "deformable_downsample",
    "relative_position_bias",
    "cdsa_forward",
    "cffn_forward",
    "cdat_forward",
    "pirm_forward",
    "pcd_forward",
    "global_attention_reference",
]

CELL = 8  # reference-grid cell side; one key per CELL x CELL query block
DEFAULT_CHANNELS = 32
DEFAULT_TABLE = 15  # odd, so zero displacement lands on a table node


@dataclass
class CdatWeights:
    """Parameters of one attention + feed-forward transformer block."""

    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    off_dw: np.ndarray
    off_dw_bias: np.ndarray
    off_ln_gamma: np.ndarray
    off_ln_beta: np.ndarray
    off_proj: np.ndarray
    bias_table: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray

    def named_tensors(self):
        for name in (
            "ln1_gamma",
            "ln1_beta",
            "wq",
            "wk",
            "wv",
            "off_dw",
            "off_dw_bias",
            "off_ln_gamma",
            "off_ln_beta",
            "off_proj",
            "bias_table",
            "ln2_gamma",
            "ln2_beta",
            "ffn_w1",
            "ffn_b1",
            "ffn_w2",
            "ffn_b2",
        ):
            yield name, getattr(self, name)


@dataclass
class PcdWeights:
    """All parameters of one unfolding stage.

    ``step`` is the stage's data-step scalar (the gradient-update length,
    learned alongside the network). ``fem_*`` are the bias-free stride-2
    feature convolutions, ``blocks`` the transformer blocks, ``pirm_*`` the
    recovery convolutions. The final recovery kernel and bias start at zero
    so the denoiser opens as identity.
    """

    step: np.ndarray
    fem_w1: np.ndarray
    fem_w2: np.ndarray
    blocks: list[CdatWeights]
    pirm_w1: np.ndarray
    pirm_b1: np.ndarray
    pirm_w2: np.ndarray
    pirm_b2: np.ndarray

    @property
    def channels(self) -> int:
        return self.fem_w1.shape[3]

    def named_tensors(self):
        yield "step", self.step
        yield "fem.w1", self.fem_w1
        yield "fem.w2", self.fem_w2
        for i, blk in enumerate(self.blocks):
            for name, arr in blk.named_tensors():
                yield f"cdat{i}.{name}", arr
        yield "pirm.w1", self.pirm_w1
        yield "pirm.b1", self.pirm_b1
        yield "pirm.w2", self.pirm_w2
        yield "pirm.b2", self.pirm_b2


def _snap(a: np.ndarray) -> np.ndarray:
    """Round to the nearest 32-bit-representable value, kept in 64-bit.

    Weights live on the float32 grid end to end, which makes the on-disk
    format (32-bit) a lossless image of the in-memory state.
    """
    if np.iscomplexobj(a):
        return a.astype(np.complex64).astype(np.complex128)
    return a.astype(np.float32).astype(np.float64)


def snap_to_float32(w: PcdWeights) -> None:
    """Snap every tensor of a stage onto the float32 grid, in place."""
    w.step = _snap(w.step)
    w.fem_w1 = _snap(w.fem_w1)
    w.fem_w2 = _snap(w.fem_w2)
    for blk in w.blocks:
        for name, arr in blk.named_tensors():
            setattr(blk, name, _snap(arr))
    w.pirm_w1 = _snap(w.pirm_w1)
    w.pirm_b1 = _snap(w.pirm_b1)
    w.pirm_w2 = _snap(w.pirm_w2)
    w.pirm_b2 = _snap(w.pirm_b2)


def _cnormal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    return _snap(std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))


def init_pcd_weights(
    channels: int = DEFAULT_CHANNELS,
    blocks: int = 1,
    table_size: int = DEFAULT_TABLE,
    rng: np.random.Generator | None = None,
    step: float = 1.0,
) -> PcdWeights:
    """Fresh stage weights: small random kernels, identity-opening recovery.

    Complex kernels draw i.i.d. normal with std 0.02 per real component;
    the position-bias table uses std 0.01; normalization affines start at
    identity; every bias and the final recovery convolution start at zero.
    The data-step scalar starts at ``step``.
    """
    if channels < 1 or blocks < 1 or table_size < 2:
        raise ConfigError(
            f"invalid denoiser geometry: channels={channels} blocks={blocks} table={table_size}"
        )
    if not step > 0:
        raise ConfigError(f"initial step must be positive, got {step}")
    rng = rng or np.random.default_rng(0)
    c = channels
    blist = []
    for _ in range(blocks):
        blist.append(
            CdatWeights(
                ln1_gamma=np.ones(c, dtype=np.complex128),
                ln1_beta=np.zeros(c, dtype=np.complex128),
                wq=_cnormal(rng, (c, c), 0.02),
                wk=_cnormal(rng, (c, c), 0.02),
                wv=_cnormal(rng, (c, c), 0.02),
                off_dw=_snap(0.02 * rng.standard_normal((9, 9, 2 * c))),
                off_dw_bias=np.zeros(2 * c),
                off_ln_gamma=np.ones(2 * c),
                off_ln_beta=np.zeros(2 * c),
                off_proj=_snap(0.02 * rng.standard_normal((2 * c, 2))),
                bias_table=_snap(0.01 * rng.standard_normal((table_size, table_size))),
                ln2_gamma=np.ones(c, dtype=np.complex128),
                ln2_beta=np.zeros(c, dtype=np.complex128),
                ffn_w1=_cnormal(rng, (c, 4 * c), 0.02),
                ffn_b1=np.zeros(4 * c, dtype=np.complex128),
                ffn_w2=_cnormal(rng, (4 * c, c), 0.02),
                ffn_b2=np.zeros(c, dtype=np.complex128),
            )
        )
    return PcdWeights(
        step=_snap(np.asarray(float(step))),
        fem_w1=_cnormal(rng, (3, 3, 1, c), 0.02),
        fem_w2=_cnormal(rng, (3, 3, c, c), 0.02),
        blocks=blist,
        pirm_w1=_cnormal(rng, (3, 3, c, c), 0.02),
        pirm_b1=np.zeros(c, dtype=np.complex128),
        pirm_w2=np.zeros((3, 3, c, 1), dtype=np.complex128),
        pirm_b2=np.zeros(1, dtype=np.complex128),
    )


def init_stage_weights(
    stages: int,
    channels: int = DEFAULT_CHANNELS,
    blocks: int = 1,
    table_size: int = DEFAULT_TABLE,
    seed: int = 0,
    step: float = 1.0,
) -> list[PcdWeights]:
    """Independent weights for each unfolding stage from one seed."""
    if stages < 1:
        raise ConfigError(f"stage count must be at least 1, got {stages}")
    rng = np.random.default_rng(seed)
    return [
        init_pcd_weights(channels, blocks, table_size, rng, step=step)
        for _ in range(stages)
    ]


def count_parameters(weights) -> int:
    """Real scalar parameter count (complex entries count twice)."""
    stages = weights if isinstance(weights, (list, tuple)) else [weights]
    total = 0
    for w in stages:
        for _, arr in w.named_tensors():
            total += arr.size * (2 if np.iscomplexobj(arr) else 1)
    return total


@dataclass(frozen=True)
class AttentionGeometry:
    """Query and reference-point layout for one feature-map size.

    Queries are every feature pixel in row-major order; reference points are
    the centers of the CELL x CELL tiling, so there are 64x fewer keys than
    queries.
    """

    height: int
    width: int
    n_q: int
    n_k: int
    query_coords: np.ndarray = dataclass_field(repr=False)
    ref_coords: np.ndarray = dataclass_field(repr=False)

    @classmethod
    def for_feature_shape(cls, height: int, width: int) -> "AttentionGeometry":
        if height % CELL or width % CELL:
            raise ConfigError(
                f"feature map {height}x{width} not divisible by the {CELL}-pixel cell"
            )
        gh, gw = height // CELL, width // CELL
        qr, qc = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
        query = np.column_stack([qr.ravel(), qc.ravel()]).astype(np.float64)
        rr, rc = np.meshgrid(np.arange(gh), np.arange(gw), indexing="ij")
        ref = np.column_stack(
            [rr.ravel() * CELL + (CELL - 1) / 2.0, rc.ravel() * CELL + (CELL - 1) / 2.0]
        )
        return cls(
            height=height,
            width=width,
            n_q=height * width,
            n_k=gh * gw,
            query_coords=query,
            ref_coords=ref,
        )


def _as_map(v):
    if isinstance(v, ComplexField):
        return v.data
    return v


def fem_forward(v, w: PcdWeights):
    """Feature extraction: two stride-2 complex 3x3 convolutions.

    Input H x W must be divisible by 32 so the downstream attention grid
    tiles evenly; the error names the nearest valid (padded-up) size.
    """
    v = _as_map(v)
    h, wd = v.shape[0], v.shape[1]
    if h % 32 or wd % 32:
        nh = ((h + 31) // 32) * 32
        nw = ((wd + 31) // 32) * 32
        raise ConfigError(
            f"input {h}x{wd} not divisible by 32; pad to {nh}x{nw} (nearest valid size)"
        )
    x = ad.reshape(v, (h, wd, 1))
    x = ad.conv2d(x, w.fem_w1, stride=2, padding=1)
    x = ad.crelu(x)
    return ad.conv2d(x, w.fem_w2, stride=2, padding=1)


def _complex_ln(f, gamma, beta, eps: float = 1e-5):
    """Channel layer norm: complex mean, pooled real+imag variance."""
    mean = ad.mean_(f, axis=-1, keepdims=True)
    d = ad.sub(f, mean)
    var = ad.mean_(ad.real_part(ad.mul(d, ad.conj(d))), axis=-1, keepdims=True)
    normed = ad.mul(d, ad.rsqrt(ad.add(var, eps)))
    return ad.add(ad.mul(normed, gamma), beta)


def _real_ln(x, gamma, beta, eps: float = 1e-5):
    mean = ad.mean_(x, axis=-1, keepdims=True)
    d = ad.sub(x, mean)
    var = ad.mean_(ad.mul(d, d), axis=-1, keepdims=True)
    return ad.add(ad.mul(ad.mul(d, ad.rsqrt(ad.add(var, eps))), gamma), beta)


def compute_offsets(q, w: CdatWeights):
    """Per-reference-point (row, col) offsets from the query map.

    The complex queries are viewed as 2C real channels, reduced to the
    reference grid by a depthwise 9x9 stride-8 convolution, normalized,
    passed through GELU, and projected to 2 channels by a bias-free 1x1
    convolution. No bias means zero queries give exactly zero offsets, and
    a uniform shift of all points cannot be produced from nothing.
    """
    stacked = ad.concat(ad.real_part(q), ad.imag_part(q), axis=2)
    t = ad.depthwise_conv2d(stacked, w.off_dw, stride=CELL, padding=4)
    t = ad.add(t, w.off_dw_bias)
    t = _real_ln(t, w.off_ln_gamma, w.off_ln_beta)
    t = ad.gelu(t)
    gh, gw, c2 = t.shape
    flat = ad.matmul(ad.reshape(t, (gh * gw, c2)), w.off_proj)
    return ad.reshape(flat, (gh, gw, 2))


def deformable_downsample(f, offsets, geometry: AttentionGeometry):
    """Sample features at reference points displaced by the offsets.

    Returns the (N_K, C) samples and the (N_K, 2) sample coordinates
    (reference + offset, before clamping; the gather clamps internally).
    """
    coords = ad.add(
        ad.reshape(offsets, (geometry.n_k, 2)), geometry.ref_coords
    )
    return ad.bilinear_gather(f, coords), coords


def relative_position_bias(table, query_coords, key_coords, geometry: AttentionGeometry):
    """Bias matrix from a coarse table of normalized displacements.

    The (query - key) displacement, whose components span
    [-(H-1), +(H-1)] per axis on an H-wide feature map, is mapped linearly
    onto the table's coordinate range and the table is sampled bilinearly:
    equal displacements get equal biases, and a displacement landing on a
    table node returns that entry exactly. Gradients reach both the table
    and, through the sampling position, the key coordinates.
    """
    s = np.asarray(table).shape[0] if not isinstance(table, ad.Var) else table.value.shape[0]
    hf, wf = geometry.height, geometry.width
    delta = ad.sub(
        query_coords.reshape(geometry.n_q, 1, 2),
        ad.reshape(key_coords, (1, geometry.n_k, 2)),
    )
    scale = np.array(
        [(s - 1) / (2.0 * (hf - 1)), (s - 1) / (2.0 * (wf - 1))]
    )
    center = (s - 1) / 2.0
    tcoords = ad.add(ad.mul(delta, scale), center)
    flat = ad.reshape(tcoords, (geometry.n_q * geometry.n_k, 2))
    table3 = ad.reshape(table, (s, s, 1))
    b = ad.bilinear_gather(table3, flat)
    return ad.reshape(b, (geometry.n_q, geometry.n_k))


def cdsa_forward(f, w: CdatWeights, geometry: AttentionGeometry, offsets=None):
    """Deformable attention over a (pre-normalized) complex feature map.

    Queries come from a 1x1 complex projection of every feature pixel; keys
    and values from 1x1 projections of features sampled at offset reference
    points. Scores are the real part of the Hermitian query-key similarity
    scaled by 1/sqrt(C), plus the relative-position bias; a row softmax
    yields real nonnegative weights that mix the complex values.

    ``offsets`` overrides the computed offsets (used to probe equivariance
    with the sampling pattern frozen).
    """
    hf, wf, c = f.shape
    q = ad.matmul(ad.reshape(f, (geometry.n_q, c)), w.wq)
    if offsets is None:
        offsets = compute_offsets(ad.reshape(q, (hf, wf, c)), w)
    sampled, key_coords = deformable_downsample(f, offsets, geometry)
    k = ad.matmul(sampled, w.wk)
    v = ad.matmul(sampled, w.wv)
    scores = ad.mul(
        ad.real_part(ad.matmul(q, ad.conj(ad.transpose2(k)))), 1.0 / np.sqrt(c)
    )
    scores = ad.add(scores, relative_position_bias(w.bias_table, geometry.query_coords, key_coords, geometry))
    attn = ad.softmax(scores, axis=-1)
    out = ad.matmul(attn, v)
    return ad.reshape(out, (hf, wf, c))


def cffn_forward(f, w: CdatWeights):
    """Per-location complex feed-forward: C -> 4C -> C with split rectifier."""
    hf, wf, c = f.shape
    t = ad.reshape(f, (hf * wf, c))
    t = ad.crelu(ad.add(ad.matmul(t, w.ffn_w1), w.ffn_b1))
    t = ad.add(ad.matmul(t, w.ffn_w2), w.ffn_b2)
    return ad.reshape(t, (hf, wf, c))


def cdat_forward(f, w: CdatWeights, geometry: AttentionGeometry):
    """One transformer block: pre-norm attention and feed-forward residuals."""
    f1 = ad.add(f, cdsa_forward(_complex_ln(f, w.ln1_gamma, w.ln1_beta), w, geometry))
    return ad.add(f1, cffn_forward(_complex_ln(f1, w.ln2_gamma, w.ln2_beta), w))


def pirm_forward(g, v, w: PcdWeights):
    """Recovery: two upsample+conv stages back to one channel, plus input.

    With the final convolution and bias at zero the output equals ``v``
    exactly, which is the initialization contract of the whole denoiser.
    """
    t = ad.upsample2x(g)
    t = ad.crelu(ad.add(ad.conv2d(t, w.pirm_w1, stride=1, padding=1), w.pirm_b1))
    t = ad.upsample2x(t)
    t = ad.add(ad.conv2d(t, w.pirm_w2, stride=1, padding=1), w.pirm_b2)
    v = _as_map(v)
    h, wd = v.shape[0], v.shape[1]
    return ad.add(v, ad.reshape(t, (h, wd)))


def pcd_forward(v, w: PcdWeights, geometry: AttentionGeometry | None = None):
    """Full denoiser: features, transformer blocks, recovery with residual."""
    v = _as_map(v)
    f = fem_forward(v, w)
    if geometry is None:
        geometry = AttentionGeometry.for_feature_shape(f.shape[0], f.shape[1])
    for blk in w.blocks:
        f = cdat_forward(f, blk, geometry)
    return pirm_forward(f, v, w)


def global_attention_reference(f: np.ndarray, w: CdatWeights, chunk: int = 2048) -> np.ndarray:
    """Dense all-pairs attention over the same projections, for benchmarks.

    Every feature pixel attends to every other (N_Q keys instead of
    N_Q/64), with the same Hermitian scoring and no position bias. Rows are
    processed in chunks to bound the N_Q x N_Q score memory. Inference
    only; nothing is recorded on a tape.
    """
    hf, wf, c = f.shape
    n = hf * wf
    fm = f.reshape(n, c)
    q = fm @ w.wq
    k = fm @ w.wk
    v = fm @ w.wv
    kh = np.conj(k).T
    out = np.empty((n, c), dtype=np.complex128)
    scale = 1.0 / np.sqrt(c)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        scores = np.real(q[lo:hi] @ kh) * scale
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=-1, keepdims=True)
        out[lo:hi] = attn @ v
    return out.reshape(hf, wf, c)
