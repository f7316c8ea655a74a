"""Reverse-mode automatic differentiation over complex numpy arrays.

A :class:`Tape` records every primitive applied to tracked values
(:class:`Var`) in execution order; :meth:`Tape.gradients` replays the record
backwards, which is a valid reverse topological order, accumulating
cotangents.

Real losses over complex parameters have no complex derivative, so gradients
follow the conjugate-cotangent convention: the gradient carried for a tensor
``t`` is ``g_t = dL/dRe(t) + 1j * dL/dIm(t)`` (equivalently ``2 dL/d conj(t)``
in Wirtinger calculus). For a holomorphic primitive ``y = f(x)`` the chain
rule reduces to ``g_x = g_y * conj(f'(x))``; non-holomorphic primitives
(absolute value, phase normalization, real/imaginary extraction, conjugation)
carry both Wirtinger terms. A steepest-descent step is then ``t - lr * g_t``,
and for real tensors ``g_t`` degrades to the ordinary gradient.

Every primitive accepts plain ndarrays as well as Vars; with no tracked
input it computes the value and returns a plain ndarray, so one forward
implementation serves both training and inference.

Elementwise guards: ``absval`` and ``unit_phase`` treat inputs with magnitude
below their guard as constants (zero gradient), and ``unit_phase`` returns 1
there. Gradient checks must avoid those regions, kinks of the rectifiers,
and integer-valued sample coordinates; :func:`check_gradients` draws its
test points away from all three.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.special import erf

from .errors import ConfigError

__all__ = [
    "Var",
    "Tape",
    "GradientCheckReport",
    "check_gradients",
    "check_function_gradients",
    "registered_ops",
    # primitives
    "add",
    "sub",
    "neg",
    "mul",
    "matmul",
    "conj",
    "real_part",
    "imag_part",
    "make_complex",
    "absval",
    "unit_phase",
    "sum_",
    "mean_",
    "reshape",
    "transpose2",
    "concat",
    "relu",
    "crelu",
    "gelu",
    "softmax",
    "rsqrt",
    "fft2c",
    "ifft2c",
    "conv2d",
    "depthwise_conv2d",
    "upsample2x",
    "bilinear_gather",
]


class Var:
    """A tracked array value on a tape."""

    __slots__ = ("value", "tape")

    def __init__(self, value: np.ndarray, tape: "Tape"):
        self.value = value
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, dtype={self.value.dtype})"


@dataclass
class _Node:
    op: str
    inputs: tuple
    output: Var
    backward: callable


class Tape:
    """Execution-ordered record of primitives for one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def leaf(self, value: np.ndarray) -> Var:
        """Track an array as a differentiable leaf."""
        arr = np.asarray(value)
        if np.iscomplexobj(arr):
            arr = arr.astype(np.complex128)
        else:
            arr = arr.astype(np.float64)
        return Var(arr, self)

    def record(self, op: str, inputs: tuple, output: Var, backward) -> None:
        if op not in _OP_NAMES:
            raise ConfigError(f"unregistered primitive {op!r} cannot go on the tape")
        self.nodes.append(_Node(op, inputs, output, backward))

    def gradients(self, loss: Var, wrt: list[Var]) -> list[np.ndarray]:
        """Cotangents of a real scalar loss for each requested variable.

        Returns one array per entry of ``wrt`` (zeros for variables the loss
        does not depend on), in the conjugate-cotangent convention described
        in the module docstring.
        """
        if loss.tape is not self:
            raise ConfigError("loss does not belong to this tape")
        if loss.value.size != 1:
            raise ConfigError(f"loss must be scalar, got shape {loss.value.shape}")
        if np.iscomplexobj(loss.value) and abs(complex(loss.value).imag) > 1e-12 * (
            1.0 + abs(complex(loss.value))
        ):
            raise ConfigError("loss must be real")
        grads: dict[int, np.ndarray] = {
            id(loss): np.ones_like(loss.value, dtype=np.float64)
        }
        for node in reversed(self.nodes):
            g_out = grads.pop(id(node.output), None)
            if g_out is None:
                continue
            for var, g in zip(node.inputs, node.backward(g_out)):
                if var is None or g is None:
                    continue
                acc = grads.get(id(var))
                grads[id(var)] = g if acc is None else acc + g
        out = []
        for v in wrt:
            g = grads.get(id(v))
            if g is None:
                g = np.zeros_like(v.value)
            out.append(g)
        return out


# ---------------------------------------------------------------------------
# primitive machinery

_OP_NAMES: set[str] = set()
_CHECK_BUILDERS: dict[str, callable] = {}


def _register(name: str, builder=None):
    _OP_NAMES.add(name)
    if builder is not None:
        _CHECK_BUILDERS[name] = builder


def registered_ops() -> tuple[str, ...]:
    """Names of every primitive the tape accepts."""
    return tuple(sorted(_OP_NAMES))


def _split(x):
    """(value, var_or_None) for a Var or plain array."""
    if isinstance(x, Var):
        return x.value, x
    return np.asarray(x), None


def _tape_of(*vars_):
    tape = None
    for v in vars_:
        if v is None:
            continue
        if tape is None:
            tape = v.tape
        elif tape is not v.tape:
            raise ConfigError("operands belong to different tapes")
    return tape


def _emit(op: str, value: np.ndarray, inputs: tuple, backward):
    """Package a primitive's result, recording it when any input is tracked."""
    tape = _tape_of(*inputs)
    if tape is None:
        return value
    out = Var(value, tape)
    tape.record(op, inputs, out, backward)
    return out


def _like(g: np.ndarray, value: np.ndarray) -> np.ndarray:
    """Project a cotangent onto the dtype of the value it belongs to."""
    if np.iscomplexobj(value):
        return g if np.iscomplexobj(g) else g.astype(np.complex128)
    # reshape keeps 0-d cotangents 0-d (ascontiguousarray returns >= 1-d)
    return np.ascontiguousarray(g.real).reshape(g.shape) if np.iscomplexobj(g) else g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a cotangent over the axes broadcasting expanded."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    av, avar = _split(a)
    bv, bvar = _split(b)
    out = av + bv

    def backward(g):
        return (
            None if avar is None else _like(_unbroadcast(g, av.shape), av),
            None if bvar is None else _like(_unbroadcast(g, bv.shape), bv),
        )

    return _emit("add", out, (avar, bvar), backward)


def sub(a, b):
    av, avar = _split(a)
    bv, bvar = _split(b)
    out = av - bv

    def backward(g):
        return (
            None if avar is None else _like(_unbroadcast(g, av.shape), av),
            None if bvar is None else _like(_unbroadcast(-g, bv.shape), bv),
        )

    return _emit("sub", out, (avar, bvar), backward)


def neg(a):
    av, avar = _split(a)

    def backward(g):
        return (-g,)

    return _emit("neg", -av, (avar,), backward)


def mul(a, b):
    av, avar = _split(a)
    bv, bvar = _split(b)
    out = av * bv

    def backward(g):
        ga = None if avar is None else _like(_unbroadcast(g * np.conj(bv), av.shape), av)
        gb = None if bvar is None else _like(_unbroadcast(g * np.conj(av), bv.shape), bv)
        return ga, gb

    return _emit("mul", out, (avar, bvar), backward)


def matmul(a, b):
    av, avar = _split(a)
    bv, bvar = _split(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise ConfigError("matmul expects 2-D operands")
    out = av @ bv

    def backward(g):
        ga = None if avar is None else _like(g @ np.conj(bv).T, av)
        gb = None if bvar is None else _like(np.conj(av).T @ g, bv)
        return ga, gb

    return _emit("matmul", out, (avar, bvar), backward)


# ---------------------------------------------------------------------------
# complex structure


def conj(a):
    av, avar = _split(a)

    def backward(g):
        return (np.conj(g),)

    return _emit("conj", np.conj(av), (avar,), backward)


def real_part(a):
    av, avar = _split(a)

    def backward(g):
        return (_like(g, av) if not np.iscomplexobj(av) else g.astype(np.complex128),)

    return _emit("real_part", np.ascontiguousarray(av.real), (avar,), backward)


def imag_part(a):
    av, avar = _split(a)

    def backward(g):
        return (1j * g,)

    return _emit("imag_part", np.ascontiguousarray(av.imag), (avar,), backward)


def make_complex(re, im):
    rv, rvar = _split(re)
    iv, ivar = _split(im)
    out = rv + 1j * iv

    def backward(g):
        return (
            None if rvar is None else np.ascontiguousarray(g.real),
            None if ivar is None else np.ascontiguousarray(g.imag),
        )

    return _emit("make_complex", out, (rvar, ivar), backward)


def absval(a, guard: float = 1e-12):
    """Elementwise magnitude; inputs below ``guard`` are treated as constants."""
    av, avar = _split(a)
    mag = np.abs(av)

    def backward(g):
        safe = np.maximum(mag, guard)
        phase = np.where(mag < guard, 0.0, av / safe)
        return (_like(g * phase, av),)

    return _emit("absval", mag, (avar,), backward)


def unit_phase(a, guard: float = 1e-12):
    """Elementwise ``a/|a|`` with the value pinned to 1 below the guard."""
    av, avar = _split(a)
    mag = np.abs(av)
    small = mag < guard
    u = np.where(small, 1.0 + 0.0j, av / np.where(small, 1.0, mag))

    def backward(g):
        denom = np.where(small, 1.0, 2.0 * mag)
        gx = (g - np.conj(g) * u * u) / denom
        return (np.where(small, 0.0 + 0.0j, gx),)

    return _emit("unit_phase", u, (avar,), backward)


# ---------------------------------------------------------------------------
# reductions and shape


def sum_(a, axis=None, keepdims: bool = False):
    av, avar = _split(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, av.shape).astype(g.dtype),)

    return _emit("sum", out, (avar,), backward)


def mean_(a, axis=None, keepdims: bool = False):
    av, avar = _split(a)
    out = av.mean(axis=axis, keepdims=keepdims)
    count = av.size / out.size

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg / count, av.shape).astype(g.dtype),)

    return _emit("mean", out, (avar,), backward)


def reshape(a, shape):
    av, avar = _split(a)

    def backward(g):
        return (g.reshape(av.shape),)

    return _emit("reshape", av.reshape(shape), (avar,), backward)


def transpose2(a):
    av, avar = _split(a)
    if av.ndim != 2:
        raise ConfigError("transpose2 expects a 2-D operand")

    def backward(g):
        return (g.T.copy(),)

    return _emit("transpose2", av.T.copy(), (avar,), backward)


def concat(a, b, axis: int):
    av, avar = _split(a)
    bv, bvar = _split(b)
    out = np.concatenate([av, bv], axis=axis)
    split_at = av.shape[axis]

    def backward(g):
        ga, gb = np.split(g, [split_at], axis=axis)
        return (
            None if avar is None else _like(np.ascontiguousarray(ga), av),
            None if bvar is None else _like(np.ascontiguousarray(gb), bv),
        )

    return _emit("concat", out, (avar, bvar), backward)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a):
    av, avar = _split(a)

    def backward(g):
        return (g * (av > 0),)

    return _emit("relu", np.maximum(av, 0.0), (avar,), backward)


def crelu(a):
    """Split rectifier: ReLU on real and imaginary parts independently."""
    av, avar = _split(a)
    out = np.maximum(av.real, 0.0) + 1j * np.maximum(av.imag, 0.0)

    def backward(g):
        return (g.real * (av.real > 0) + 1j * (g.imag * (av.imag > 0)),)

    return _emit("crelu", out, (avar,), backward)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a):
    """Exact Gaussian-error-linear unit on a real array."""
    av, avar = _split(a)
    cdf = 0.5 * (1.0 + erf(av * _INV_SQRT2))

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * av * av)
        return (g * (cdf + av * pdf),)

    return _emit("gelu", av * cdf, (avar,), backward)


def softmax(a, axis: int = -1):
    av, avar = _split(a)
    if np.iscomplexobj(av):
        raise ConfigError("softmax expects a real operand")
    shifted = av - av.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _emit("softmax", out, (avar,), backward)


def rsqrt(a):
    """Elementwise ``a ** -0.5`` on a positive real array."""
    av, avar = _split(a)
    out = 1.0 / np.sqrt(av)

    def backward(g):
        return (-0.5 * g * out / av,)

    return _emit("rsqrt", out, (avar,), backward)


# ---------------------------------------------------------------------------
# Fourier transforms (unitary, over the first two axes)


def fft2c(a):
    av, avar = _split(a)

    def backward(g):
        return (np.fft.ifft2(g, axes=(0, 1), norm="ortho"),)

    return _emit("fft2c", np.fft.fft2(av, axes=(0, 1), norm="ortho"), (avar,), backward)


def ifft2c(a):
    av, avar = _split(a)

    def backward(g):
        return (np.fft.fft2(g, axes=(0, 1), norm="ortho"),)

    return _emit("ifft2c", np.fft.ifft2(av, axes=(0, 1), norm="ortho"), (avar,), backward)


# ---------------------------------------------------------------------------
# convolutions and resampling


def _pad_hw(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((padding, padding), (padding, padding), (0, 0)))


def conv2d(x, w, stride: int = 1, padding: int = 0):
    """2-D correlation of an (H, W, Cin) map with (kh, kw, Cin, Cout) taps.

    Implemented as one GEMM per kernel tap over strided views, which keeps
    the arithmetic in BLAS without materializing patch matrices.
    """
    xv, xvar = _split(x)
    wv, wvar = _split(w)
    if xv.ndim != 3 or wv.ndim != 4:
        raise ConfigError("conv2d expects (H, W, Cin) input and (kh, kw, Cin, Cout) weights")
    if xv.shape[2] != wv.shape[2]:
        raise ConfigError(
            f"conv2d channel mismatch: input has {xv.shape[2]}, weights expect {wv.shape[2]}"
        )
    kh, kw, cin, cout = wv.shape
    xp = _pad_hw(xv, padding)
    hp, wp, _ = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ConfigError("conv2d input smaller than kernel")
    acc = np.zeros((ho * wo, cout), dtype=np.result_type(xv, wv))
    for di in range(kh):
        for dj in range(kw):
            slab = xp[di : di + stride * ho : stride, dj : dj + stride * wo : stride, :]
            acc += slab.reshape(-1, cin) @ wv[di, dj]
    out = acc.reshape(ho, wo, cout)

    def backward(g):
        gm = g.reshape(-1, cout)
        gw = None
        gx = None
        if wvar is not None:
            gw = np.empty_like(wv)
        if xvar is not None:
            gxp = np.zeros(xp.shape, dtype=np.complex128 if np.iscomplexobj(g) or np.iscomplexobj(wv) else np.float64)
        for di in range(kh):
            for dj in range(kw):
                slab = xp[di : di + stride * ho : stride, dj : dj + stride * wo : stride, :]
                if wvar is not None:
                    gw[di, dj] = _like(np.conj(slab.reshape(-1, cin)).T @ gm, wv)
                if xvar is not None:
                    gslab = (gm @ np.conj(wv[di, dj]).T).reshape(ho, wo, cin)
                    gxp[di : di + stride * ho : stride, dj : dj + stride * wo : stride, :] += gslab
        if xvar is not None:
            if padding:
                gxp = gxp[padding:-padding, padding:-padding, :]
            gx = _like(gxp, xv)
        return gx, gw

    return _emit("conv2d", out, (xvar, wvar), backward)


def depthwise_conv2d(x, w, stride: int = 1, padding: int = 0):
    """Per-channel 2-D correlation with (kh, kw, C) taps."""
    xv, xvar = _split(x)
    wv, wvar = _split(w)
    if xv.ndim != 3 or wv.ndim != 3:
        raise ConfigError("depthwise_conv2d expects (H, W, C) input and (kh, kw, C) weights")
    if xv.shape[2] != wv.shape[2]:
        raise ConfigError(
            f"depthwise channel mismatch: input has {xv.shape[2]}, weights expect {wv.shape[2]}"
        )
    kh, kw, c = wv.shape
    xp = _pad_hw(xv, padding)
    hp, wp, _ = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ConfigError("depthwise_conv2d input smaller than kernel")
    out = np.zeros((ho, wo, c), dtype=np.result_type(xv, wv))
    for di in range(kh):
        for dj in range(kw):
            slab = xp[di : di + stride * ho : stride, dj : dj + stride * wo : stride, :]
            out += slab * wv[di, dj]

    def backward(g):
        gw = np.empty_like(wv) if wvar is not None else None
        gx = None
        if xvar is not None:
            gxp = np.zeros(xp.shape, dtype=np.complex128 if np.iscomplexobj(g) or np.iscomplexobj(wv) else np.float64)
        for di in range(kh):
            for dj in range(kw):
                slab = xp[di : di + stride * ho : stride, dj : dj + stride * wo : stride, :]
                if wvar is not None:
                    gw[di, dj] = _like((np.conj(slab) * g).sum(axis=(0, 1)), wv)
                if xvar is not None:
                    gxp[di : di + stride * ho : stride, dj : dj + stride * wo : stride, :] += (
                        g * np.conj(wv[di, dj])
                    )
        if xvar is not None:
            if padding:
                gxp = gxp[padding:-padding, padding:-padding, :]
            gx = _like(gxp, xv)
        return gx, gw

    return _emit("depthwise_conv2d", out, (xvar, wvar), backward)


def upsample2x(a):
    """Nearest-neighbor 2x upsampling of an (H, W, C) map."""
    av, avar = _split(a)
    out = np.repeat(np.repeat(av, 2, axis=0), 2, axis=1)

    def backward(g):
        h, w, c = av.shape
        return (g.reshape(h, 2, w, 2, c).sum(axis=(1, 3)),)

    return _emit("upsample2x", out, (avar,), backward)


def bilinear_gather(f, coords):
    """Differentiable bilinear sampling of (H, W, C) at (N, 2) row/col points.

    Gradients flow to both the feature map and the coordinates. Coordinates
    are clamped to the grid; clamped points get zero coordinate gradient
    (the declared non-smooth boundary), as do points exactly on the last
    grid line.
    """
    fv, fvar = _split(f)
    cv, cvar = _split(coords)
    if fv.ndim != 3:
        raise ConfigError("bilinear_gather expects an (H, W, C) feature map")
    if cv.ndim != 2 or cv.shape[1] != 2:
        raise ConfigError(f"coords must have shape (N, 2), got {cv.shape}")
    h, w, _ = fv.shape
    r = np.clip(cv[:, 0], 0.0, h - 1.0)
    c = np.clip(cv[:, 1], 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    wr = (r - r0)[:, None]
    wc = (c - c0)[:, None]
    f00 = fv[r0, c0]
    f01 = fv[r0, c1]
    f10 = fv[r1, c0]
    f11 = fv[r1, c1]
    out = (
        f00 * (1 - wr) * (1 - wc)
        + f01 * (1 - wr) * wc
        + f10 * wr * (1 - wc)
        + f11 * wr * wc
    )

    def backward(g):
        gf = None
        gc = None
        if fvar is not None:
            gf = np.zeros_like(fv, dtype=g.dtype if np.iscomplexobj(fv) else fv.dtype)
            flat = gf.reshape(h * w, -1)
            np.add.at(flat, r0 * w + c0, _like(g * (1 - wr) * (1 - wc), fv))
            np.add.at(flat, r0 * w + c1, _like(g * (1 - wr) * wc, fv))
            np.add.at(flat, r1 * w + c0, _like(g * wr * (1 - wc), fv))
            np.add.at(flat, r1 * w + c1, _like(g * wr * wc, fv))
        if cvar is not None:
            d_dr = (f10 - f00) * (1 - wc) + (f11 - f01) * wc
            d_dc = (f01 - f00) * (1 - wr) + (f11 - f10) * wr
            gr = np.real(np.conj(g) * d_dr).sum(axis=-1)
            gcol = np.real(np.conj(g) * d_dc).sum(axis=-1)
            in_r = (cv[:, 0] > 0.0) & (cv[:, 0] < h - 1.0)
            in_c = (cv[:, 1] > 0.0) & (cv[:, 1] < w - 1.0)
            gc = np.stack([np.where(in_r, gr, 0.0), np.where(in_c, gcol, 0.0)], axis=1)
        return gf, gc

    return _emit("bilinear_gather", out, (fvar, cvar), backward)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradientCheckReport:
    """Outcome of comparing tape gradients against central differences."""

    op: str
    checked: int
    max_rel_error: float
    worst: tuple = ()
    failures: list = dataclass_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def check_function_gradients(
    fn,
    leaf_values: list[np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
    max_components: int = 64,
    seed: int = 0,
    op: str = "<function>",
) -> GradientCheckReport:
    """Compare tape gradients of ``fn`` against central differences.

    ``fn`` maps leaf Vars (or plain arrays) to a real scalar; it is rebuilt
    on a fresh tape for the analytic pass and evaluated tape-free for each
    finite-difference probe. Up to ``max_components`` real components per
    leaf are probed (all of them for small leaves), chosen by a seeded draw.
    """
    tape = Tape()
    leaves = [tape.leaf(v) for v in leaf_values]
    loss = fn(*leaves)
    if not isinstance(loss, Var):
        raise ConfigError("function under check produced no tracked output")
    grads = tape.gradients(loss, leaves)

    def eval_at(vals):
        out = fn(*[np.asarray(v) for v in vals])
        out = out.value if isinstance(out, Var) else out
        return float(np.real(np.asarray(out)).reshape(()))

    rng = np.random.default_rng(seed)
    report = GradientCheckReport(op=op, checked=0, max_rel_error=0.0)
    for li, (val, grad) in enumerate(zip(leaf_values, grads)):
        val = np.asarray(val)
        n = val.size
        idx = np.arange(n) if n <= max_components else rng.choice(n, max_components, replace=False)
        parts = (("real", 1.0), ("imag", 1j)) if np.iscomplexobj(val) else (("real", 1.0),)
        for k in idx:
            for part, direction in parts:
                probe = val.copy().reshape(-1)
                base = probe[k]
                probe[k] = base + h * direction
                hi = eval_at([probe.reshape(val.shape) if j == li else leaf_values[j] for j in range(len(leaf_values))])
                probe[k] = base - h * direction
                lo = eval_at([probe.reshape(val.shape) if j == li else leaf_values[j] for j in range(len(leaf_values))])
                fd = (hi - lo) / (2.0 * h)
                an = grad.reshape(-1)[k]
                an = an.real if part == "real" else an.imag
                denom = max(abs(fd), abs(an), 1e-8)
                rel = abs(fd - an) / denom
                report.checked += 1
                if rel > report.max_rel_error:
                    report.max_rel_error = rel
                    report.worst = (li, int(k), part, float(an), float(fd))
                if rel > tol:
                    report.failures.append((li, int(k), part, float(an), float(fd), rel))
    return report


def check_gradients(op_name: str, shapes=None, seeds=(0,), h: float = 1e-5, tol: float = 1e-4) -> GradientCheckReport:
    """Finite-difference check of one registered primitive.

    Each seed draws fresh operands away from the primitive's declared
    non-smooth regions, builds a seeded linear functional of the output as
    the loss, and compares every probed component. Raises for primitives
    with no registered check recipe.
    """
    if op_name not in _CHECK_BUILDERS:
        raise ConfigError(f"no gradient-check recipe registered for op {op_name!r}")
    builder = _CHECK_BUILDERS[op_name]
    merged = GradientCheckReport(op=op_name, checked=0, max_rel_error=0.0)
    for seed in seeds:
        rng = np.random.default_rng(seed)
        fn, leaf_values = builder(rng, shapes)
        rep = check_function_gradients(fn, leaf_values, h=h, tol=tol, seed=seed, op=op_name)
        merged.checked += rep.checked
        if rep.max_rel_error > merged.max_rel_error:
            merged.max_rel_error = rep.max_rel_error
            merged.worst = rep.worst
        merged.failures.extend(rep.failures)
    return merged


def _scalarizer(shape, dtype, rng):
    """Seeded linear functional of an op output, as a loss head."""
    w_re = rng.standard_normal(shape)
    w_im = rng.standard_normal(shape)
    if np.issubdtype(np.dtype(dtype), np.complexfloating):
        def head(y):
            return add(sum_(mul(real_part(y), w_re)), sum_(mul(imag_part(y), w_im)))
    else:
        def head(y):
            return sum_(mul(y, w_re))
    return head


def _cplx(rng, shape, min_mag: float = 0.0):
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if min_mag > 0.0:
        z = z + min_mag * z / np.abs(z)
    return z


def _away_from_zero(rng, shape, margin: float = 0.1):
    x = rng.standard_normal(shape)
    return x + np.sign(x) * margin


def _register_builders():
    def simple(name, make_leaves, apply_op):
        def builder(rng, shapes):
            leaves = make_leaves(rng, shapes)
            probe = apply_op(*[np.asarray(v) for v in leaves])
            head = _scalarizer(np.asarray(probe).shape, np.asarray(probe).dtype, np.random.default_rng(999))

            def fn(*vs):
                return head(apply_op(*vs))

            return fn, leaves

        _register(name, builder)

    sh2 = lambda shapes, default: tuple(shapes) if shapes else default

    simple("add", lambda r, s: [_cplx(r, sh2(s, (4, 5))), _cplx(r, (sh2(s, (4, 5))[-1],))], add)
    simple("sub", lambda r, s: [_cplx(r, sh2(s, (4, 5))), _cplx(r, sh2(s, (4, 5)))], sub)
    simple("neg", lambda r, s: [_cplx(r, sh2(s, (4, 5)))], neg)
    simple("mul", lambda r, s: [_cplx(r, sh2(s, (4, 5))), _cplx(r, (sh2(s, (4, 5))[-1],))], mul)
    simple(
        "matmul",
        lambda r, s: [_cplx(r, (4, 3)), _cplx(r, (3, 5))],
        matmul,
    )
    simple("conj", lambda r, s: [_cplx(r, sh2(s, (4, 5)))], conj)
    simple("real_part", lambda r, s: [_cplx(r, sh2(s, (4, 5)))], real_part)
    simple("imag_part", lambda r, s: [_cplx(r, sh2(s, (4, 5)))], imag_part)
    simple(
        "make_complex",
        lambda r, s: [r.standard_normal(sh2(s, (4, 5))), r.standard_normal(sh2(s, (4, 5)))],
        make_complex,
    )
    simple("absval", lambda r, s: [_cplx(r, sh2(s, (4, 5)), min_mag=0.3)], absval)
    simple("unit_phase", lambda r, s: [_cplx(r, sh2(s, (4, 5)), min_mag=0.3)], unit_phase)
    simple("sum", lambda r, s: [_cplx(r, sh2(s, (4, 5)))], lambda a: sum_(a, axis=1))
    simple("mean", lambda r, s: [_cplx(r, sh2(s, (4, 5)))], lambda a: mean_(a, axis=0, keepdims=True))
    simple("reshape", lambda r, s: [_cplx(r, (4, 6))], lambda a: reshape(a, (8, 3)))
    simple("transpose2", lambda r, s: [_cplx(r, (3, 5))], transpose2)
    simple(
        "concat",
        lambda r, s: [_cplx(r, (3, 4, 2)), _cplx(r, (3, 4, 3))],
        lambda a, b: concat(a, b, axis=2),
    )
    simple("relu", lambda r, s: [_away_from_zero(r, sh2(s, (4, 5)))], relu)
    simple(
        "crelu",
        lambda r, s: [_away_from_zero(r, sh2(s, (4, 5))) + 1j * _away_from_zero(r, sh2(s, (4, 5)))],
        crelu,
    )
    simple("gelu", lambda r, s: [r.standard_normal(sh2(s, (4, 5)))], gelu)
    simple("softmax", lambda r, s: [r.standard_normal(sh2(s, (4, 6)))], lambda a: softmax(a, axis=-1))
    simple("rsqrt", lambda r, s: [r.uniform(0.5, 2.0, sh2(s, (4, 5)))], rsqrt)
    simple("fft2c", lambda r, s: [_cplx(r, sh2(s, (8, 8)))], fft2c)
    simple("ifft2c", lambda r, s: [_cplx(r, sh2(s, (8, 8)))], ifft2c)
    simple(
        "conv2d",
        lambda r, s: [_cplx(r, (6, 6, 2)), _cplx(r, (3, 3, 2, 3))],
        lambda x, w: conv2d(x, w, stride=2, padding=1),
    )
    simple(
        "depthwise_conv2d",
        lambda r, s: [r.standard_normal((9, 9, 4)), r.standard_normal((3, 3, 4))],
        lambda x, w: depthwise_conv2d(x, w, stride=2, padding=1),
    )
    simple("upsample2x", lambda r, s: [_cplx(r, (3, 4, 2))], upsample2x)

    def bilinear_builder(rng, shapes):
        f = _cplx(rng, (6, 7, 3))
        # fractional parts bounded away from the integer lattice and the
        # borders, where the interpolant is non-smooth
        base_r = rng.integers(1, 4, size=10)
        base_c = rng.integers(1, 5, size=10)
        coords = np.stack(
            [base_r + rng.uniform(0.2, 0.8, 10), base_c + rng.uniform(0.2, 0.8, 10)], axis=1
        )
        probe = bilinear_gather(f, coords)
        head = _scalarizer(probe.shape, probe.dtype, np.random.default_rng(999))

        def fn(fv, cv):
            return head(bilinear_gather(fv, cv))

        return fn, [f, coords]

    _register("bilinear_gather", bilinear_builder)


_register_builders()
