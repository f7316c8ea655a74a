"""Binary container for denoiser weights.

Layout, all integers little-endian:

* magic ``CGHW`` (4 bytes)
* format version, unsigned 32-bit (currently 1)
* payload: tensor count (unsigned 32-bit), then per tensor:
  name length (u32) + UTF-8 name, rank (u32), dims (u32 each),
  flag byte (0 real, 1 complex), raw 32-bit floats (complex values
  interleaved re, im)
* CRC-32 of the payload bytes, unsigned 32-bit

Tensor names are ``stage{i}.{group}.{param}``; the loader rebuilds the
per-stage weight structures and validates shape consistency, so a file
whose channel counts disagree fails with the offending tensor named.
In-memory weights live on the float32 grid (see ``snap_to_float32``),
which makes a save/load round trip bit-exact.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import WeightFormatError
from .network import CdatWeights, PcdWeights

__all__ = ["save_weights", "load_weights", "MAGIC", "VERSION"]

MAGIC = b"CGHW"
VERSION = 1

_BLOCK_FIELDS = [name for name, _ in CdatWeights.__dataclass_fields__.items()]


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    nb = name.encode("utf-8")
    parts = [struct.pack("<I", len(nb)), nb, struct.pack("<I", arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    if np.iscomplexobj(arr):
        parts.append(b"\x01")
        flat = np.ascontiguousarray(arr, dtype="<c8").view("<f4")
    else:
        parts.append(b"\x00")
        flat = np.ascontiguousarray(arr, dtype="<f4")
    parts.append(flat.tobytes())
    return b"".join(parts)


def save_weights(weights, path) -> None:
    """Write one stage or a list of stages to a container file."""
    stages = weights if isinstance(weights, (list, tuple)) else [weights]
    payload = [struct.pack("<I", sum(1 for w in stages for _ in w.named_tensors()))]
    for i, w in enumerate(stages):
        for name, arr in w.named_tensors():
            payload.append(_pack_tensor(f"stage{i}.{name}", np.asarray(arr)))
    body = b"".join(payload)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise WeightFormatError(
                f"truncated weight file: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _read_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise WeightFormatError(f"bad magic in {path}: not a CGHW weight file")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != VERSION:
        raise WeightFormatError(f"unsupported weight format version {version} (expected {VERSION})")
    if len(raw) < 12:
        raise WeightFormatError("truncated weight file: missing payload and checksum")
    body, (crc_stored,) = raw[8:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise WeightFormatError("checksum mismatch: weight file payload is corrupted")
    rd = _Reader(body)
    count = rd.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = rd.take(rd.u32()).decode("utf-8")
        rank = rd.u32()
        dims = struct.unpack(f"<{rank}I", rd.take(4 * rank)) if rank else ()
        flag = rd.take(1)[0]
        n = int(np.prod(dims)) if dims else 1
        if flag == 1:
            data = np.frombuffer(rd.take(8 * n), dtype="<c8").astype(np.complex128)
        elif flag == 0:
            data = np.frombuffer(rd.take(4 * n), dtype="<f4").astype(np.float64)
        else:
            raise WeightFormatError(f"tensor {name!r}: unknown dtype flag {flag}")
        tensors[name] = data.reshape(dims)
    if rd.pos != len(body):
        raise WeightFormatError(f"{len(body) - rd.pos} trailing bytes after last tensor")
    return tensors


def _expected_shapes(c: int, table: int) -> dict[str, tuple]:
    return {
        "ln1_gamma": (c,),
        "ln1_beta": (c,),
        "wq": (c, c),
        "wk": (c, c),
        "wv": (c, c),
        "off_dw": (9, 9, 2 * c),
        "off_dw_bias": (2 * c,),
        "off_ln_gamma": (2 * c,),
        "off_ln_beta": (2 * c,),
        "off_proj": (2 * c, 2),
        "bias_table": (table, table),
        "ln2_gamma": (c,),
        "ln2_beta": (c,),
        "ffn_w1": (c, 4 * c),
        "ffn_b1": (4 * c,),
        "ffn_w2": (4 * c, c),
        "ffn_b2": (c,),
    }


def load_weights(path) -> list[PcdWeights]:
    """Read a container back into per-stage weight structures.

    Channel count and block count are inferred from the stored tensors;
    every shape is validated against them, and a mismatch names the tensor.
    """
    tensors = _read_tensors(path)
    by_stage: dict[int, dict[str, np.ndarray]] = {}
    for name, arr in tensors.items():
        head, _, rest = name.partition(".")
        if not head.startswith("stage") or not rest:
            raise WeightFormatError(f"unrecognized tensor name {name!r}")
        try:
            idx = int(head[5:])
        except ValueError:
            raise WeightFormatError(f"unrecognized tensor name {name!r}") from None
        by_stage.setdefault(idx, {})[rest] = arr
    if not by_stage or sorted(by_stage) != list(range(len(by_stage))):
        raise WeightFormatError(f"stage indices not contiguous: {sorted(by_stage)}")

    stages = []
    for idx in range(len(by_stage)):
        t = by_stage[idx]
        prefix = f"stage{idx}"

        def need(key: str, shape: tuple | None = None) -> np.ndarray:
            if key not in t:
                raise WeightFormatError(f"missing tensor {prefix}.{key!r}")
            arr = t.pop(key)
            if shape is not None and arr.shape != shape:
                raise WeightFormatError(
                    f"dimension mismatch for tensor {prefix}.{key!r}: "
                    f"stored {arr.shape}, expected {shape}"
                )
            return arr

        fem_w1 = need("fem.w1")
        if fem_w1.ndim != 4 or fem_w1.shape[:3] != (3, 3, 1):
            raise WeightFormatError(
                f"dimension mismatch for tensor {prefix}.'fem.w1': stored {fem_w1.shape}, "
                "expected (3, 3, 1, C)"
            )
        c = fem_w1.shape[3]
        n_blocks = len({k.split(".")[0] for k in t if k.startswith("cdat")})
        blocks = []
        for b in range(n_blocks):
            first = f"cdat{b}.bias_table"
            if first not in t:
                raise WeightFormatError(f"missing tensor {prefix}.{first!r}")
            table = t[first].shape[0]
            shapes = _expected_shapes(c, table)
            blocks.append(
                CdatWeights(**{f: need(f"cdat{b}.{f}", shapes[f]) for f in _BLOCK_FIELDS})
            )
        stage = PcdWeights(
            step=need("step", ()),
            fem_w1=fem_w1,
            fem_w2=need("fem.w2", (3, 3, c, c)),
            blocks=blocks,
            pirm_w1=need("pirm.w1", (3, 3, c, c)),
            pirm_b1=need("pirm.b1", (c,)),
            pirm_w2=need("pirm.w2", (3, 3, c, 1)),
            pirm_b2=need("pirm.b2", (1,)),
        )
        if t:
            raise WeightFormatError(f"unexpected tensors in {prefix}: {sorted(t)}")
        stages.append(stage)
    return stages
