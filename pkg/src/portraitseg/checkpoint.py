"""Self-describing binary model checkpoints.

Layout (all integers little-endian):

    magic   4 bytes  b"FCNC"
    version u32      currently 1
    layers  u32      count, then one record per layer:
                       kind u8 (0 conv, 1 relu, 2 maxpool, 3 deconv)
                       conv/deconv: kernel_h, kernel_w, in_channels,
                                    out_channels, stride, padding (6 x u32)
                       maxpool:     window, stride (2 x u32)
    steps   u64      optimizer steps taken
    moments u8       1 if Adam moment tensors follow the parameters
    tensors          float32 raw data: weights then bias per parametrized
                     layer in declaration order; if moments, then m and v
                     per parameter tensor in the same order.

Loading needs no external architecture description, and save -> load ->
save reproduces files byte for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .ioutil import atomic_write_bytes
from .model import FcnModel, LayerSpec
from .optim import AdamState

MAGIC = b"FCNC"
VERSION = 1

_KIND_CODES = {"conv": 0, "relu": 1, "maxpool": 2, "deconv": 3}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


class CheckpointError(ValueError):
    """Checkpoint bytes are malformed or do not match the declared layout."""


def _pack_spec(spec: LayerSpec) -> bytes:
    head = struct.pack("<B", _KIND_CODES[spec.kind])
    if spec.has_params:
        return head + struct.pack(
            "<6I", spec.kernel_h, spec.kernel_w, spec.in_channels,
            spec.out_channels, spec.stride, spec.padding,
        )
    if spec.kind == "maxpool":
        return head + struct.pack("<2I", spec.window, spec.stride)
    return head


def save_checkpoint(model: FcnModel, optimizer_state: AdamState | None, path) -> None:
    """Serialize model (and Adam moments, when given) atomically to path."""
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(model.specs))]
    parts.extend(_pack_spec(spec) for spec in model.specs)
    parts.append(struct.pack("<Q", model.step_count))
    parts.append(struct.pack("<B", 1 if optimizer_state is not None else 0))

    tensors = list(model.parameter_list())
    if optimizer_state is not None:
        for m, v in zip(optimizer_state.m, optimizer_state.v):
            tensors.extend((m, v))
    parts.extend(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors)
    atomic_write_bytes(path, b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt: str, what: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CheckpointError(f"truncated checkpoint: {what} missing at byte {self.pos}")
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values

    def tensor(self, shape: tuple[int, ...], index: int) -> np.ndarray:
        count = int(np.prod(shape))
        size = count * 4
        if self.pos + size > len(self.data):
            raise CheckpointError(f"truncated checkpoint: tensor {index} incomplete at byte {self.pos}")
        arr = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.pos)
        self.pos += size
        return arr.reshape(shape).copy()


def load_checkpoint(path) -> tuple[FcnModel, AdamState | None]:
    """Rebuild the model (and Adam moments, when present) from a checkpoint."""
    data = Path(path).read_bytes()
    reader = _Reader(data)

    (magic,) = reader.unpack("<4s", "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} (expected {MAGIC!r})")
    (version,) = reader.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")

    (n_layers,) = reader.unpack("<I", "layer count")
    specs = []
    for i in range(n_layers):
        (code,) = reader.unpack("<B", f"layer {i} kind")
        if code not in _CODE_KINDS:
            raise CheckpointError(f"unknown layer kind code {code} in layer {i}")
        kind = _CODE_KINDS[code]
        if kind in ("conv", "deconv"):
            kh, kw, in_c, out_c, stride, padding = reader.unpack("<6I", f"layer {i} fields")
            specs.append(LayerSpec(kind, kh, kw, in_c, out_c, stride, padding))
        elif kind == "maxpool":
            window, stride = reader.unpack("<2I", f"layer {i} fields")
            specs.append(LayerSpec.maxpool(window, stride))
        else:
            specs.append(LayerSpec.relu())

    (step_count,) = reader.unpack("<Q", "step counter")
    (has_moments,) = reader.unpack("<B", "moments flag")
    if has_moments not in (0, 1):
        raise CheckpointError(f"bad moments flag {has_moments}")

    shapes = [spec.param_shapes() for spec in specs if spec.has_params]
    flat_shapes = [s for pair in shapes for s in pair]

    index = 0
    flat_params = []
    for shape in flat_shapes:
        flat_params.append(reader.tensor(shape, index))
        index += 1

    state = None
    if has_moments:
        m_list, v_list = [], []
        for shape in flat_shapes:
            m_list.append(reader.tensor(shape, index))
            index += 1
            v_list.append(reader.tensor(shape, index))
            index += 1
        state = AdamState(m_list, v_list)

    if reader.pos != len(data):
        raise CheckpointError(f"trailing data after checkpoint at byte {reader.pos}")

    params = []
    it = iter(flat_params)
    for spec in specs:
        params.append((next(it), next(it)) if spec.has_params else None)
    try:
        model = FcnModel(specs, params=params)
    except ValueError as err:
        raise CheckpointError(f"inconsistent checkpoint architecture: {err}") from err
    model.step_count = step_count
    return model, state
