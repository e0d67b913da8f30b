"""Binary checkpoints for adapters and their optimizer state.

Layout (all integers unsigned 32-bit little-endian)::

    b"DLRA"
    version                      (currently 1)
    kind length, kind            ("lora" or "dual", UTF-8)
    header length, header        (UTF-8 JSON, sorted keys: scalars and enums)
    matrix count
    per matrix:
        name length, name        (UTF-8)
        rows, cols
        rows * cols float64 LE   (row-major)

Frozen matrices (W0, and W_b for the fixed-binary variant) are stored so a
checkpoint is self-contained. Adam moments are stored as ``opt.m.<name>``
and ``opt.v.<name>``.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from dualora.adapters import Adapter, DualAdapter, LoraAdapter
from dualora.optim import Optimizer, OptimizerState

MAGIC = b"DLRA"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


def _write_u32(buf: io.BytesIO, value: int) -> None:
    buf.write(_U32.pack(value))


def _write_str(buf: io.BytesIO, text: str) -> None:
    raw = text.encode("utf-8")
    _write_u32(buf, len(raw))
    buf.write(raw)


def _adapter_header(adapter: Adapter) -> dict:
    if isinstance(adapter, LoraAdapter):
        return {"alpha": adapter.alpha, "r": adapter.r}
    return {
        "alpha": adapter.alpha,
        "r1": adapter.r1,
        "r2": adapter.r2,
        "sign_scheme": adapter.sign_scheme.value,
        "magnitude_activation": adapter.magnitude_activation.value,
        "variant": adapter.variant.value,
        "warmup_steps": adapter.warmup_steps,
        "step_counter": adapter.step_counter,
        "ste_gate_on_input": adapter.ste_gate_on_input,
    }


def dumps(adapter: Adapter, optimizer: Optimizer | None = None) -> bytes:
    header = {"adapter": _adapter_header(adapter)}
    matrices: list[tuple[str, np.ndarray]] = [("W0", adapter.W0)]
    matrices += [(name, getattr(adapter, name)) for name in adapter.trainable]
    if isinstance(adapter, DualAdapter) and adapter.W_b is not None:
        matrices.append(("W_b", adapter.W_b))
    if optimizer is not None:
        st = optimizer.state
        header["optimizer"] = {"kind": st.kind.value, "lr": st.lr, "beta1": st.beta1,
                               "beta2": st.beta2, "eps": st.eps, "t": st.t}
        for name in sorted(st.m):
            matrices.append((f"opt.m.{name}", st.m[name]))
            matrices.append((f"opt.v.{name}", st.v[name]))

    buf = io.BytesIO()
    buf.write(MAGIC)
    _write_u32(buf, VERSION)
    _write_str(buf, adapter.kind)
    _write_str(buf, json.dumps(header, sort_keys=True, separators=(",", ":")))
    _write_u32(buf, len(matrices))
    for name, m in matrices:
        _write_str(buf, name)
        rows, cols = m.shape
        _write_u32(buf, rows)
        _write_u32(buf, cols)
        buf.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {field}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, field: str) -> int:
        return _U32.unpack(self.take(4, field))[0]

    def text(self, field: str) -> str:
        n = self.u32(f"{field} length")
        try:
            return self.take(n, field).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"{field} is not valid UTF-8") from None


def loads(data: bytes, expect_shape: tuple[int, int] | None = None
          ) -> tuple[Adapter, Optimizer | None]:
    """Parse checkpoint bytes; ``expect_shape`` rejects a mismatched ``W0`` up front."""
    rd = _Reader(data)
    if rd.take(4, "magic") != MAGIC:
        raise CheckpointError("magic: not a DLRA checkpoint")
    version = rd.u32("version")
    if version != VERSION:
        raise CheckpointError(f"version: unsupported checkpoint version {version}")
    kind = rd.text("kind")
    if kind not in ("lora", "dual"):
        raise CheckpointError(f"kind: unknown adapter kind {kind!r}")
    try:
        header = json.loads(rd.text("header"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"header: malformed JSON ({exc})") from None
    count = rd.u32("matrix count")
    mats: dict[str, np.ndarray] = {}
    for i in range(count):
        name = rd.text(f"matrix[{i}] name")
        rows = rd.u32(f"{name}.rows")
        cols = rd.u32(f"{name}.cols")
        if rows == 0 or cols == 0:
            raise CheckpointError(f"{name}: zero dimension ({rows}x{cols})")
        raw = rd.take(8 * rows * cols, f"{name}.data")
        mats[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rows, cols)
        if expect_shape is not None and name == "W0" and mats[name].shape != tuple(expect_shape):
            raise CheckpointError(
                f"W0: checkpoint shape {mats[name].shape} contradicts configured "
                f"(d, k) = {tuple(expect_shape)}"
            )
    if rd.pos != len(data):
        raise CheckpointError(f"trailing bytes: {len(data) - rd.pos} unread bytes after last matrix")

    meta = header.get("adapter")
    if not isinstance(meta, dict):
        raise CheckpointError("header: missing 'adapter' section")
    try:
        if kind == "lora":
            adapter: Adapter = LoraAdapter(W0=mats["W0"], A=mats["A"], B=mats["B"],
                                           alpha=float(meta["alpha"]), r=int(meta["r"]))
        else:
            adapter = DualAdapter(
                W0=mats["W0"], A=mats["A"], B=mats["B"], C=mats.get("C"), D=mats.get("D"),
                alpha=float(meta["alpha"]), r1=int(meta["r1"]), r2=int(meta["r2"]),
                sign_scheme=meta["sign_scheme"], magnitude_activation=meta["magnitude_activation"],
                variant=meta["variant"], W_b=mats.get("W_b"),
                warmup_steps=int(meta["warmup_steps"]), step_counter=int(meta["step_counter"]),
                ste_gate_on_input=bool(meta["ste_gate_on_input"]),
            )
    except KeyError as exc:
        raise CheckpointError(f"{exc.args[0]}: missing from checkpoint") from None
    except ValueError as exc:
        raise CheckpointError(f"adapter: {exc}") from None

    optimizer = None
    if "optimizer" in header:
        o = header["optimizer"]
        try:
            st = OptimizerState(kind=o["kind"], lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"],
                                eps=o["eps"], t=int(o["t"]))
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"optimizer: {exc}") from None
        for name, m in mats.items():
            if name.startswith("opt.m."):
                st.m[name[6:]] = m
            elif name.startswith("opt.v."):
                st.v[name[6:]] = m
        if set(st.m) != set(st.v):
            raise CheckpointError("optimizer: first and second moment buffers do not pair up")
        optimizer = Optimizer(st)
    return adapter, optimizer


def save(path: str | Path, adapter: Adapter, optimizer: Optimizer | None = None) -> None:
    Path(path).write_bytes(dumps(adapter, optimizer))


def load(path: str | Path, expect_shape: tuple[int, int] | None = None
         ) -> tuple[Adapter, Optimizer | None]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return loads(data, expect_shape)
