"""Named parameter collections, a decoupled-weight-decay Adam step, and checkpoint I/O.

Checkpoints are a single binary file: an 8-byte magic, a 4-byte
little-endian JSON header length, the JSON header (parameter names,
shapes, step count, extra metadata), then the raw float64 buffers in
header order.  Writing the same store twice produces byte-identical
files, which the test suite relies on for reproducibility checks.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .errors import ContractError, ParseError

MAGIC = b"PCKPT\x00\x01\n"

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ParamStore:
    """Ordered mapping of names to trainable tensors plus optimizer state."""

    params: dict[str, Tensor] = field(default_factory=dict)
    step_count: int = 0
    _m: dict[str, np.ndarray] = field(default_factory=dict)
    _v: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ContractError(f"parameter {name!r} already registered")
        t = Tensor(value, requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def replace(self, name: str, value: np.ndarray) -> Tensor:
        """Swap in a new tensor for an existing parameter, keeping optimizer state."""
        if name not in self.params:
            raise KeyError(name)
        old = self.params[name]
        if old.data.shape != np.asarray(value).shape:
            raise ContractError(
                f"replacement for {name!r} has shape {np.asarray(value).shape}, "
                f"expected {old.data.shape}"
            )
        t = Tensor(value, requires_grad=True)
        self.params[name] = t
        return t

    def clone_data(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}


def optimizer_step(store: ParamStore, lr: float, weight_decay: float) -> None:
    """One Adam update with decoupled weight decay over every parameter.

    Every parameter must carry an accumulated gradient (a zero array
    counts; None does not), so a skipped backward pass fails loudly.
    Gradients are cleared and the step counter advances by one.
    """
    missing = [name for name, p in store.params.items() if p.grad is None]
    if missing:
        raise ContractError(f"optimizer_step before backward: no gradient for {missing}")
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - BETA1**t
    bc2 = 1.0 - BETA2**t
    for name, p in store.params.items():
        g = p.grad
        m = store._m[name]
        v = store._v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_data = p.data - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS) - lr * weight_decay * p.data
        store.params[name] = Tensor(new_data, requires_grad=True)
    store.zero_grad()


def save_checkpoint(store: ParamStore, path: str | Path, metadata: dict | None = None) -> None:
    """Write parameters, optimizer moments, and metadata to a single binary file."""
    path = Path(path)
    entries = []
    buffers = []
    for name in store.names():
        for prefix, arr in (
            ("p", store.params[name].data),
            ("m", store._m[name]),
            ("v", store._v[name]),
        ):
            entries.append({"key": f"{prefix}:{name}", "shape": list(arr.shape)})
            buffers.append(np.ascontiguousarray(arr, dtype=np.float64))
    header = {
        "entries": entries,
        "step_count": store.step_count,
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for buf in buffers:
            fh.write(buf.tobytes(order="C"))


def load_checkpoint(path: str | Path) -> tuple[ParamStore, dict]:
    """Read a checkpoint back into a fresh ParamStore; returns (store, metadata)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise ParseError(f"{path} is not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack_from("<I", raw, len(MAGIC))
    start = len(MAGIC) + 4
    try:
        header = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt checkpoint header: {exc}") from exc
    store = ParamStore()
    store.step_count = int(header["step_count"])
    offset = start + header_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["entries"]:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise ParseError(f"{path}: checkpoint truncated at {entry['key']!r}")
        arr = np.frombuffer(raw, dtype=np.float64, count=count, offset=offset).reshape(shape)
        arrays[entry["key"]] = arr.copy()
        offset += nbytes
    for key, arr in arrays.items():
        kind, _, name = key.partition(":")
        if kind == "p":
            store.params[name] = Tensor(arr, requires_grad=True)
        elif kind == "m":
            store._m[name] = arr
        elif kind == "v":
            store._v[name] = arr
        else:
            raise ParseError(f"{path}: unknown checkpoint entry kind {kind!r}")
    for name in store.params:
        if name not in store._m or name not in store._v:
            raise ParseError(f"{path}: incomplete optimizer state for {name!r}")
    return store, header.get("metadata", {})
