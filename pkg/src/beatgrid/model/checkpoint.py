"""Self-describing binary checkpoint container.

Layout::

    b"BGCK" | u16 version | u32 header length | JSON header | tensor blob | u32 CRC32

All integers are little-endian. The header carries the model and training
configs, the step, optional extra metadata, and a table of named tensors
(``shape``, byte ``offset`` into the blob). Tensors are stored as
little-endian float32. Optimizer state tensors are named ``opt/<index>/<key>``.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
import torch

from beatgrid.errors import CorruptChecksum, VersionMismatch
from beatgrid.model.transformer import ModelConfig

MAGIC = b"BGCK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: dict
    step: int
    params: dict[str, torch.Tensor]
    opt_state: dict | None = None
    extra: dict = field(default_factory=dict)


def _to_le32(t: torch.Tensor) -> bytes:
    return t.detach().cpu().to(torch.float32).numpy().astype("<f4", copy=False).tobytes()


def _split_opt_state(opt_state: dict | None) -> tuple[dict | None, dict[str, torch.Tensor]]:
    if opt_state is None:
        return None, {}
    tensors: dict[str, torch.Tensor] = {}
    scalars: dict[str, dict] = {}
    for idx, st in opt_state["state"].items():
        scalars[str(idx)] = {}
        for key, value in st.items():
            if isinstance(value, torch.Tensor):
                tensors[f"opt/{idx}/{key}"] = value
            else:
                scalars[str(idx)][key] = value
    meta = {"param_groups": opt_state["param_groups"], "scalars": scalars}
    return meta, tensors


def save_checkpoint(
    model_config: ModelConfig,
    params: dict[str, torch.Tensor],
    *,
    opt_state: dict | None = None,
    train_config: dict | None = None,
    step: int = 0,
    extra: dict | None = None,
) -> bytes:
    opt_meta, opt_tensors = _split_opt_state(opt_state)
    named = list(params.items()) + list(opt_tensors.items())
    table = []
    blob = bytearray()
    for name, tensor in named:
        raw = _to_le32(tensor)
        table.append({"name": name, "shape": list(tensor.shape), "offset": len(blob)})
        blob += raw
    header = {
        "model": model_config.to_dict(),
        "train": train_config or {},
        "step": step,
        "extra": extra or {},
        "optimizer": opt_meta,
        "tensors": table,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)) + head + bytes(blob)
    return body + struct.pack("<I", zlib.crc32(body))


def load_checkpoint(data: bytes, expected: ModelConfig | None = None) -> Checkpoint:
    if len(data) < _PREFIX.size + 4:
        raise CorruptChecksum("checkpoint truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptChecksum("checksum mismatch")
    magic, version, head_len = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise CorruptChecksum("not a beatgrid checkpoint")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
    start = _PREFIX.size
    header = json.loads(body[start : start + head_len])
    blob = body[start + head_len :]
    model_config = ModelConfig(**header["model"])
    if expected is not None and expected != model_config:
        raise VersionMismatch(f"checkpoint config {model_config} does not match {expected}")

    tensors: dict[str, torch.Tensor] = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"])
        tensors[entry["name"]] = torch.from_numpy(arr.astype(np.float32)).reshape(entry["shape"])

    opt_state = None
    if header["optimizer"] is not None:
        meta = header["optimizer"]
        # JSON sorts keys as strings; restore numeric parameter order
        state: dict[int, dict] = {}
        for name, t in tensors.items():
            if name.startswith("opt/"):
                _, idx, key = name.split("/", 2)
                state.setdefault(int(idx), {})[key] = t
        for i, scalars in meta["scalars"].items():
            state.setdefault(int(i), {}).update(scalars)
        state = dict(sorted(state.items()))
        opt_state = {"state": state, "param_groups": meta["param_groups"]}
    params = {k: v for k, v in tensors.items() if not k.startswith("opt/")}
    return Checkpoint(model_config, header["train"], header["step"], params, opt_state, header["extra"])
