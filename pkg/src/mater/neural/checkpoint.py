"""Binary checkpoint: magic ``MTRP``, u32 version, u32 tensor count, then per
tensor ``u32 name_len, name (utf-8), u32 rank, u32 dims[rank], float64 data``.
Everything little-endian; tensors are written in sorted-name order so equal
models give equal bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import TASKS, Model, ModelConfig

MAGIC = b"MTRP"
VERSION = 1

_CONFIG_INTS = (
    "hidden_word",
    "hidden_utt",
    "ple_bins",
    "latent_len",
    "latent_dim",
    "passes",
    "ff_mult",
    "pool_dim",
    "lstm_layers",
    "use_word",
    "use_utterance",
)


class CheckpointError(ValueError):
    pass


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f8", order="C")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated (need {pos + n} bytes, have {len(data)})")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    out = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", take(4))
        name = take(n).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return out


def save_model(path, model: Model) -> None:
    c = model.config
    t = {f"param.{k}": v for k, v in model.params.items()}
    t.update({f"buf.{k}": v for k, v in model.buffers.items()})
    t["meta.task"] = np.array([TASKS.index(c.task)], dtype=np.float64)
    t["meta.config"] = np.array([float(getattr(c, k)) for k in _CONFIG_INTS])
    t["meta.dims"] = np.array([model.word_dim, model.utt_dim, float(model.pooled)])
    for name, dim in model.sources.items():
        t[f"meta.source.{name}"] = np.array([dim], dtype=np.float64)
    write_tensors(path, t)


def load_model(path) -> Model:
    t = read_tensors(path)
    try:
        task = TASKS[int(t["meta.task"][0])]
        vals = t["meta.config"]
        kw = {k: (bool(v) if k.startswith("use_") else int(v)) for k, v in zip(_CONFIG_INTS, vals)}
        word_dim, utt_dim, pooled = t["meta.dims"]
    except (KeyError, IndexError, ValueError) as exc:
        raise CheckpointError(f"{path}: missing or malformed metadata ({exc})") from None
    sources = {k[len("meta.source.") :]: int(v[0]) for k, v in sorted(t.items()) if k.startswith("meta.source.")}
    config = ModelConfig(task=task, embeddings=tuple(sources) if sources else None, **kw)
    params = {k[6:]: v for k, v in t.items() if k.startswith("param.")}
    buffers = {k[4:]: v for k, v in t.items() if k.startswith("buf.")}
    return Model(config, params, buffers, int(word_dim), int(utt_dim), sources, bool(pooled))
