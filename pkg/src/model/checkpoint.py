"""
Checkpoint container for neural parameters and factored grammars.

Layout (little-endian):
    magic  b"LCFRS2-NPM\\0"
    u32    version
    u64    manifest length in bytes
    manifest (UTF-8 JSON)
    data blocks, row-major, at the offsets listed in the manifest

The manifest carries dims, ranks, d, one entry per named block (shape,
offset, dtype), the vocabulary in id order and free-form metadata.
Adam moments are stored as extra blocks named "adam.m.<param>" and
"adam.v.<param>".
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ValidationError

from src.atomic import atomic_write_bytes
from src.errors import FormatError
from src.grammar.core import GrammarDims
from src.model.factored import FactoredGrammar
from src.model.neural import NeuralParams
from src.training.optim import AdamState

MAGIC = b"LCFRS2-NPM\0"
VERSION = 1
_HEAD = struct.Struct("<IQ")
_DTYPES = {"f4": "<f4", "f8": "<f8"}


class BlockEntry(BaseModel):
    name: str
    shape: list[int]
    offset: int
    dtype: Literal["f4", "f8"]


class Manifest(BaseModel):
    kind: Literal["neural", "factored"]
    dims: list[int]
    ranks: list[int]
    d: int | None = None
    blocks: list[BlockEntry]
    vocab: list[str] | None = None
    meta: dict[str, Any] = {}


@dataclass
class Checkpoint:
    kind: str
    params: NeuralParams | None = None
    factored: FactoredGrammar | None = None
    vocab: list[str] | None = None
    adam: AdamState | None = None
    meta: dict[str, Any] = field(default_factory=dict)


def _code(array: np.ndarray) -> str:
    return "f8" if array.dtype == np.float64 else "f4"


def _encode(kind: str, dims: GrammarDims, ranks, d, blocks: dict[str, np.ndarray], vocab, meta) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, array in blocks.items():
        code = _code(array)
        raw = np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes()
        entries.append(BlockEntry(name=name, shape=list(array.shape), offset=offset, dtype=code))
        chunks.append(raw)
        offset += len(raw)
    manifest = Manifest(
        kind=kind, dims=list(dims.as_tuple()), ranks=[int(r) for r in ranks], d=d,
        blocks=entries, vocab=None if vocab is None else list(vocab), meta=dict(meta or {}),
    )
    text = manifest.model_dump_json().encode("utf-8")
    return MAGIC + _HEAD.pack(VERSION, len(text)) + text + b"".join(chunks)


def _decode(data: bytes) -> tuple[Manifest, dict[str, np.ndarray]]:
    if not data.startswith(MAGIC):
        raise FormatError("not a checkpoint: bad magic")
    pos = len(MAGIC)
    if len(data) < pos + _HEAD.size:
        raise FormatError("truncated checkpoint header")
    version, length = _HEAD.unpack_from(data, pos)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    pos += _HEAD.size
    try:
        manifest = Manifest.model_validate_json(data[pos:pos + length])
    except ValidationError as e:
        raise FormatError(f"bad checkpoint manifest: {e}") from e
    base = pos + length
    blocks = {}
    for entry in manifest.blocks:
        dtype = np.dtype(_DTYPES[entry.dtype])
        count = int(np.prod(entry.shape, dtype=np.int64))
        start = base + entry.offset
        end = start + count * dtype.itemsize
        if end > len(data):
            raise FormatError(f"block {entry.name} runs past the end of the file")
        array = np.frombuffer(data, dtype=dtype, count=count, offset=start) if count else np.zeros(0, dtype=dtype)
        blocks[entry.name] = array.reshape(entry.shape).astype(dtype.newbyteorder("="))
    return manifest, blocks


def save_checkpoint(path: str | Path, params: NeuralParams, vocab=None, adam: AdamState | None = None,
                    meta: dict[str, Any] | None = None) -> None:
    """Write neural parameters (and optionally optimizer state) atomically."""
    blocks = dict(params.arrays)
    meta = dict(meta or {})
    if adam is not None:
        blocks.update({f"adam.m.{n}": a for n, a in adam.m.items()})
        blocks.update({f"adam.v.{n}": a for n, a in adam.v.items()})
        meta["adam_step"] = adam.step
    atomic_write_bytes(path, _encode("neural", params.dims, params.ranks, params.d, blocks, vocab, meta))


def save_factored(path: str | Path, fg: FactoredGrammar, vocab=None, meta: dict[str, Any] | None = None) -> None:
    atomic_write_bytes(path, _encode("factored", fg.dims, fg.ranks, None, fg.arrays(), vocab, meta))


def load_checkpoint(path: str | Path) -> Checkpoint:
    manifest, blocks = _decode(Path(path).read_bytes())
    dims = GrammarDims(*manifest.dims)
    meta = dict(manifest.meta)
    if manifest.kind == "factored":
        return Checkpoint("factored", factored=FactoredGrammar.from_arrays(dims, tuple(manifest.ranks), blocks),
                          vocab=manifest.vocab, meta=meta)

    arrays = {n: a for n, a in blocks.items() if not n.startswith("adam.")}
    params = NeuralParams(dims, tuple(manifest.ranks), manifest.d, arrays)
    adam = None
    if "adam_step" in meta:
        adam = AdamState(
            int(meta.pop("adam_step")),
            {n: blocks[f"adam.m.{n}"] for n in arrays},
            {n: blocks[f"adam.v.{n}"] for n in arrays},
        )
    return Checkpoint("neural", params=params, vocab=manifest.vocab, adam=adam, meta=meta)
