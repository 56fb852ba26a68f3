"""
LCFRS2-EXP container for explicit grammars.

Layout (little-endian):
    magic   b"LCFRS2-EXP\\0"            11 bytes
    version u32                          currently 1
    dims    5 x u64                      m1, m2, p, v, m
    arrays  f64, row-major, in order     s, C1, D1, C2, D2, Q
"""

import struct
from pathlib import Path

import numpy as np

from src.atomic import atomic_write_bytes
from src.errors import FormatError
from src.grammar.core import ExplicitGrammar, GrammarDims

MAGIC = b"LCFRS2-EXP\0"
VERSION = 1
_HEADER = struct.Struct("<I5Q")
ARRAY_ORDER = ("s", "C1", "D1", "C2", "D2", "Q")


def encode_grammar(grammar: ExplicitGrammar) -> bytes:
    d = grammar.dims
    parts = [MAGIC, _HEADER.pack(VERSION, d.m1, d.m2, d.p, d.v, d.m)]
    for name in ARRAY_ORDER:
        parts.append(np.ascontiguousarray(getattr(grammar, name), dtype="<f8").tobytes())
    return b"".join(parts)


def decode_grammar(data: bytes) -> ExplicitGrammar:
    if not data.startswith(MAGIC):
        raise FormatError("not an LCFRS2-EXP container (bad magic)")
    offset = len(MAGIC)
    if len(data) < offset + _HEADER.size:
        raise FormatError("truncated LCFRS2-EXP header")
    version, m1, m2, p, v, m = _HEADER.unpack_from(data, offset)
    if version != VERSION:
        raise FormatError(f"unsupported LCFRS2-EXP version {version}")
    dims = GrammarDims(m1, m2, p, v)
    if dims.m != m:
        raise FormatError(f"header m={m} disagrees with m1+p={dims.m}")
    offset += _HEADER.size

    arrays = {}
    for name, shape in ((n, dims.shapes()[n]) for n in ARRAY_ORDER):
        size = int(np.prod(shape)) * 8
        if offset + size > len(data):
            raise FormatError(f"truncated array {name}")
        if size == 0:
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = np.frombuffer(data, dtype="<f8", count=size // 8, offset=offset).reshape(shape)
        offset += size
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after Q")
    return ExplicitGrammar(dims, **arrays)


def save_grammar(path: str | Path, grammar: ExplicitGrammar) -> None:
    atomic_write_bytes(path, encode_grammar(grammar))


def load_grammar(path: str | Path) -> ExplicitGrammar:
    return decode_grammar(Path(path).read_bytes())
