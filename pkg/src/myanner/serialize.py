"""Single-file model format.

Layout (all integers little-endian)::

    b"MYNER" | u16 version | u32 n | header JSON (n bytes)
    | u32 m | index JSON (m bytes) | parameter blobs | u32 CRC-32 of all prior bytes

The header holds the model kind, its configuration and vocabularies.  The
index lists ``[name, shape, dtype, offset]`` with offsets relative to the
start of the blob section.
"""

from __future__ import annotations

import io
import json
import os
import struct
import zlib
from typing import IO

import numpy as np

MAGIC = b"MYNER"
VERSION = 1
DTYPES = {"f8": "<f8", "f4": "<f4"}


class ModelFormatError(ValueError):
    pass


def _json(obj) -> bytes:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")


def dumps(model, dtype: str = "f8") -> bytes:
    if dtype not in DTYPES:
        raise ValueError(f"dtype must be one of {sorted(DTYPES)}")
    index, blobs, offset = [], [], 0
    for name, p in model.parameters().items():
        blob = np.ascontiguousarray(p.data, dtype=DTYPES[dtype]).tobytes()
        index.append([name, list(p.shape), dtype, offset])
        blobs.append(blob)
        offset += len(blob)
    header, idx = _json(model.header()), _json(index)
    body = b"".join([MAGIC, struct.pack("<H", VERSION), struct.pack("<I", len(header)), header,
                     struct.pack("<I", len(idx)), idx, *blobs])
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model, sink: IO[bytes] | str | os.PathLike, dtype: str = "f8") -> None:
    data = dumps(model, dtype)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"truncated model file while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def loads(data: bytes):
    if len(data) < len(MAGIC) + 2 or not data.startswith(MAGIC):
        raise ModelFormatError("not a model file (bad magic)")
    (version,) = struct.unpack("<H", data[len(MAGIC):len(MAGIC) + 2])
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if len(data) < len(MAGIC) + 2 + 4:
        raise ModelFormatError("truncated model file")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError("checksum mismatch: model file is corrupt or truncated")
    r = _Reader(body)
    r.take(len(MAGIC) + 2, "preamble")
    try:
        header = json.loads(r.take(r.u32("header length"), "header").decode("utf-8"))
        index = json.loads(r.take(r.u32("index length"), "index").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model header: {exc}") from None
    base = r.pos
    arrays = {}
    for name, shape, dtype, offset in index:
        if dtype not in DTYPES:
            raise ModelFormatError(f"unknown dtype {dtype!r} for {name}")
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * np.dtype(DTYPES[dtype]).itemsize
        start = base + offset
        if start + nbytes > len(body):
            raise ModelFormatError(f"truncated model file in parameter {name}")
        arrays[name] = np.frombuffer(body, dtype=DTYPES[dtype], count=count, offset=start).reshape(shape).astype(np.float64)
    return _build(header, arrays)


def _build(header: dict, arrays: dict[str, np.ndarray]):
    from .corpus import Alphabets, Vocab

    kind = header.get("kind")
    if kind == "neural":
        from .model import NeuralTagger, TaggerConfig

        alphabets = Alphabets(Vocab(header["syllables"]), Vocab(header["chars"]), header["labels"])
        return NeuralTagger(TaggerConfig.from_dict(header["config"]), alphabets, params=arrays)
    if kind == "sparse_crf":
        from .baseline import FeatureTemplate, SparseCrfModel

        return SparseCrfModel(FeatureTemplate(**header["template"]), header["features"], header["labels"],
                              header["l2_strength"], header["decode_mask"], params=arrays)
    raise ModelFormatError(f"unknown model kind {kind!r}")


def load_model(source: IO[bytes] | str | os.PathLike | bytes):
    if isinstance(source, bytes):
        return loads(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return loads(fh.read())
    return loads(source.read())


def roundtrip(model, dtype: str = "f8"):
    buf = io.BytesIO()
    save_model(model, buf, dtype)
    return load_model(buf.getvalue())
