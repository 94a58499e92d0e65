"""Model checkpoints: a text header plus named raw float32 arrays.

Layout, in file order:

    sourcelm-checkpoint <version>\n
    config <key> <value>\n          one line per config entry, saved order
    vocab <digest>\n
    arrays <count>\n
    end\n
    <count> array records

Each array record is binary: uint32 name length, the UTF-8 name,
uint32 ndim, uint32 per dimension, then the row-major array data as
little-endian 32-bit floats. All integers little-endian. The header
stays greppable and the arrays load from any language with a struct
reader; nothing here needs Python to decode.

Saving what load() returned reproduces the input byte for byte, which
is what makes checkpoint files comparable across reruns.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
_MAGIC = "sourcelm-checkpoint"


class CorruptCheckpoint(ValueError):
    """File does not parse as a checkpoint."""


class VocabMismatch(ValueError):
    """Checkpoint was trained against a different vocabulary."""


@dataclass
class ModelCheckpoint:
    config: dict[str, str]
    vocab_digest: str
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def config_int(self, key: str) -> int:
        return int(self.config[key])

    def config_float(self, key: str) -> float:
        return float(self.config[key])


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    header = [f"{_MAGIC} {ckpt.version}"]
    for key, value in ckpt.config.items():
        if any(c.isspace() for c in key):
            raise ValueError(f"config key {key!r} contains whitespace")
        if "\n" in str(value):
            raise ValueError(f"config value for {key!r} contains a newline")
        header.append(f"config {key} {value}")
    header.append(f"vocab {ckpt.vocab_digest}")
    header.append(f"arrays {len(ckpt.arrays)}")
    header.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("utf-8"))
        for name, arr in ckpt.arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path, expect_digest: str | None = None) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        blob = fh.read()

    # header: text lines up to and including "end"
    config: dict[str, str] = {}
    digest = None
    n_arrays = None
    offset = 0
    first = True
    while True:
        newline = blob.find(b"\n", offset)
        if newline < 0:
            raise CorruptCheckpoint(f"{path}: unterminated header")
        line = blob[offset:newline].decode("utf-8", errors="replace")
        offset = newline + 1
        if first:
            parts = line.split()
            if len(parts) != 2 or parts[0] != _MAGIC:
                raise CorruptCheckpoint(f"{path}: not a checkpoint file")
            version = int(parts[1])
            if version > FORMAT_VERSION:
                raise CorruptCheckpoint(
                    f"{path}: format version {version} is newer than supported "
                    f"{FORMAT_VERSION}")
            first = False
            continue
        if line == "end":
            break
        kind, _, rest = line.partition(" ")
        if kind == "config":
            key, _, value = rest.partition(" ")
            config[key] = value
        elif kind == "vocab":
            digest = rest
        elif kind == "arrays":
            n_arrays = int(rest)
        else:
            raise CorruptCheckpoint(f"{path}: unknown header line {line!r}")
    if digest is None or n_arrays is None:
        raise CorruptCheckpoint(f"{path}: header missing vocab or arrays line")
    if expect_digest is not None and digest != expect_digest:
        raise VocabMismatch(
            f"{path}: checkpoint vocabulary {digest} does not match "
            f"supplied vocabulary {expect_digest}")

    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        try:
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
        except (struct.error, ValueError) as exc:
            raise CorruptCheckpoint(f"{path}: truncated array block") from exc
        if name in arrays:
            raise CorruptCheckpoint(f"{path}: duplicate array {name!r}")
        arrays[name] = arr.reshape(shape).copy()
    if offset != len(blob):
        raise CorruptCheckpoint(f"{path}: {len(blob) - offset} trailing bytes")
    return ModelCheckpoint(config=config, vocab_digest=digest,
                           arrays=arrays, version=version)
