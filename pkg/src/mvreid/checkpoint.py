"""Binary checkpoint format for named float32 tensors.

Layout (all integers little-endian uint32):

    magic  b"MVRE"
    version (currently 1)
    tensor count
    per tensor: name length, UTF-8 name bytes, rank, dims, float32 payload

Entries are written in sorted name order so the same parameters always produce
byte-identical files.
"""

import struct

import numpy as np

from .errors import ContractError, TruncatedFileError, VersionError

MAGIC = b"MVRE"
VERSION = 1


def save_checkpoint(path, tensors):
    """Write a name -> Tensor/ndarray mapping as float32."""
    items = []
    for name in sorted(tensors):
        arr = getattr(tensors[name], "data", tensors[name])
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        items.append((name, arr))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(items)))
        for name, arr in items:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack("<%dI" % arr.ndim, *arr.shape))
            fh.write(arr.tobytes())


def _read(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFileError("checkpoint truncated while reading %s" % what)
    return buf


def load_checkpoint(path):
    """Read a checkpoint back as a dict of float32 arrays, bit-exact."""
    with open(path, "rb") as fh:
        if _read(fh, 4, "magic") != MAGIC:
            raise ContractError("not a checkpoint file: bad magic")
        version, count = struct.unpack("<II", _read(fh, 8, "header"))
        if version != VERSION:
            raise VersionError("unsupported checkpoint version %d" % version)
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read(fh, 4, "name length"))
            name = _read(fh, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read(fh, 4, "rank"))
            shape = struct.unpack("<%dI" % rank, _read(fh, 4 * rank, "dims"))
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            payload = _read(fh, 4 * n, "tensor %r payload" % name)
            out[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        trailing = fh.read(1)
    if trailing:
        raise ContractError("checkpoint has trailing bytes after last tensor")
    return out


def restore_into(params, loaded):
    """Copy loaded arrays into an existing parameter dict, validating shapes."""
    missing = sorted(set(params) - set(loaded))
    extra = sorted(set(loaded) - set(params))
    if missing or extra:
        raise ContractError(
            "checkpoint/parameter mismatch: missing %r, unexpected %r" % (missing, extra))
    for name, p in params.items():
        arr = loaded[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise ContractError(
                "checkpoint tensor %r has shape %r, expected %r"
                % (name, tuple(arr.shape), tuple(p.data.shape)))
        p.data[...] = arr.astype(p.data.dtype, copy=False)
