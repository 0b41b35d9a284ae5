"""Persistence: binary field records, tagged enhancement snapshots, CSV series and JSON manifests.

Field record (little-endian): header "<4sIIIdd" = magic b"PHI4", format version, K, M, m0,
t; then (2K+1)^3 coefficients as (real, imag) float64 pairs in C order over
(k1, k2, k3) from -K to K. An enhancement snapshot is a field record header followed by
one (8-byte NUL-padded ASCII tag, coefficient block) pair per object.

Every file is written to a temporary sibling and renamed into place.
"""

import csv
import json
import os
import struct
import tempfile
from contextlib import contextmanager

import numpy as np

from phi4sqe.enhancement import EnhancedState
from phi4sqe.errors import GridError
from phi4sqe.torus import FourierField, make_grid


MAGIC = b"PHI4"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIIdd")
TAG = struct.Struct("<8s")

ENHANCED_TAGS = ["Z", "Z1", "Z2", "Z3", "Z02", "Z03", "Z22", "Z23", "J"]

MANIFEST_FILE = "manifest.json"
MEASURES_FILE = "measures.csv"
PROFILES_FILE = "profiles.csv"
ERROR_FILE = "error.json"


@contextmanager
def atomic_open(path, mode="w"):
    """Yields a temporary file next to `path`; it replaces `path` only on success."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    binary = "b" in mode
    try:
        with os.fdopen(fd, mode, **({} if binary else {"newline": "", "encoding": "utf-8"})) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


# Fields
def _coefficient_bytes(F):
    pairs = np.empty(F.grid.shape + (2,), dtype="<f8")
    pairs[..., 0] = F.coeff.real
    pairs[..., 1] = F.coeff.imag
    return pairs.tobytes(order="C")


def _read_coefficients(data, offset, grid):
    count = int(np.prod(grid.shape)) * 2
    pairs = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
    pairs = pairs.reshape(grid.shape + (2,))
    return FourierField(grid, pairs[..., 0] + 1j * pairs[..., 1]), offset + count * 8


def _read_header(data):
    if len(data) < HEADER.size:
        raise ValueError("truncated field record")
    magic, version, K, M, m0, t = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported field format version {version}")
    return make_grid(K, M), m0, t


def encode_field(F, m0, t=0.0):
    return HEADER.pack(MAGIC, FORMAT_VERSION, F.grid.K, F.grid.M, m0, t) + _coefficient_bytes(F)


def decode_field(data):
    grid, m0, t = _read_header(data)
    F, end = _read_coefficients(data, HEADER.size, grid)
    if end != len(data):
        raise ValueError(f"field record has {len(data) - end} trailing bytes")
    return F, m0, t


def write_field(path, F, m0, t=0.0):
    with atomic_open(path, "wb") as f:
        f.write(encode_field(F, m0, t))


def read_field(path):
    with open(path, "rb") as f:
        return decode_field(f.read())


# Enhancement snapshots
def encode_enhanced(state):
    parts = [HEADER.pack(MAGIC, FORMAT_VERSION, state.grid.K, state.grid.M, state.m0, state.t)]
    for tag in ENHANCED_TAGS:
        parts.append(TAG.pack(tag.encode("ascii")))
        parts.append(_coefficient_bytes(getattr(state, tag)))
    return b"".join(parts)


def decode_enhanced(data):
    """Tagged fields of an enhancement snapshot as (t, m0, {tag: FourierField})."""
    grid, m0, t = _read_header(data)
    offset = HEADER.size
    fields = {}
    while offset < len(data):
        (raw,) = TAG.unpack_from(data, offset)
        tag = raw.rstrip(b"\0").decode("ascii")
        fields[tag], offset = _read_coefficients(data, offset + TAG.size, grid)
    missing = [tag for tag in ENHANCED_TAGS if tag not in fields]
    if missing:
        raise ValueError(f"enhancement snapshot lacks {missing}")
    return t, m0, fields


def restore_enhanced(data, consts):
    t, m0, fields = decode_enhanced(data)
    if m0 != consts.m0:
        raise GridError(f"snapshot m0={m0} does not match constants m0={consts.m0}")
    return EnhancedState(t=t, consts=consts, **fields)


def write_enhanced(path, state):
    with atomic_open(path, "wb") as f:
        f.write(encode_enhanced(state))


# Tables and manifests
def write_csv(path, header, rows):
    with atomic_open(path, "w") as f:
        writer = csv.writer(f, csv.unix_dialect, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])


def format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def read_csv(path):
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f, csv.unix_dialect, quoting=csv.QUOTE_MINIMAL)
        header = next(reader)
        return header, [row for row in reader]


def write_json(path, record):
    with atomic_open(path, "w") as f:
        json.dump(record, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
