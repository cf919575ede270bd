"""Bit-exact binary field files (``.hdf1``).

Layout:
    8 bytes   magic ``b"HDFLD01\\0"``
    8 bytes   little-endian unsigned length ``L`` of the metadata blob
    L bytes   UTF-8 JSON ``{dim, extents, origin, spacing, components, bc}``
    rest      little-endian float64 payload, row-major, component fastest
"""

import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.homodefect.lib.grid_fields import Grid, GridError, GridField

logger = logging.getLogger(__name__)

MAGIC = b"HDFLD01\0"
EXTENSION = ".hdf1"
_LENGTH = struct.Struct("<Q")
_REQUIRED_KEYS = ("dim", "extents", "origin", "spacing", "components", "bc")


class FieldIOError(OSError):
    """Raised when a field file cannot be read or written."""


class FormatError(ValueError):
    """Raised when a field file is malformed."""


def encode_field(field: GridField) -> bytes:
    grid = field.grid
    metadata = {
        "dim": grid.dim,
        "extents": [int(n) for n in grid.extents],
        "origin": [float(o) for o in grid.origin],
        "spacing": [float(h) for h in grid.spacing],
        "components": list(field.component_shape),
        "bc": grid.bc,
    }
    blob = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(field.data, dtype="<f8").tobytes(order="C")
    return MAGIC + _LENGTH.pack(len(blob)) + blob + payload


def decode_field(raw: bytes, source: str = "<bytes>") -> GridField:
    if len(raw) < len(MAGIC) + _LENGTH.size or raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{source}: bad magic, not a field file")
    offset = len(MAGIC)
    (length,) = _LENGTH.unpack_from(raw, offset)
    offset += _LENGTH.size
    if offset + length > len(raw):
        raise FormatError(f"{source}: truncated metadata header")
    try:
        metadata = json.loads(raw[offset: offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{source}: unreadable metadata header ({e})") from e
    if not isinstance(metadata, dict):
        raise FormatError(f"{source}: metadata header is not an object")
    offset += length

    for key in _REQUIRED_KEYS:
        if key not in metadata:
            raise FormatError(f"{source}: metadata field '{key}' missing")
    dim = metadata["dim"]
    for key in ("extents", "origin", "spacing"):
        if not isinstance(metadata[key], list) or len(metadata[key]) != dim:
            raise FormatError(f"{source}: metadata field '{key}' does not match dim={dim}")
    components = metadata["components"]
    try:
        component_dims = [int(c) for c in components] if isinstance(components, list) else None
    except (TypeError, ValueError) as e:
        raise FormatError(f"{source}: metadata field 'components' invalid: {components!r}") from e
    if component_dims is None or any(c != dim for c in component_dims):
        raise FormatError(f"{source}: metadata field 'components' invalid: {components!r}")

    try:
        grid = Grid(
            extents=tuple(int(n) for n in metadata["extents"]),
            origin=tuple(float(o) for o in metadata["origin"]),
            spacing=tuple(float(h) for h in metadata["spacing"]),
            bc=metadata["bc"],
        )
    except (GridError, TypeError, ValueError) as e:
        raise FormatError(f"{source}: metadata field 'extents' or grid invalid ({e})") from e

    shape = tuple(grid.extents) + tuple(component_dims)
    expected = int(np.prod(shape)) * 8
    if len(raw) - offset != expected:
        raise FormatError(
            f"{source}: payload has {len(raw) - offset} bytes, expected {expected}"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=offset).reshape(shape).astype(float)
    return GridField(grid, data)


def save_field(field: GridField, path: Union[str, Path]) -> Path:
    """Write ``field`` to ``path``; returns the path written."""
    path = Path(path)
    try:
        path.write_bytes(encode_field(field))
    except OSError as e:
        raise FieldIOError(f"Cannot write field file {path}: {e}") from e
    logger.debug("Wrote field %s extents=%s", path, field.grid.extents)
    return path


def load_field(path: Union[str, Path]) -> GridField:
    """Read a field written by ``save_field``.

    Raises:
        FieldIOError: If the file cannot be read.
        FormatError: On bad magic, dimension mismatch or truncated payload.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FieldIOError(f"Cannot read field file {path}: {e}") from e
    return decode_field(raw, source=str(path))
