"""Unit tests for the binary field file format."""

import json
import struct

import numpy as np
import pytest

from src.homodefect.lib.field_io import (
    MAGIC,
    FieldIOError,
    FormatError,
    decode_field,
    encode_field,
    load_field,
    save_field,
)
from src.homodefect.lib.grid_fields import Box, GridField, box_grid, cell_grid


def _raw(metadata: dict, payload: bytes = b"") -> bytes:
    blob = json.dumps(metadata).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(blob)) + blob + payload


class TestFieldFiles:
    """Tests for save/load of grid fields."""

    def test_scalar_field_is_bit_exact(self, tmp_path):
        grid = cell_grid(2, 16)
        rng = np.random.default_rng(7)
        field = GridField(grid, rng.standard_normal(grid.extents))
        loaded = load_field(save_field(field, tmp_path / "w.hdf1"))
        assert loaded.grid == grid
        assert np.array_equal(loaded.data, field.data)

    def test_vector_field_keeps_components(self, tmp_path):
        grid = box_grid(Box.cube(2, -1.0, 1.0), 0.25)
        data = np.stack([grid.mesh()[..., 0], -grid.mesh()[..., 1]], axis=-1)
        loaded = load_field(save_field(GridField(grid, data), tmp_path / "g.hdf1"))
        assert loaded.component_shape == (2,)
        assert np.array_equal(loaded.data, data)

    def test_header_starts_with_magic(self):
        field = GridField(cell_grid(1, 16), np.zeros(16))
        assert encode_field(field).startswith(MAGIC)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FieldIOError):
            load_field(tmp_path / "absent.hdf1")

    def test_unwritable_target(self, tmp_path):
        field = GridField(cell_grid(1, 16), np.zeros(16))
        with pytest.raises(FieldIOError):
            save_field(field, tmp_path / "no" / "such" / "dir" / "f.hdf1")


class TestMalformedFiles:
    """Tests for rejection of malformed headers and payloads."""

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            decode_field(b"NOTAFILE" + bytes(16))

    def test_truncated_payload(self):
        raw = encode_field(GridField(cell_grid(1, 16), np.ones(16)))
        with pytest.raises(FormatError, match="payload"):
            decode_field(raw[:-8])

    def test_missing_key_is_named(self):
        metadata = {"dim": 1, "extents": [4], "origin": [0.0], "spacing": [0.25], "components": []}
        with pytest.raises(FormatError, match="bc"):
            decode_field(_raw(metadata, bytes(32)))

    def test_dimension_mismatch(self):
        metadata = {"dim": 2, "extents": [4], "origin": [0.0], "spacing": [0.25],
                    "components": [], "bc": "periodic"}
        with pytest.raises(FormatError, match="extents"):
            decode_field(_raw(metadata, bytes(32)))

    def test_too_few_nodes(self):
        metadata = {"dim": 1, "extents": [2], "origin": [0.0], "spacing": [0.5],
                    "components": [], "bc": "periodic"}
        with pytest.raises(FormatError):
            decode_field(_raw(metadata, bytes(16)))

    def test_non_numeric_component_is_named(self):
        metadata = {"dim": 1, "extents": [4], "origin": [0.0], "spacing": [0.25],
                    "components": ["x"], "bc": "periodic"}
        with pytest.raises(FormatError, match=r"w_per_0\.hdf1: metadata field 'components'"):
            decode_field(_raw(metadata, bytes(32)), source="w_per_0.hdf1")

    def test_component_must_be_a_list(self):
        metadata = {"dim": 1, "extents": [4], "origin": [0.0], "spacing": [0.25],
                    "components": 1, "bc": "periodic"}
        with pytest.raises(FormatError, match="components"):
            decode_field(_raw(metadata, bytes(32)))
