"""Unit tests for the content-addressed corrector cache."""

import stat

import numpy as np
import pytest

from src.homodefect.lib.cache import CorrectorCache, cache_key
from src.homodefect.lib.grid_fields import GridField, cell_grid
from src.homodefect.services.correctors import build_corrector_set


@pytest.fixture
def field():
    grid = cell_grid(1, 16)
    return GridField(grid, np.sin(2 * np.pi * grid.coords(0)))


class TestCacheKey:
    """Tests for canonical key hashing."""

    def test_key_ignores_insertion_order(self):
        assert cache_key({"a": 1, "b": [1, 2]}) == cache_key({"b": [1, 2], "a": 1})

    def test_key_changes_with_content(self):
        assert cache_key({"res": 16}) != cache_key({"res": 32})

    def test_key_is_sha256_hex(self):
        key = cache_key({"res": 16})
        assert len(key) == 64
        int(key, 16)


class TestCorrectorCache:
    """Tests for cache entries on disk."""

    def test_miss_returns_none(self, tmp_path):
        assert CorrectorCache(tmp_path).get(cache_key({"x": 1})) is None

    def test_round_trip_is_bit_exact(self, tmp_path, field):
        cache = CorrectorCache(tmp_path)
        key = cache_key({"x": 1})
        cache.put(key, field)
        assert np.array_equal(cache.get(key).data, field.data)

    def test_entry_is_read_only(self, tmp_path, field):
        cache = CorrectorCache(tmp_path)
        path = cache.put(cache_key({"x": 1}), field)
        assert stat.S_IMODE(path.stat().st_mode) == 0o444

    def test_first_writer_wins(self, tmp_path, field):
        cache = CorrectorCache(tmp_path)
        key = cache_key({"x": 1})
        cache.put(key, field)
        cache.put(key, -field)
        assert np.array_equal(cache.get(key).data, field.data)

    def test_no_temporary_files_left(self, tmp_path, field):
        cache = CorrectorCache(tmp_path)
        cache.put(cache_key({"x": 1}), field)
        cache.put(cache_key({"x": 1}), field)
        assert [p.name for p in tmp_path.iterdir()] == [f"{cache_key({'x': 1})}.hdf1"]

    def test_cached_correctors_match_cold_solve(self, tmp_path, gaussian_1d):
        cache = CorrectorCache(tmp_path / "cache")
        cold = build_corrector_set(gaussian_1d, 32, 16, 8.0, cache=cache)
        warm = build_corrector_set(gaussian_1d, 32, 16, 8.0, cache=cache)
        plain = build_corrector_set(gaussian_1d, 32, 16, 8.0)
        assert np.array_equal(cold.periodic[0].data, warm.periodic[0].data)
        assert np.array_equal(cold.defect[0].data, warm.defect[0].data)
        assert np.array_equal(plain.defect[0].data, warm.defect[0].data)
        assert len(list((tmp_path / "cache").glob("*.hdf1"))) == 2
