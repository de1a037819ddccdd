"""
Tests for the reference potential cache.
"""
import warnings

import numpy as np
import pytest

from prolate_ewald import reference
from prolate_ewald.errors import StaleCacheWarning
from prolate_ewald.kernel_split import SplitFamily, make_gaussian_split, make_pswf_split, self_term
from prolate_ewald.reference import (
    ReferenceCache,
    ReferenceSettings,
    cached_reference,
    reference_far_field,
    reference_split,
)
from tests.conftest import random_system


@pytest.fixture
def counting_reference(monkeypatch):
    """Replace the expensive reference sum with a cheap recorded stand-in."""
    calls = []

    def fake(system, settings=reference.DEFAULT_SETTINGS):
        calls.append(system.checksum())
        return np.asarray(system.charges) * 10.0

    monkeypatch.setattr(reference, "reference_potential", fake)
    return calls


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------

class TestReferenceSettings:
    """Tests for the reference parameters."""

    def test_defaults(self):
        """0.45 L cutoff, sigma = r_c/6, 64 modes per axis."""
        split = reference_split(2.0)
        assert split.family is SplitFamily.GAUSSIAN
        assert split.r_c == pytest.approx(0.9)
        assert split.shape == pytest.approx(0.15)

    def test_tag_names_settings(self):
        """The tag encodes every setting that changes the result."""
        assert ReferenceSettings().tag == "rc0.45_s6_m64"
        assert ReferenceSettings(m_ref=48).tag != ReferenceSettings().tag


class TestReferenceFarField:
    """Tests for far-field extraction from a total potential."""

    def test_pswf_split_uses_own_cutoff(self, small_system):
        """total - local + self for a PSWF split."""
        split = make_pswf_split(11.0, 0.2)
        total = np.zeros(small_system.n)
        far = reference_far_field(small_system, split, total)
        local = reference.real_space_sum(small_system, split)
        np.testing.assert_allclose(far, -local + self_term(split) * small_system.charges, rtol=1e-14)

    def test_gaussian_split_widens_cutoff(self, small_system):
        """Gaussian splits use the 0.49 L local cutoff."""
        split = make_gaussian_split(0.05, 0.2)
        wide = make_gaussian_split(0.05, 0.49)
        total = np.zeros(small_system.n)
        far = reference_far_field(small_system, split, total)
        expected = -reference.real_space_sum(small_system, wide) + self_term(split) * small_system.charges
        np.testing.assert_allclose(far, expected, rtol=1e-14)


# ---------------------------------------------------------------------------
# Cache
# ---------------------------------------------------------------------------

class TestReferenceCache:
    """Tests for the on-disk cache."""

    def test_path_names_seed_size_and_box(self, test_dir):
        """One file per (seed, n, L, settings)."""
        cache = ReferenceCache(test_dir)
        path = cache.path_for(random_system(0, 5, 1.0), seed=3)
        assert path == test_dir / "ref_seed3_n5_L1.0_rc0.45_s6_m64.npz"

    def test_miss_then_hit(self, test_dir, counting_reference):
        """The first call computes and stores; the second reads the file."""
        system = random_system(1, 6, 1.0)
        cache = ReferenceCache(test_dir / "cache")
        first = cache.total(system, seed=1)
        assert len(counting_reference) == 1
        assert cache.path_for(system, 1).is_file()

        second = cache.total(system, seed=1)
        assert len(counting_reference) == 1
        np.testing.assert_array_equal(first, second)

    def test_mismatched_checksum_recomputes(self, test_dir, counting_reference):
        """A cached file for a different system warns and is replaced."""
        cache = ReferenceCache(test_dir)
        old = random_system(1, 6, 1.0)
        new = random_system(2, 6, 1.0)
        cache.total(old, seed=1)

        with pytest.warns(StaleCacheWarning, match="does not match"):
            potential = cache.total(new, seed=1)
        assert len(counting_reference) == 2
        np.testing.assert_array_equal(potential, new.charges * 10.0)

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            cache.total(new, seed=1)
        assert len(counting_reference) == 2

    def test_unreadable_file_recomputes(self, test_dir, counting_reference):
        """A corrupt cache file warns and is rewritten."""
        system = random_system(1, 6, 1.0)
        cache = ReferenceCache(test_dir)
        cache.path_for(system, 1).write_bytes(b"not an npz file")

        with pytest.warns(StaleCacheWarning, match="unreadable"):
            cache.total(system, seed=1)
        assert len(counting_reference) == 1
        cache.total(system, seed=1)
        assert len(counting_reference) == 1

    def test_no_temporary_files_left(self, test_dir, counting_reference):
        """Only the cache file and its lock remain after a write."""
        system = random_system(1, 6, 1.0)
        cache = ReferenceCache(test_dir)
        cache.total(system, seed=4)
        names = sorted(p.name for p in test_dir.iterdir())
        assert names == [cache.path_for(system, 4).name, cache.path_for(system, 4).name + ".lock"]

    def test_settings_separate_files(self, test_dir, counting_reference):
        """Different settings never share a cache file."""
        system = random_system(1, 6, 1.0)
        ReferenceCache(test_dir).total(system, seed=1)
        ReferenceCache(test_dir, ReferenceSettings(m_ref=32)).total(system, seed=1)
        assert len(counting_reference) == 2


class TestCachedReference:
    """Tests for the cache-or-compute entry point."""

    def test_without_directory(self, counting_reference):
        """No cache_dir computes every time."""
        system = random_system(1, 6, 1.0)
        cached_reference(system, 1, None)
        cached_reference(system, 1, None)
        assert len(counting_reference) == 2

    def test_with_directory(self, test_dir, counting_reference):
        """A cache_dir is created and reused."""
        system = random_system(1, 6, 1.0)
        directory = test_dir / "nested" / "cache"
        cached_reference(system, 1, directory)
        cached_reference(system, 1, str(directory))
        assert directory.is_dir()
        assert len(counting_reference) == 1


class TestEntryLock:
    """Tests for the per-entry write lock."""

    def test_released_after_write(self, test_dir, counting_reference):
        """Once total() returns, another handle can take the lock."""
        system = random_system(1, 6, 1.0)
        cache = ReferenceCache(test_dir)
        cache.total(system, seed=1)
        lock_path = test_dir / (cache.path_for(system, 1).name + ".lock")
        with open(lock_path, "a+b") as handle:
            reference._try_acquire(handle)
            reference._release(handle)

    def test_yields_held(self, test_dir):
        """An uncontended lock is held inside the block."""
        with reference._entry_lock(test_dir / "entry.npz") as held:
            assert held
        assert (test_dir / "entry.npz.lock").is_file()

    def test_contended_lock_times_out_and_writes(self, test_dir, counting_reference, monkeypatch, caplog):
        """A lock held elsewhere is waited on, then the entry is written unlocked with a warning."""
        monkeypatch.setattr(reference, "_LOCK_TIMEOUT", 0.1)
        system = random_system(1, 6, 1.0)
        cache = ReferenceCache(test_dir)
        lock_path = test_dir / (cache.path_for(system, 1).name + ".lock")
        with open(lock_path, "a+b") as handle:
            reference._try_acquire(handle)
            try:
                with caplog.at_level("WARNING", logger="prolate_ewald.reference"):
                    potential = cache.total(system, seed=1)
            finally:
                reference._release(handle)
        assert "could not lock" in caplog.text
        assert len(counting_reference) == 1
        np.testing.assert_array_equal(potential, system.charges * 10.0)
