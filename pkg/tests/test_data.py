from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delrec.data import (BinnedSample, Dataset, EventRecord, SyntheticTaskSpec, augment_blend,
                         augment_shift, bin_event_arrays, bin_events, center_of_mass,
                         gen_delayed_coincidence, init_params, load_dataset, permuted_sequence,
                         read_event_text, samples_to_dataset, save_dataset, unpermute_sequence,
                         write_event_text, xcorr_lag_classifier)


class TestBinning:
    def test_single_event(self):
        grid = bin_events([EventRecord(0.015, 7)], 0.01).grid
        assert grid.shape == (2, 140)
        assert grid[1, 1] == 1.0 and grid.sum() == 1.0

    def test_same_bin_counts(self):
        grid = bin_events([EventRecord(0.011, 5), EventRecord(0.019, 9)], 0.01).grid
        assert grid[1, 1] == 2.0
        assert bin_events([EventRecord(0.011, 5), EventRecord(0.019, 9)], 0.01, binary=True).grid[1, 1] == 1.0

    def test_empty(self):
        grid = bin_events([], 0.01, n_steps=5).grid
        assert grid.shape == (5, 140) and not grid.any()

    @pytest.mark.parametrize("events", [[EventRecord(0.0, 700)], [EventRecord(-0.1, 3)]])
    def test_rejects_invalid_events(self, events):
        with pytest.raises(ValueError):
            bin_events(events, 0.01)

    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError):
            bin_events([], 0.0)

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.floats(0.0, 1.0), st.integers(0, 699)), max_size=200))
    def test_conserves_spike_count(self, events):
        times = [t for t, _ in events]
        chans = [c for _, c in events]
        assert bin_event_arrays(times, chans, 0.01).grid.sum() == len(events)


class TestAugmentation:
    def _sample(self, rng, steps=50):
        return BinnedSample((rng.random((steps, 6)) < 0.2).astype(float), 3)

    def test_zero_shift(self):
        s = self._sample(np.random.default_rng(0))
        np.testing.assert_array_equal(augment_shift(s, None, shift=0).grid, s.grid)

    def test_spike_shifted_out(self):
        grid = np.zeros((20, 2))
        grid[-1, 0] = 1.0
        assert augment_shift(BinnedSample(grid, 0), None, shift=100).grid.sum() == 0.0

    def test_exact_shift(self):
        s = self._sample(np.random.default_rng(1))
        out = augment_shift(s, None, shift=4).grid
        np.testing.assert_array_equal(out[4:], s.grid[:-4])
        assert not out[:4].any()

    @given(st.integers(0, 10_000))
    def test_shift_never_adds_spikes(self, seed):
        rng = np.random.default_rng(seed)
        s = self._sample(rng)
        out = augment_shift(s, rng, max_shift=100)
        assert out.grid.sum() <= s.grid.sum()
        assert out.label == s.label

    def test_blend_identity(self):
        rng = np.random.default_rng(2)
        s = self._sample(rng)
        out = augment_blend(s, s, rng)
        np.testing.assert_array_equal(out.grid, s.grid)
        assert out.label == s.label

    def test_blend_requires_same_label(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError):
            augment_blend(BinnedSample(np.ones((3, 2)), 0), BinnedSample(np.ones((3, 2)), 1), rng)

    def test_blend_center_of_mass(self):
        rng = np.random.default_rng(4)
        errors = []
        for _ in range(1000):
            a = np.zeros((200, 4))
            b = np.zeros((200, 4))
            ca, cb = rng.integers(40, 160, size=2)
            for grid, c in ((a, ca), (b, cb)):
                t = np.clip(rng.normal(c, 8, size=40).astype(int), 0, 199)
                grid[t, rng.integers(0, 4, size=40)] = 1.0
            out = augment_blend(BinnedSample(a, 1), BinnedSample(b, 1), rng)
            errors.append(abs(center_of_mass(out.grid) - center_of_mass(a)))
        assert np.mean(np.array(errors) <= 2.0) > 0.95


class TestSynthetic:
    def test_seeded(self):
        spec = SyntheticTaskSpec(n_samples=100)
        a, b = gen_delayed_coincidence(spec), gen_delayed_coincidence(spec)
        np.testing.assert_array_equal(a.train.x, b.train.x)
        np.testing.assert_array_equal(a.test.y, b.test.y)

    def test_split_sizes(self):
        s = gen_delayed_coincidence(SyntheticTaskSpec(n_samples=200))
        assert (len(s.train), len(s.val), len(s.test)) == (140, 30, 30)
        assert s.train.x.shape[1:] == (60, 2)

    def test_echo_structure(self):
        spec = SyntheticTaskSpec(n_classes=2, lags=(2, 9), background_rate=0.0, n_samples=50)
        split = gen_delayed_coincidence(spec)
        for x, y in zip(split.train.x, split.train.y):
            np.testing.assert_array_equal(np.nonzero(x[:, 0])[0] + spec.lags[y], np.nonzero(x[:, 1])[0])

    def test_oracle_classifier_noiseless(self):
        spec = SyntheticTaskSpec(background_rate=0.0, n_samples=400)
        ds = gen_delayed_coincidence(spec).train
        np.testing.assert_array_equal(xcorr_lag_classifier(ds.x, spec.lags), ds.y)

    @pytest.mark.parametrize("kwargs", [{"lags": (2, 60, 3, 4)}, {"lags": (2, 2, 3, 4)},
                                        {"lags": (1, 2)}, {"background_rate": 1.0}])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ValueError):
            SyntheticTaskSpec(**kwargs)


def test_permuted_sequence_bijection():
    images = np.random.default_rng(0).random((3, 28, 28))
    seq, perm = permuted_sequence(images, seed=5)
    assert seq.shape == (3, 784, 1)
    assert sorted(perm.tolist()) == list(range(784))
    np.testing.assert_array_equal(unpermute_sequence(seq, perm, (28, 28)), images)
    np.testing.assert_array_equal(permuted_sequence(images, seed=5)[1], perm)


class TestInit:
    def test_half_normal(self):
        draws = init_params("half_normal", (100_000,), np.random.default_rng(0))
        assert draws.min() >= 0.0
        assert abs(draws.mean() - 12 * math.sqrt(2 / math.pi)) < 0.15

    def test_uniform_10_30(self):
        draws = init_params("uniform_10_30", (10_000,), np.random.default_rng(1))
        assert draws.min() >= 10.0 and draws.max() <= 30.0

    def test_fan_in_bound(self):
        draws = init_params("uniform_fan_in", (200, 25), np.random.default_rng(2))
        assert np.abs(draws).max() <= 0.2
        assert np.abs(draws).max() > 0.19

    def test_kaiming(self):
        draws = init_params("kaiming_uniform", (300, 30), np.random.default_rng(3))
        assert np.abs(draws).max() <= 1 / math.sqrt(30)

    def test_unknown(self):
        with pytest.raises(ValueError):
            init_params("xavier", (3,), np.random.default_rng(0))


class TestFormats:
    def test_text_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        samples = [BinnedSample(rng.integers(0, 3, size=(10, 5)).astype(float), int(k)) for k in (0, 2, 1)]
        path = tmp_path / "events.txt"
        write_event_text(path, samples, n_channels=5)
        back = read_event_text(path)
        for a, b in zip(samples, back):
            np.testing.assert_array_equal(a.grid, b.grid)
            assert a.label == b.label

    def test_text_malformed(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 4\n1 2 3\n")
        with pytest.raises(ValueError):
            read_event_text(path)

    def test_binary_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        ds = Dataset((rng.random((4, 12, 3)) < 0.3).astype(float), np.array([0, 1, 2, 3]))
        path = tmp_path / "ds.bin"
        save_dataset(path, ds)
        assert path.read_bytes()[:4] == b"DREC"
        back = load_dataset(path)
        np.testing.assert_array_equal(back.x, ds.x)
        np.testing.assert_array_equal(back.y, ds.y)

    def test_binary_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(ValueError):
            load_dataset(path)

    def test_binary_truncated(self, tmp_path):
        ds = Dataset(np.ones((2, 5, 2)), np.array([0, 1]))
        path = tmp_path / "ds.bin"
        save_dataset(path, ds)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ValueError):
            load_dataset(path)

    def test_pads_ragged_samples(self):
        ds = samples_to_dataset([BinnedSample(np.ones((3, 2)), 0), BinnedSample(np.ones((5, 2)), 1)])
        assert ds.x.shape == (2, 5, 2)
        assert ds.x[0, 3:].sum() == 0.0
