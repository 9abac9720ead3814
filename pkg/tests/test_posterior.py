import math

import numpy as np
import pytest

from helpers import collapse_oracle
from spikefst import (
    DataFormatError,
    LabelSequence,
    PosteriorMatrix,
    SynthConfig,
    ValidationError,
    argmax_labels,
    ctc_collapse,
    load_posteriors,
    save_posteriors,
    softmax,
    synth_posteriors,
)


class TestSoftmax:
    def test_symmetric_two_way(self):
        p = softmax(np.array([[0.0, 0.0]]))
        np.testing.assert_allclose(p.values, [[0.5, 0.5]])

    def test_direct_evaluation(self):
        p = softmax(np.array([[0.0, 0.0, math.log(2.0)]]))
        np.testing.assert_allclose(p.values, [[0.25, 0.25, 0.5]], atol=1e-12)

    def test_saturated_rows(self):
        p = softmax(np.array([[10.0, -10.0], [-10.0, 10.0]]))
        np.testing.assert_allclose(p.values, [[1.0, 0.0], [0.0, 1.0]], atol=1e-6)

    def test_rows_sum_to_one_random(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            t = int(rng.integers(1, 30))
            v = int(rng.integers(2, 40))
            p = softmax(rng.normal(0, 5, size=(t, v)))
            np.testing.assert_allclose(p.values.sum(axis=1), 1.0, atol=1e-6)

    def test_rejects_non_finite_naming_frame(self):
        bad = np.zeros((3, 4))
        bad[1, 2] = np.nan
        with pytest.raises(ValidationError, match="frame 1"):
            softmax(bad)

    def test_shape_preserved(self):
        p = softmax(np.zeros((7, 5)))
        assert (p.frames, p.vocab_size) == (7, 5)


class TestArgmaxLabels:
    def test_one_hot_rows(self):
        p = PosteriorMatrix(np.array([[1.0, 0, 0], [0, 1.0, 0]]))
        assert argmax_labels(p).tolist() == [0, 1]

    def test_tie_breaks_to_lowest_index(self):
        p = PosteriorMatrix(np.array([[0.4, 0.4, 0.2]]))
        assert argmax_labels(p).tolist() == [0]

    def test_matches_per_row_scan(self):
        rng = np.random.default_rng(0)
        p = PosteriorMatrix(rng.dirichlet(np.ones(5), size=10))
        expected = []
        for row in p.values:
            best, best_i = -1.0, -1
            for i, x in enumerate(row):
                if x > best:
                    best, best_i = x, i
            expected.append(best_i)
        assert argmax_labels(p).tolist() == expected


class TestPosteriorIO:
    def test_binary_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        raw = rng.dirichlet(np.ones(4), size=3).astype(np.float32).astype(np.float64)
        raw /= raw.sum(axis=1, keepdims=True)
        raw = raw.astype(np.float32).astype(np.float64)  # f32-representable values
        p = PosteriorMatrix(raw)
        path = tmp_path / "m.spkf"
        save_posteriors(p, path, "binary")
        q = load_posteriors(path, "binary")
        assert np.array_equal(p.values, q.values)

    def test_empty_matrix_round_trip(self, tmp_path):
        p = PosteriorMatrix(np.empty((0, 6)))
        path = tmp_path / "m.spkf"
        save_posteriors(p, path, "binary")
        q = load_posteriors(path, "binary")
        assert q.frames == 0 and q.vocab_size == 6

    def test_text_round_trip_tolerance(self, tmp_path):
        rng = np.random.default_rng(4)
        p = PosteriorMatrix(rng.dirichlet(np.ones(7), size=11))
        path = tmp_path / "m.txt"
        save_posteriors(p, path, "text")
        q = load_posteriors(path, "text")
        np.testing.assert_allclose(q.values, p.values, atol=1e-6)

    def test_truncated_payload(self, tmp_path):
        p = PosteriorMatrix(np.full((3, 4), 0.25))
        path = tmp_path / "m.spkf"
        save_posteriors(p, path, "binary")
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(DataFormatError, match="truncated"):
            load_posteriors(path, "binary")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.spkf"
        path.write_bytes(b"XXXX" + b"\0" * 12)
        with pytest.raises(DataFormatError, match="magic"):
            load_posteriors(path, "binary")

    def test_dimension_overflow(self, tmp_path):
        import struct

        path = tmp_path / "m.spkf"
        path.write_bytes(struct.pack("<4sIII", b"SPKF", 1, 2**20, 2**20))
        with pytest.raises(DataFormatError, match="overflow"):
            load_posteriors(path, "binary")


class TestSynth:
    def test_fixed_layout(self):
        cfg = SynthConfig(vocab_size=3, spike_len=(1, 1), blank_run=(2, 2), peak=1.0)
        p = synth_posteriors(LabelSequence((1,)), cfg, seed=0)
        assert argmax_labels(p).tolist() == [0, 0, 1, 0, 0]

    def test_collapse_recovers_labels(self):
        rng = np.random.default_rng(9)
        for trial in range(30):
            v = int(rng.integers(3, 20))
            labels = tuple(int(rng.integers(1, v)) for _ in range(int(rng.integers(0, 12))))
            cfg = SynthConfig(
                vocab_size=v,
                spike_len=(1, int(rng.integers(1, 4))),
                blank_run=(int(rng.integers(0, 2)), int(rng.integers(2, 6))),
                peak=0.9,
                noise=0.1,
            )
            p = synth_posteriors(LabelSequence(labels), cfg, seed=trial)
            assert collapse_oracle(argmax_labels(p)) == list(labels)
            assert ctc_collapse(argmax_labels(p)) == list(labels)

    def test_zero_blank_runs_keep_distinct_spikes_adjacent(self):
        cfg = SynthConfig(vocab_size=4, spike_len=(1, 1), blank_run=(0, 0), peak=0.9)
        p = synth_posteriors(LabelSequence((1, 2)), cfg, seed=5)
        assert argmax_labels(p).tolist() == [1, 2]

    def test_deterministic_for_seed(self):
        cfg = SynthConfig(vocab_size=8, noise=0.2, peak=0.9)
        a = synth_posteriors(LabelSequence((1, 2, 3)), cfg, seed=11)
        b = synth_posteriors(LabelSequence((1, 2, 3)), cfg, seed=11)
        assert np.array_equal(a.values, b.values)

    def test_weak_peak_rejected(self):
        with pytest.raises(ValidationError, match="argmax"):
            SynthConfig(vocab_size=2, peak=0.51, noise=0.05)


class TestValidation:
    def test_rows_must_be_stochastic(self):
        with pytest.raises(ValidationError, match="sums to"):
            PosteriorMatrix(np.array([[0.7, 0.2]]))

    def test_entries_must_be_probabilities(self):
        with pytest.raises(ValidationError):
            PosteriorMatrix(np.array([[1.5, -0.5]]))

    def test_needs_blank_plus_token(self):
        with pytest.raises(ValidationError):
            PosteriorMatrix(np.ones((2, 1)))
