import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pibearing import dsp
from pibearing.dataio import (
    ChannelStats,
    ConstantChannelError,
    InvalidSynthesisSpec,
    Label,
    SegmentParseError,
    SignalSegment,
    StratificationError,
    SynthesisSpec,
    annotated_labels,
    channel_stats,
    make_folds,
    make_split,
    read_csv_channels,
    read_segments,
    segment_stream,
    stack_segments,
    standardize,
    standardize_array,
    synthesize,
    write_segments,
)
from pibearing.geometry import InvalidInputError, OperatingCondition, bpfi, bpfo

COND = OperatingCondition(1500.0, 0.7, 1000.0, "N15_M07_F10")


def stream(length, rng=None):
    rng = rng or np.random.default_rng(0)
    return rng.standard_normal((3, length))


class TestSegmentStream:
    def test_paper_windowing(self):
        raw = np.tile(np.arange(25000.0), (3, 1))
        segs = segment_stream(raw, 10000, 5000, label="outer", condition=COND, sample_rate_hz=64000.0)
        assert [int(s.vibration[0]) for s in segs] == [0, 5000, 10000, 15000]
        assert all(s.window_len == 10000 and s.label == Label.OUTER for s in segs)

    def test_exact_window(self):
        assert len(segment_stream(stream(100), 100, 7, label=0, condition=COND, sample_rate_hz=1.0)) == 1

    def test_non_overlapping_tiling(self):
        raw = stream(90)
        segs = segment_stream(raw, 30, 30, label=0, condition=COND, sample_rate_hz=1.0)
        np.testing.assert_array_equal(np.concatenate([s.current_b for s in segs]), raw[2].astype(np.float32))

    def test_window_too_long(self):
        with pytest.raises(InvalidInputError):
            segment_stream(stream(10), 11, 1, label=0, condition=COND, sample_rate_hz=1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 500), st.integers(1, 200), st.integers(1, 200))
    def test_count_formula(self, length, window, stride):
        if window > length:
            return
        segs = segment_stream(np.zeros((3, length)), window, stride, label=0, condition=COND, sample_rate_hz=1.0)
        assert len(segs) == (length - window) // stride + 1


class TestStandardize:
    def test_own_stats(self):
        x = np.array([[1.0, 2.0, 3.0]] * 3)
        seg = SignalSegment(*x, Label.HEALTHY, COND, 1.0)
        z = standardize_array(x, channel_stats([seg]))
        np.testing.assert_allclose(z.mean(axis=1), 0.0, atol=1e-9)
        np.testing.assert_allclose(z.std(axis=1), 1.0, atol=1e-9)

    def test_identity_stats(self, rng):
        seg = SignalSegment(*rng.standard_normal((3, 50)), Label.INNER, COND, 1.0)
        out = standardize(seg, ChannelStats((0.0,) * 3, (1.0,) * 3))
        np.testing.assert_array_equal(out.channels(), seg.channels())
        assert out.label == seg.label

    def test_constant_channel(self, rng):
        x = rng.standard_normal((3, 20))
        x[1] = 4.0
        seg = SignalSegment(*x, Label.HEALTHY, COND, 1.0)
        with pytest.raises(ConstantChannelError, match="current_a"):
            standardize(seg, channel_stats([seg]))

    def test_pooled_stats(self, rng):
        segs = [SignalSegment(*rng.standard_normal((3, 30)) * 3 + 1, 0, COND, 1.0) for _ in range(4)]
        stats = channel_stats(segs)
        allx = np.concatenate([s.channels().astype(float) for s in segs], axis=1)
        np.testing.assert_allclose(stats.mean, allx.mean(axis=1), rtol=1e-12)
        np.testing.assert_allclose(stats.std, allx.std(axis=1), rtol=1e-12)


class TestSplit:
    def test_table1_counts(self):
        counts = {Label.HEALTHY: 4929, Label.INNER: 9037, Label.OUTER: 9858}
        labels = np.concatenate([np.full(n, int(c)) for c, n in counts.items()])
        split = make_split(labels, (0.8, 0.2), 0)
        test = np.bincount(labels[split.test], minlength=3)
        for got, want in zip(test, (986, 1807, 1972)):
            assert abs(got - want) <= 1
        assert split.validation.size == 0

    def test_ten_items(self):
        split = make_split([0] * 10, (0.6, 0.2, 0.2), 3)
        assert [p.size for p in split.parts()] == [6, 2, 2]

    def test_deterministic(self):
        labels = np.arange(300) % 3
        a, b = make_split(labels, (0.6, 0.2, 0.2), 9), make_split(labels, (0.6, 0.2, 0.2), 9)
        for x, y in zip(a.parts(), b.parts()):
            np.testing.assert_array_equal(x, y)
        c = make_split(labels, (0.6, 0.2, 0.2), 10)
        assert not np.array_equal(a.train, c.train)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 2), min_size=9, max_size=200), st.integers(0, 1000))
    def test_partition_and_balance(self, labels, seed):
        labels = np.asarray(labels)
        if np.bincount(labels, minlength=3)[np.unique(labels)].min() < 3:
            return
        split = make_split(labels, (0.6, 0.2, 0.2), seed)
        allidx = np.concatenate(split.parts())
        assert sorted(allidx.tolist()) == list(range(labels.size))
        for part, r in zip(split.parts(), (0.6, 0.2, 0.2)):
            for c in np.unique(labels):
                n_c = np.sum(labels == c)
                assert abs(np.sum(labels[part] == c) - r * n_c) <= 1

    def test_too_few_members(self):
        with pytest.raises(StratificationError):
            make_split([0, 0, 1], (0.6, 0.2, 0.2), 0)

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            make_split([0] * 10, (0.6, 0.6), 0)


class TestFolds:
    def test_even(self):
        labels = np.repeat([0, 1], 50)
        folds = make_folds(np.arange(100), labels, 5, 0)
        assert [f.size for f in folds] == [20] * 5
        assert all(np.bincount(labels[f]).tolist() == [10, 10] for f in folds)

    def test_uneven_sizes_differ_by_one(self):
        labels = np.array([0] * 13 + [1] * 11 + [2] * 7)
        folds = make_folds(np.arange(31), labels, 4, 2)
        sizes = [f.size for f in folds]
        assert max(sizes) - min(sizes) <= 1
        assert sorted(np.concatenate(folds).tolist()) == list(range(31))

    def test_deterministic(self):
        labels = np.arange(60) % 3
        a = make_folds(np.arange(60), labels, 5, 4)
        b = make_folds(np.arange(60), labels, 5, 4)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_subset_of_train(self):
        labels = np.arange(90) % 3
        train = make_split(labels, (0.8, 0.2), 0).train
        folds = make_folds(train, labels, 5, 0)
        assert set(np.concatenate(folds).tolist()) == set(train.tolist())


class TestSynthesis:
    def test_outer_peak(self):
        segs = synthesize(SynthesisSpec(Label.OUTER, snr_db=6.0, seed=2), 40, 10000)
        hits = 0
        for s in segs:
            spec = dsp.envelope_spectrum(dsp.TimeSeries(s.vibration, s.sample_rate_hz), dsp.BandpassSpec())
            hits += abs(dsp.peak_frequency(spec) - bpfo(s_geom(), 25.0)) <= spec.resolution_hz
        assert hits >= 0.95 * len(segs)

    def test_inner_peak(self):
        segs = synthesize(SynthesisSpec(Label.INNER, snr_db=6.0, seed=2), 40, 10000)
        hits = 0
        for s in segs:
            spec = dsp.envelope_spectrum(dsp.TimeSeries(s.vibration, s.sample_rate_hz), dsp.BandpassSpec())
            hits += abs(dsp.peak_frequency(spec) - bpfi(s_geom(), 25.0)) <= spec.resolution_hz
        assert hits >= 0.95 * len(segs)

    def test_healthy_separation(self, small_corpus_segments):
        from pibearing.model import corpus_features

        y = np.array([int(s.label) for s in small_corpus_segments])
        F = corpus_features(small_corpus_segments)
        healthy = F[y == Label.HEALTHY]
        med_o = np.median(F[y == Label.OUTER, 0])
        med_i = np.median(F[y == Label.INNER, 1])
        assert np.mean((healthy[:, 0] < med_o) & (healthy[:, 1] < med_i)) >= 0.9

    def test_deterministic_and_index_addressable(self):
        spec = SynthesisSpec(Label.OUTER, seed=4)
        a = synthesize(spec, 3, 2048)
        b = synthesize(spec, 3, 2048)
        assert all(np.array_equal(x.channels(), y.channels()) for x, y in zip(a, b))
        assert not np.array_equal(a[0].vibration, a[1].vibration)

    def test_currents_carry_fault_sideband(self):
        seg = synthesize(SynthesisSpec(Label.OUTER, seed=1), 1, 64000)[0]
        spec = dsp.amplitude_spectrum(seg.current_a.astype(float), seg.sample_rate_hz)
        f_side = 50.0 + bpfo(s_geom(), 25.0)
        assert dsp.amplitude_at(spec, f_side, 1.0) > 5 * np.median(spec.amplitudes)

    def test_invalid_specs(self):
        with pytest.raises(InvalidSynthesisSpec):
            SynthesisSpec(Label.OUTER, carrier_hz=40000.0)
        with pytest.raises(InvalidSynthesisSpec):
            SynthesisSpec(Label.OUTER, jitter_pct=12.0)

    def test_mimic_annotation(self):
        segs = synthesize(SynthesisSpec(Label.HEALTHY, current_mimic_fraction=0.5, seed=3), 40, 1024)
        ann = annotated_labels(segs)
        tagged = [s for s in segs if "mimic" in s.tags]
        assert 5 < len(tagged) < 35
        assert all(s.label == Label.HEALTHY for s in segs)
        assert set(ann.tolist()) <= {0, 1, 2} and np.sum(ann != 0) == len(tagged)


def s_geom():
    from pibearing.geometry import PADERBORN_6203

    return PADERBORN_6203


class TestSegmentFiles:
    def test_round_trip(self, tmp_path):
        segs = synthesize(SynthesisSpec(Label.INNER, seed=1), 3, 500)
        segs += synthesize(SynthesisSpec(Label.HEALTHY, seed=1), 2, 500)
        write_segments(segs, tmp_path / "s.bseg")
        back = read_segments(tmp_path / "s.bseg")
        assert len(back) == 5
        for a, b in zip(segs, back):
            assert a.channels().tobytes() == b.channels().tobytes()
            assert a.label == b.label and a.condition == b.condition
            assert a.sample_rate_hz == b.sample_rate_hz

    def test_truncated(self, tmp_path):
        segs = synthesize(SynthesisSpec(Label.INNER, seed=1), 3, 100)
        write_segments(segs, tmp_path / "s.bseg")
        data = (tmp_path / "s.bseg").read_bytes()
        (tmp_path / "t.bseg").write_bytes(data[:-7])
        with pytest.raises(SegmentParseError) as info:
            read_segments(tmp_path / "t.bseg")
        assert info.value.record == 2

    def test_empty_with_header(self, tmp_path):
        write_segments([], tmp_path / "e.bseg")
        assert read_segments(tmp_path / "e.bseg") == []

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bseg").write_bytes(b"JUNK" + bytes(40))
        with pytest.raises(SegmentParseError):
            read_segments(tmp_path / "x.bseg")

    def test_unknown_label_code(self, tmp_path):
        segs = synthesize(SynthesisSpec(Label.INNER, seed=1), 1, 10)
        write_segments(segs, tmp_path / "s.bseg")
        data = bytearray((tmp_path / "s.bseg").read_bytes())
        header = struct.calcsize("<4sHIdH") + len(segs[0].condition.label)
        data[header] = 9
        (tmp_path / "s.bseg").write_bytes(bytes(data))
        with pytest.raises(SegmentParseError):
            read_segments(tmp_path / "s.bseg")

    def test_mixed_segments_rejected(self, tmp_path):
        a = synthesize(SynthesisSpec(Label.INNER, seed=1), 1, 10)
        b = synthesize(SynthesisSpec(Label.INNER, seed=1), 1, 12)
        with pytest.raises(ValueError):
            write_segments(a + b, tmp_path / "m.bseg")

    def test_csv(self, tmp_path):
        (tmp_path / "r.csv").write_text("vib,ia,ib\n1,2,3\n4,5,6\n")
        np.testing.assert_array_equal(read_csv_channels(tmp_path / "r.csv"), [[1, 4], [2, 5], [3, 6]])
        (tmp_path / "bad.csv").write_text("vib,ia\n1,2\n")
        with pytest.raises(SegmentParseError):
            read_csv_channels(tmp_path / "bad.csv")


def test_stack_segments(small_corpus_segments):
    X, y = stack_segments(small_corpus_segments[:5])
    assert X.shape == (5, 3, 10000) and X.dtype == np.float32 and y.dtype == np.int64
