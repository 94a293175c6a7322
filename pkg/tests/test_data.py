import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gltgcrnn.data import (
    NormalizationSpec,
    RoadNetworkSpec,
    SpeedSeries,
    chronological_split,
    denormalize,
    generate_synthetic,
    impute_missing,
    load_matrix_csv,
    load_speed_csv,
    make_window_batch,
    make_windows,
    normalize,
    split_lengths,
    write_dataset,
    write_speed_csv,
)
from gltgcrnn.errors import (
    BadFractions,
    BadScale,
    BadShape,
    MalformedCsv,
    NegativeSpeed,
    NonSymmetric,
    TooShort,
)


class TestLoadSpeedCsv:
    def test_two_by_two(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("60,55\n58,54")
        s = load_speed_csv(p, interval_minutes=720)
        assert (s.T, s.N) == (2, 2)
        np.testing.assert_array_equal(s.values, [[60, 55], [58, 54]])
        assert s.steps_per_day == 2

    def test_ragged_rows(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("1,2,3\n4,5\n")
        with pytest.raises(MalformedCsv):
            load_speed_csv(p, interval_minutes=720)

    def test_non_numeric_cell(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("1,2\n3,abc\n")
        with pytest.raises(MalformedCsv):
            load_speed_csv(p, interval_minutes=720)

    def test_negative(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("1,2\n3,-4\n")
        with pytest.raises(NegativeSpeed):
            load_speed_csv(p, interval_minutes=720)

    def test_too_short(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("1,2\n3,4\n5,6\n")
        with pytest.raises(TooShort):
            load_speed_csv(p)  # 288 rows needed

    def test_header_detected(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("a,b\n60,55\n58,54\n")
        s = load_speed_csv(p, interval_minutes=720)
        np.testing.assert_array_equal(s.values, [[60, 55], [58, 54]])

    def test_synthetic_round_trip(self, tmp_path):
        series, _ = generate_synthetic(3, 2, seed=4)
        day = series.slice(0, 288)
        p = tmp_path / "day.csv"
        write_speed_csv(p, day)
        back = load_speed_csv(p)
        assert back.steps_per_day == 288
        np.testing.assert_array_equal(back.values, day.values)

    def test_header_write_round_trip(self, tmp_path, chain_data):
        series, _ = chain_data
        p = tmp_path / "s.csv"
        write_speed_csv(p, series, header=True)
        np.testing.assert_array_equal(load_speed_csv(p).values, series.values)

    def test_zero_imputation(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("0,5\n10,0\n0,7\n20,8\n")
        s = load_speed_csv(p, interval_minutes=360)
        # link 0: leading zero -> mean of (10, 20); later zero -> last valid
        np.testing.assert_array_equal(s.values[:, 0], [15, 10, 10, 20])
        np.testing.assert_array_equal(s.values[:, 1], [5, 5, 7, 8])

    def test_impute_keeps_all_zero_link(self):
        v = np.array([[0.0, 1.0], [0.0, 2.0]])
        np.testing.assert_array_equal(impute_missing(v), v)


class TestNetwork:
    def test_asymmetric_rejected(self):
        a = np.array([[0, 1], [0, 0]])
        with pytest.raises(NonSymmetric):
            RoadNetworkSpec(a, a)

    def test_adjacent_needs_distance(self):
        a = np.array([[0, 1], [1, 0]])
        with pytest.raises(BadShape):
            RoadNetworkSpec(a, np.zeros((2, 2)))

    def test_matrix_csv(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("0,1\n1,0\n")
        np.testing.assert_array_equal(load_matrix_csv(p), [[0, 1], [1, 0]])
        p.write_text("0,1,2\n1,0,2\n")
        with pytest.raises(MalformedCsv):
            load_matrix_csv(p)


class TestSplit:
    def test_exact(self):
        assert split_lengths(100, (0.7, 0.2, 0.1)) == (70, 20, 10)

    def test_rounding_enumerated(self):
        for T in range(3, 400):
            lengths = split_lengths(T, (0.7, 0.2, 0.1))
            assert sum(lengths) == T
            for n, f in zip(lengths, (0.7, 0.2, 0.1)):
                assert abs(n - f * T) <= 1
        assert split_lengths(101, (0.7, 0.2, 0.1)) == (71, 20, 10)

    def test_bad_fractions(self):
        with pytest.raises(BadFractions):
            split_lengths(10, (0.5, 0.5, 0.5))
        with pytest.raises(BadFractions):
            split_lengths(10, (1.0, 0.0, 0.0))

    def test_concatenate_restores(self, chain_data):
        series, _ = chain_data
        split = chronological_split(series)
        assert split.concatenate().values.tobytes() == series.values.tobytes()
        assert split.validation.start_index == split.train.T % 288
        np.testing.assert_array_equal(split.test.values, series.values[-split.test.T:])


class TestWindows:
    def test_count(self):
        v = np.arange(24, dtype=float).reshape(12, 2)
        assert len(make_windows(v, M=10, H=1)) == 2

    def test_too_short(self):
        with pytest.raises(TooShort):
            make_windows(np.ones((10, 2)), M=10, H=1)

    def test_constant(self):
        for w in make_windows(np.full((30, 3), 60.0), M=10):
            np.testing.assert_array_equal(w.target, 60.0)

    @given(T=st.integers(5, 40), M=st.integers(1, 6), H=st.integers(1, 3))
    def test_rows_are_copies(self, T, M, H):
        v = np.random.default_rng(T).random((T, 3))
        if T < M + H:
            return
        samples = make_windows(v, M, H)
        assert len(samples) == T - M - H + 1
        for j, w in enumerate(samples):
            assert w.t_index == M - 1 + j
            np.testing.assert_array_equal(w.target, v[w.t_index + H])
            np.testing.assert_array_equal(w.inputs, v[w.t_index - M + 1: w.t_index + 1])

    def test_slots_follow_start_index(self):
        s = SpeedSeries(np.ones((10, 2)), interval_minutes=240, start_index=4)
        b = make_window_batch(s, M=2)
        # 6 slots per day; first target is row 2 -> slot (4 + 2) % 6
        assert b.slots[0] == 0


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic(8, 3, 11, "grid")
        b = generate_synthetic(8, 3, 11, "grid")
        assert a[0].values.tobytes() == b[0].values.tobytes()
        assert a[1].distance.tobytes() == b[1].distance.tobytes()

    def test_chain_nonzeros(self):
        _, net = generate_synthetic(20, 7, 0, "chain")
        assert np.count_nonzero(net.adjacency) == 2 * 19

    def test_noiseless_periodic(self):
        s, _ = generate_synthetic(6, 3, 2, noiseless=True)
        np.testing.assert_array_equal(s.values[:288], s.values[288:576])

    def test_twin_profile(self):
        s, net, manifest = generate_synthetic(10, 2, 5, noiseless=True, return_manifest=True)
        (a, b), = manifest.twin_links
        assert net.adjacency[a, b] == 0
        np.testing.assert_array_equal(s.values[:, a], s.values[:, b])

    def test_bounds(self, chain_data):
        s, _ = chain_data
        assert s.values.min() >= 0 and s.values.max() <= 70

    def test_bad_shape(self):
        with pytest.raises(BadShape):
            generate_synthetic(1, 3, 0)
        with pytest.raises(BadShape):
            generate_synthetic(5, 1, 0)

    def test_write_dataset(self, tmp_path):
        s, net, manifest = generate_synthetic(4, 2, 1, "ring", return_manifest=True)
        paths = write_dataset(tmp_path, s, net, manifest)
        assert "topology=ring" in paths["manifest"].read_text()
        np.testing.assert_array_equal(load_matrix_csv(paths["distance"]), net.distance)


class TestNormalization:
    def test_none_identity(self, chain_data):
        s, _ = chain_data
        assert normalize(s, NormalizationSpec("none")) is s

    def test_division(self):
        assert normalize(np.array([60.0]), NormalizationSpec("max_scale", 60))[0] == 1.0

    def test_bad_scale(self):
        with pytest.raises(BadScale):
            NormalizationSpec("max_scale", 0)
        with pytest.raises(BadScale):
            NormalizationSpec("max_scale", 60, offset=3)

    @given(arrays(np.float64, (7, 3), elements=st.floats(0, 120)),
           st.floats(0.5, 200), st.floats(-50, 50))
    @settings(max_examples=50)
    def test_round_trip(self, x, scale, offset):
        for spec in (NormalizationSpec("max_scale", scale), NormalizationSpec("affine", scale, offset)):
            back = denormalize(normalize(x, spec), spec)
            np.testing.assert_allclose(back, x, rtol=1e-12, atol=1e-12 * (abs(offset) + 1))

    def test_affine_fit(self, chain_data):
        s, _ = chain_data
        spec = NormalizationSpec.fit_affine(s, headroom=0.8)
        z = normalize(s.values, spec)
        assert np.isclose(z.max(), 0.8) and np.isclose(z.min(), -0.8)
