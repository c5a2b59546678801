import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stoc.data import (
    DataError,
    DatasetDescriptor,
    LabeledTable,
    fit_scaler,
    load_csv,
    make_split,
    standardize,
    synth_blobs,
)
from stoc.occ import gde_fit, gde_score


def _write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_label_mapping(self, tmp_path):
        p = _write(tmp_path, "a,label\n1,normal\n2,attack\n3,normal\n")
        t = load_csv(p, "label", {"attack"})
        assert t.labels.tolist() == [0, 1, 0]
        np.testing.assert_array_equal(t.features, [[1.0], [2.0], [3.0]])

    def test_reverse_labels(self, tmp_path):
        p = _write(tmp_path, "a,label\n1,normal\n2,attack\n3,normal\n")
        assert load_csv(p, "label", {"attack"}, reverse_labels=True).labels.tolist() == [1, 0, 1]

    def test_categorical_one_hot_matches_hand_encoding(self, tmp_path):
        p = _write(tmp_path, "proto,x,label\ntcp,1.5,n\nudp,2,a\nicmp,0,n\ntcp,-1,n\n")
        t = load_csv(p, "label", {"a"})
        # vocabulary sorted: icmp, tcp, udp
        expected = np.array([
            [0, 1, 0, 1.5],
            [0, 0, 1, 2.0],
            [1, 0, 0, 0.0],
            [0, 1, 0, -1.0],
        ])
        np.testing.assert_array_equal(t.features, expected)
        assert np.all(t.features[:, :3].sum(axis=1) == 1)

    def test_custom_delimiter(self, tmp_path):
        p = _write(tmp_path, "a;b;y\n1;2;0\n3;4;1\n")
        t = load_csv(p, "y", {"1"}, delimiter=";")
        assert t.features.shape == (2, 2)

    @pytest.mark.parametrize("text, match", [
        ("a,label\n1,n\n,a\n", "missing value"),
        ("a,label\n1,n\n2\n", "expected 2 fields"),
        ("a,b\n1,2\n", "label column"),
        ("a,label\n1,n\n", "positive label"),
        ("", "empty"),
        ("a,label\n", "no data rows"),
    ])
    def test_rejects_malformed(self, tmp_path, text, match):
        p = _write(tmp_path, text)
        with pytest.raises(DataError, match=match):
            load_csv(p, "label", {"a"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv", "label", {"a"})

    def test_descriptor_resolves_relative_path(self, tmp_path):
        _write(tmp_path, "a,label\n1,n\n2,a\n", "d.csv")
        t = DatasetDescriptor("d", "d.csv", "label", ("a",)).load(tmp_path)
        assert t.name == "d" and t.labels.tolist() == [0, 1]


class TestLabeledTable:
    def test_rejects_length_mismatch(self):
        with pytest.raises(DataError):
            LabeledTable(np.zeros((3, 2)), [0, 1])

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            LabeledTable(np.array([[np.nan], [1.0]]), [0, 1])

    def test_read_only(self):
        t = LabeledTable(np.zeros((2, 1)), [0, 1])
        with pytest.raises(ValueError):
            t.features[0, 0] = 1.0


def _table(n_normal=1000, n_anomaly=200):
    X = np.arange(n_normal + n_anomaly, dtype=np.float64)[:, None]
    y = np.r_[np.zeros(n_normal), np.ones(n_anomaly)]
    return LabeledTable(X, y)


class TestMakeSplit:
    def test_zero_ratio_counts(self):
        s = make_split(_table(), 0.0, 1, 2)
        assert s.train_features.shape[0] == 500 and s.train_true_labels.sum() == 0
        assert s.test_labels.tolist().count(0) == 500 and s.test_labels.sum() == 200

    def test_ten_percent_counts_by_enumeration(self):
        t = _table()
        s = make_split(t, 0.10, 1, 2)
        train_rows = set(s.train_index.tolist())
        test_rows = set(s.test_index.tolist())
        anomalies = set(np.flatnonzero(t.labels == 1).tolist())
        assert len(train_rows) == 500
        assert len(train_rows & anomalies) == 50
        assert len(test_rows & anomalies) == 150
        assert not (train_rows & anomalies) & test_rows
        assert len(test_rows) == 500 + 150

    def test_deterministic(self):
        a = make_split(_table(), 0.05, 3, 4)
        b = make_split(_table(), 0.05, 3, 4)
        for name in ("train_index", "test_index", "discarded_index"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    @settings(max_examples=40, deadline=None)
    @given(
        n_normal=st.integers(4, 120),
        n_anomaly=st.integers(1, 40),
        ratio=st.floats(0, 0.10),
        seeds=st.tuples(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1)),
    )
    def test_partition_property(self, n_normal, n_anomaly, ratio, seeds):
        t = _table(n_normal, n_anomaly)
        try:
            s = make_split(t, ratio, *seeds)
        except DataError:
            assert round(ratio * (n_normal // 2)) > n_anomaly
            return
        parts = [s.train_index, s.test_index, s.discarded_index]
        allrows = np.sort(np.concatenate(parts))
        np.testing.assert_array_equal(allrows, np.arange(n_normal + n_anomaly))
        assert np.all(t.labels[s.discarded_index] == 0)
        n_train = n_normal // 2
        assert s.train_features.shape[0] == n_train
        assert abs(s.train_true_labels.sum() - ratio * n_train) <= 1
        np.testing.assert_array_equal(s.train_features, t.features[s.train_index])

    def test_rejects_ratio_out_of_range(self):
        with pytest.raises(DataError):
            make_split(_table(), 0.2, 0, 0)

    def test_rejects_not_enough_anomalies(self):
        with pytest.raises(DataError, match="needs"):
            make_split(_table(1000, 3), 0.10, 0, 0)

    def test_csv_then_split_deterministic(self, tmp_path):
        lines = ["x,y,label"] + [f"{i},{i % 7},{'a' if i % 10 == 0 else 'n'}" for i in range(100)]
        p = _write(tmp_path, "\n".join(lines) + "\n")
        a = make_split(load_csv(p, "label", {"a"}), 0.05, 9, 10)
        b = make_split(load_csv(p, "label", {"a"}), 0.05, 9, 10)
        np.testing.assert_array_equal(a.train_features, b.train_features)
        np.testing.assert_array_equal(a.test_features, b.test_features)


class TestScaler:
    def test_population_std(self):
        train, _, sc = standardize(np.array([[1.0], [3.0]]), np.array([[2.0]]))
        np.testing.assert_array_equal(sc.mean, [2.0])
        np.testing.assert_array_equal(sc.std, [1.0])
        np.testing.assert_array_equal(train.ravel(), [-1.0, 1.0])

    def test_constant_column(self):
        train, test, sc = standardize(np.array([[5.0, 1], [5.0, 2]]), np.array([[5.0, 3]]))
        assert sc.std[0] == 1.0
        np.testing.assert_array_equal(train[:, 0], 0.0)
        assert np.all(np.isfinite(test))

    def test_uses_train_statistics(self):
        _, test, _ = standardize(np.array([[0.0], [2.0]]), np.array([[10.0], [12.0]]))
        np.testing.assert_array_equal(test.ravel(), [9.0, 11.0])

    def test_column_mismatch(self):
        with pytest.raises(DataError):
            standardize(np.zeros((2, 2)), np.zeros((2, 3)))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 5)),
                  elements=st.floats(-1e6, 1e6)))
    def test_invertible(self, X):
        sc = fit_scaler(X)
        assert np.all(sc.std > 0)
        back = sc.inverse_transform(sc.transform(X))
        np.testing.assert_allclose(back, X, rtol=1e-9, atol=1e-9 * (1 + np.abs(X).max()))


class TestSynthBlobs:
    def test_counts(self):
        t = synth_blobs(100, 10, 2, 6.0, 0)
        assert t.features.shape == (110, 2) and t.labels.sum() == 10

    def test_deterministic(self):
        a, b = synth_blobs(50, 5, 3, 6.0, 4), synth_blobs(50, 5, 3, 6.0, 4)
        assert a.features.tobytes() == b.features.tobytes()

    def test_separation_oracle(self):
        t = synth_blobs(1000, 100, 8, 6.0, 3)
        normals, anomalies = t.features[t.labels == 0], t.features[t.labels == 1]
        g = gde_fit(normals)
        cut = np.percentile(gde_score(g, normals), 90)
        assert np.all(gde_score(g, anomalies) > cut)

    def test_rejects_bad_args(self):
        with pytest.raises(DataError):
            synth_blobs(0, 1, 2, 6.0, 0)
