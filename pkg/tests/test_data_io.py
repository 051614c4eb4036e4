import numpy as np
import pytest

from smkl.data_io import DataError, RawDataset, Schema, load_bundled, load_csv, split_standardize


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


SCHEMA = {"label": "y", "positive": "1", "columns": {"a": "numeric", "color": "categorical"}}


def test_one_hot_drops_first_level(tmp_path):
    p = write(tmp_path, "a,color,y\n1.5,b,1\n2,a,0\n3,c,1\n")
    raw = load_csv(p, SCHEMA)
    assert raw.feature_names == ["a", "color=b", "color=c"]
    assert np.array_equal(raw.X, [[1.5, 1, 0], [2, 0, 0], [3, 0, 1]])
    assert np.array_equal(raw.y, [1, -1, 1])


def test_numeric_passthrough_and_delimiter(tmp_path):
    p = write(tmp_path, "a;b;y\n1;2;x\n3;4;z\n")
    raw = load_csv(p, {"label": "y", "positive": "x", "delimiter": ";", "columns": {"a": "numeric", "b": "numeric"}})
    assert np.array_equal(raw.X, [[1, 2], [3, 4]]) and np.array_equal(raw.y, [1, -1])


def test_ignored_columns_and_missing_rows(tmp_path, caplog):
    p = write(tmp_path, "id,a,y\n7,1,1\n8,,0\n9,3,0\n")
    raw = load_csv(p, {"label": "y", "positive": "1", "columns": {"id": "ignore", "a": "numeric"}})
    assert raw.X.shape == (2, 1)
    assert "dropping row 3" in caplog.text


def test_parse_error_names_row_and_column(tmp_path):
    p = write(tmp_path, "a,color,y\n1,a,1\nxx,b,0\n")
    with pytest.raises(DataError, match=r"row 3, column 'a'"):
        load_csv(p, SCHEMA)


def test_unknown_category_at_transform_time(tmp_path):
    train = load_csv(write(tmp_path, "a,color,y\n1,a,1\n2,b,0\n"), SCHEMA)
    with pytest.raises(DataError, match="unknown category 'z'"):
        load_csv(write(tmp_path, "a,color,y\n1,z,1\n2,b,0\n", "t.csv"), SCHEMA, categories=train.categories)


def test_schema_errors(tmp_path):
    with pytest.raises(DataError):
        Schema.from_dict({"label": "y", "columns": {}})
    with pytest.raises(DataError):
        Schema.from_dict({"label": "y", "positive": 1, "columns": {"a": "text"}})
    p = write(tmp_path, "a,b,y\n1,2,1\n2,3,0\n")
    with pytest.raises(DataError, match="not described"):
        load_csv(p, {"label": "y", "positive": "1", "columns": {"a": "numeric"}})
    with pytest.raises(DataError, match="cannot read"):
        load_csv(tmp_path / "missing.csv", SCHEMA)


def test_iris_shape():
    raw = load_bundled("iris")
    assert raw.X.shape == (150, 4)
    assert raw.positive_fraction == pytest.approx(1 / 3)
    split = split_standardize(raw, seed=0)
    assert (split.train.n, split.test.n) == (120, 30)


def test_wine_split_size():
    raw = load_bundled("wine")
    assert raw.X.shape[0] == 178
    split = split_standardize(raw, seed=0)
    assert abs(split.train.n - 0.8 * 178) <= 1


def test_small_split_and_determinism():
    rng = np.random.default_rng(0)
    raw = RawDataset(rng.standard_normal((10, 3)), np.array([1.0, -1] * 5), ["a", "b", "c"])
    a, b = split_standardize(raw, 3), split_standardize(raw, 3)
    assert (a.train.n, a.test.n) == (8, 2)
    assert np.array_equal(a.train.X, b.train.X) and np.array_equal(a.test_index, b.test_index)


def test_standardization_uses_training_statistics_only():
    raw = load_bundled("wine")
    split = split_standardize(raw, seed=5)
    Xtr = split.train.X
    assert np.max(np.abs(Xtr.mean(axis=0))) <= 1e-10
    assert np.max(np.abs(Xtr.std(axis=0) - 1)) <= 1e-10
    raw_test = raw.X[split.test_index]
    tr = raw.X[split.train_index]
    assert np.allclose(split.test.X, (raw_test - tr.mean(0)) / tr.std(0))
    assert np.allclose(split.scaler.transform(raw.X[split.train_index]), Xtr)


def test_constant_column_passes_through():
    X = np.column_stack([np.arange(10.0), np.full(10, 4.0)])
    split = split_standardize(RawDataset(X, np.array([1.0, -1] * 5), ["a", "b"]), 0)
    assert np.all(split.train.X[:, 1] == 0.0)


def test_single_class_errors():
    with pytest.raises(DataError):
        split_standardize(RawDataset(np.zeros((4, 1)), np.ones(4), ["a"]), 0)
    y = np.array([1.0] * 19 + [-1.0])
    bad = [s for s in range(50)
           if np.unique(y[np.random.default_rng(s).permutation(20)[:16]]).size < 2]
    assert bad
    with pytest.raises(DataError, match="another seed"):
        split_standardize(RawDataset(np.zeros((20, 1)), y, ["a"]), bad[0])
