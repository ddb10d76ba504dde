import numpy as np
import pytest

from kmace.core import (
    CsvParseError,
    EmptyData,
    LabelLengthMismatch,
    NonFiniteValue,
    RngSpec,
    make_partition,
    read_csv,
    remap_labels,
    validate_dataset,
    write_csv,
)


def test_validate_rejects_bad_input():
    with pytest.raises(EmptyData):
        validate_dataset(np.zeros((0, 2)))
    with pytest.raises(NonFiniteValue):
        validate_dataset([[0.0, np.nan]])
    with pytest.raises(LabelLengthMismatch):
        validate_dataset(np.zeros((3, 2)), [0, 1])


def test_labels_become_contiguous():
    ds = validate_dataset(np.zeros((4, 1)), [7, 3, 7, 10])
    assert ds.labels.tolist() == [1, 0, 1, 2]
    assert ds.true_m == 3
    assert remap_labels(["b", "a", "b"]).tolist() == [1, 0, 1]


def test_dataset_is_read_only():
    ds = validate_dataset(np.ones((3, 2)))
    with pytest.raises(ValueError):
        ds.samples[0, 0] = 5.0


def test_rng_spec_reproducible_and_streams_differ():
    a = RngSpec(3).generator().standard_normal(5)
    b = RngSpec(3).generator().standard_normal(5)
    c = RngSpec(3).child("x").generator().standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        RngSpec(-1)


def test_partition_invariants(gen):
    x = gen.normal(size=(30, 3))
    assign = gen.integers(0, 4, size=30)
    assign[:4] = np.arange(4)
    p = make_partition(x, assign, 4)
    p.check(x)
    assert p.sizes.sum() == 30
    for j in range(4):
        members = x[assign == j]
        assert np.allclose(p.centers[j], members.mean(axis=0), atol=1e-12)
        assert np.isclose(p.compactness_per_cluster[j], ((members - members.mean(0)) ** 2).sum())
    assert np.isclose(p.compactness_total, p.compactness_per_cluster.sum() / 30)


def test_csv_round_trip(tmp_path, gen):
    ds = validate_dataset(gen.normal(size=(12, 3)), gen.integers(0, 3, size=12))
    path = tmp_path / "d.csv"
    write_csv(ds, path)
    back = read_csv(path)
    assert np.array_equal(back.samples, ds.samples)
    assert np.array_equal(back.labels, ds.labels)


def test_csv_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3\n")
    with pytest.raises(CsvParseError, match="line 3"):
        read_csv(path)
    path.write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(CsvParseError, match="line 3"):
        read_csv(path)
    path.write_text("")
    with pytest.raises(EmptyData):
        read_csv(path)
