import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kmace.core import DegenerateClusterNumber, EmptyRuns, LengthMismatch
from kmace.metrics import MethodSummary, ari, baseline_indices, cnc_accuracy, nvi, summarise, write_table

labelings = st.lists(st.integers(0, 4), min_size=2, max_size=40)


def pair_count_ari(a, b):
    """Adjusted Rand index by enumerating every pair of samples."""
    n = len(a)
    both = same_a = same_b = 0
    for i, j in itertools.combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        both += sa and sb
        same_a += sa
        same_b += sb
    total = n * (n - 1) / 2
    expected = same_a * same_b / total
    best = (same_a + same_b) / 2
    if best == expected:
        return 1.0 if both == expected else 0.0
    return (both - expected) / (best - expected)


def test_ari_examples():
    assert ari([0, 0, 1, 1], [5, 5, 2, 2]) == 1.0
    assert ari([0, 1, 2, 3], [0, 0, 0, 0]) == 0.0
    with pytest.raises(LengthMismatch):
        ari([0, 1], [0])


def test_ari_pair_oracle():
    gen = np.random.default_rng(0)
    for _ in range(20):
        a = gen.integers(0, 4, size=50)
        b = gen.integers(0, 3, size=50)
        assert ari(a, b) == pytest.approx(pair_count_ari(a, b), abs=1e-12)


@given(st.integers(2, 50).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 3), min_size=n, max_size=n), st.lists(st.integers(0, 3), min_size=n, max_size=n))))
def test_ari_pair_oracle_property(pair):
    a, b = pair
    assert ari(a, b) == pytest.approx(pair_count_ari(a, b), abs=1e-12)


@given(labelings, st.randoms(use_true_random=False))
def test_permutation_invariance(a, rnd):
    a = np.array(a)
    b = np.roll(a, 1)
    perm = list(range(5))
    rnd.shuffle(perm)
    pa = np.array(perm)[a]
    assert ari(a, b) == ari(pa, b) == ari(b, pa)
    assert nvi(a, b) == pytest.approx(nvi(pa, b), abs=1e-15)
    assert ari(a, a) == 1.0
    assert nvi(a, a) == 0.0


@given(labelings)
def test_nvi_range(a):
    b = np.roll(a, 3)
    v = nvi(a, b)
    assert 0.0 <= v <= 1.0


def test_nvi_independent_partitions():
    i = np.arange(4000)
    assert nvi(i % 4, (i // 4) % 4) == pytest.approx(1.0)
    gen = np.random.default_rng(1)
    assert nvi(gen.integers(0, 5, 200_000), gen.integers(0, 5, 200_000)) > 0.99


def test_cnc_accuracy_examples():
    assert cnc_accuracy([9, 9, 9], 9) == (9.0, 0.0, 100.0)
    mean, std, acc = cnc_accuracy([8, 9, 9, 10], 9)
    assert mean == 9.0 and std == pytest.approx(np.sqrt(2 / 3)) and acc == 50.0
    assert cnc_accuracy([4], 3) == (4.0, 0.0, 0.0)
    with pytest.raises(EmptyRuns):
        cnc_accuracy([], 3)


def square(offset):
    return np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float) + offset


def test_davies_bouldin_penalises_split():
    x = np.vstack([square([0, 0]), square([10, 0])])
    two = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    # halve the first square into its left and right columns
    three = np.array([0, 1, 0, 1, 2, 2, 2, 2])
    idx = baseline_indices(x, {2: two, 3: three})
    assert idx.db[0] == pytest.approx(2 * np.sqrt(0.5) / 10)
    r_split = 1.0
    r_far = (0.5 + np.sqrt(0.5)) / 9.5
    assert idx.db[1] == pytest.approx((2 * r_split + r_far) / 3)
    assert idx.best_db == 2


def test_silhouette_near_one_when_separated():
    gen = np.random.default_rng(2)
    centers = np.array([[0, 0], [100, 0], [0, 100]])
    x = np.vstack([c + 0.1 * gen.standard_normal((20, 2)) for c in centers])
    labels = np.repeat(np.arange(3), 20)
    wrong = labels.copy()
    wrong[labels == 2] = 1
    idx = baseline_indices(x, {2: wrong, 3: labels})
    assert idx.sil[1] > 0.99 and idx.best_sil == 3 and idx.best_ch == 3


def test_baseline_translation_invariance():
    gen = np.random.default_rng(3)
    x = gen.normal(size=(40, 2))
    parts = {m: gen.integers(0, m, size=40) for m in (2, 3, 4)}
    a = baseline_indices(x, parts)
    b = baseline_indices(x + [50.0, -20.0], parts)
    assert np.allclose(a.ch, b.ch) and np.allclose(a.db, b.db) and np.allclose(a.sil, b.sil)


def test_baseline_needs_two_clusters():
    with pytest.raises(DegenerateClusterNumber):
        baseline_indices(np.zeros((4, 1)), {1: np.zeros(4, dtype=int)})


def test_table_csv(tmp_path):
    row = summarise("kmace", [9, 9, 8], 9, [1.0, 1.0, 0.9], [0.0, 0.0, 0.1])
    assert isinstance(row, MethodSummary)
    path = tmp_path / "t.csv"
    write_table([row], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "method,m_hat_mean,m_hat_std,accuracy,ari,nvi"
    assert lines[1].startswith("kmace,")
