import numpy as np
import pytest

from kmace.core import CovarianceNotPSD, RngSpec, UnknownScenario
from kmace.datagen import (
    OVERLAP_BANDS,
    U_VARIANTS,
    MixtureSpec,
    generate,
    overlap_ratio,
    sample_mixture,
    scenario,
)


@pytest.mark.parametrize("name,n,m", [("s1", 900, 9), ("s2", 500, 5), ("s3", None, None), ("s4", None, 9)])
def test_scenario_shapes(name, n, m):
    ds, spec = generate(name, 7)
    assert ds.d == 2
    if n is not None:
        assert ds.n == n
    if m is not None:
        assert ds.true_m == m
    assert np.bincount(ds.labels).tolist() == [int(c) for c in spec.counts]


def test_reproducible_and_seed_sensitive():
    a, _ = generate("s1", 3)
    b, _ = generate("s1", 3)
    c, _ = generate("s1", 4)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


@pytest.mark.parametrize("variant", sorted(U_VARIANTS))
def test_u_variants(variant):
    ds, spec = generate("u_family", 0, variant)
    assert ds.d == 10 and ds.true_m == 9 and ds.n == 900
    for cov in spec.covariances:
        assert np.linalg.eigvalsh(cov).min() > 0
    same, _ = generate(variant, 0)
    assert np.array_equal(ds.samples, same.samples)


def test_overlap_bands_hold():
    for name in ("s1", "s2", "s3", "s4"):
        spec = scenario(name)
        from kmace.datagen import _fixtures

        band = OVERLAP_BANDS[_fixtures()["scenarios"][name]["overlap"]]
        ratio = overlap_ratio(spec.centers, spec.covariances).min()
        assert band[0] <= ratio <= band[1]


def test_sample_means_match_centres():
    spec = scenario("s1", RngSpec(0))
    big = MixtureSpec(spec.centers, spec.covariances, np.full(9, 4000), spec.rng)
    ds = sample_mixture(big)
    for j, c in enumerate(spec.centers):
        members = ds.samples[ds.labels == j]
        se = np.sqrt(np.diag(spec.covariances[j]) / len(members))
        assert np.all(np.abs(members.mean(0) - c) <= 4 * se)


def test_errors():
    with pytest.raises(UnknownScenario):
        scenario("s9")
    with pytest.raises(UnknownScenario):
        scenario("u_family")
    bad = MixtureSpec(np.zeros((1, 2)), np.array([[[1.0, 0.0], [0.0, -1.0]]]), np.array([3]), RngSpec(0))
    with pytest.raises(CovarianceNotPSD):
        sample_mixture(bad)
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 2)), np.array([np.eye(2)] * 2), np.array([3, 0]), RngSpec(0))
