import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oomcraft.data import TrajectoryDataset
from oomcraft.errors import DimensionError, InputError
from oomcraft.features import DiscreteIndicatorMap, GaussianRandomMap, make_gaussian_map
from oomcraft.statistics import accumulate, extract_windows


def _discrete(*trajs, k=None):
    meta = {"alphabet_size": k} if k else {}
    return TrajectoryDataset.from_discrete([np.array(t) for t in trajs], metadata=meta)


def test_window_counts():
    assert len(list(extract_windows(_discrete(np.zeros(7, int)), 3))) == 1
    assert len(list(extract_windows(_discrete(np.zeros(10, int), np.ones(10, int)), 3))) == 8


def test_window_triples_by_hand():
    triples = list(extract_windows(_discrete([0, 1, 0, 1, 0]), 1))
    got = [(t.prefix[0], t.mid, t.suffix[0]) for t in triples]
    assert got == [(0, 1, 0), (1, 0, 1), (0, 1, 0)]
    assert [t.offset for t in triples] == [1, 2, 3]


def test_short_trajectories_are_skipped():
    skipped = []
    triples = list(extract_windows(_discrete([0, 1], [0, 1, 0, 1]), 1, skipped))
    assert skipped == [0]
    assert all(t.trajectory == 1 for t in triples)
    stats = accumulate(_discrete([0, 1], [0, 1, 0, 1]), DiscreteIndicatorMap(2, 1),
                       DiscreteIndicatorMap(2, 1))
    assert stats.n_skipped == 1 and stats.n == 2


def test_single_window_by_hand():
    phi = DiscreteIndicatorMap(2, 1)
    stats = accumulate(_discrete([0, 0, 1]), phi, phi)
    assert stats.n == 1
    np.testing.assert_array_equal(stats.c13[0], [[0, 1], [0, 0]])
    np.testing.assert_array_equal(stats.c13[1], np.zeros((2, 2)))
    # phi2_bar pairs with the midblock x[1] = 0, not the suffix x[2] = 1
    np.testing.assert_array_equal(stats.phi2_bar, [1, 0])
    np.testing.assert_array_equal(stats.c12, [[1, 0], [0, 0]])


def test_constant_features():
    phi = GaussianRandomMap(np.zeros((1, 2)), np.array([1e-300]), 2, 1)
    data = TrajectoryDataset.from_continuous([np.linspace(0, 1, 9)])
    stats = accumulate(data, phi, phi, mode="binless")
    np.testing.assert_allclose(stats.phi1_bar, [1.0])
    np.testing.assert_allclose(stats.c12, [[1.0]])


@pytest.mark.slow
def test_iid_uniform_c12(rng):
    x = rng.integers(0, 2, size=100_002)
    phi = DiscreteIndicatorMap(2, 1)
    stats = accumulate(_discrete(x), phi, phi)
    np.testing.assert_allclose(stats.c12, np.full((2, 2), 0.25), atol=0.01)


def test_dense_path_matches_counting_path(rng):
    data = _discrete(*rng.integers(0, 3, size=(4, 40)), k=3)
    phi = DiscreteIndicatorMap(3, 2)

    class Dense:
        window_len = 2
        dimension = phi.dimension

        def evaluate_many(self, w):
            return phi.evaluate_many(w)

    fast = accumulate(data, phi, phi)
    slow = accumulate(data, Dense(), Dense())
    for name in ("phi1_bar", "phi2_bar", "c12", "c13"):
        np.testing.assert_allclose(getattr(slow, name), getattr(fast, name), atol=1e-15)


def test_binless_cache_contents(rng):
    traj = rng.normal(size=(12, 2))
    data = TrajectoryDataset.from_continuous([traj])
    phi = make_gaussian_map(rng.normal(size=(20, 2, 2)), 5, seed=0)
    stats = accumulate(data, phi, phi, mode="binless")
    cache = stats.cache
    assert len(cache) == 12 - 4
    np.testing.assert_array_equal(cache.points, traj[2:10])
    np.testing.assert_allclose(cache.phi1_prefix[0], phi.evaluate(traj[0:2]))
    np.testing.assert_allclose(cache.phi2_suffix[0], phi.evaluate(traj[3:5]))
    np.testing.assert_array_equal(cache.offset, np.arange(2, 10))
    assert stats.c13 is None


def test_accumulate_errors():
    phi1, phi2 = DiscreteIndicatorMap(2, 1), DiscreteIndicatorMap(2, 2)
    with pytest.raises(DimensionError):
        accumulate(_discrete([0, 1, 0, 1, 0]), phi1, phi2)
    with pytest.raises(InputError):
        accumulate(_discrete([0, 1]), phi1, phi1)
    cont = TrajectoryDataset.from_continuous([np.zeros(10)])
    with pytest.raises(InputError):
        accumulate(cont, phi1, phi1, mode="discrete")


def test_merge_equals_joint_accumulation(rng):
    a = _discrete(*rng.integers(0, 2, size=(3, 30)), k=2)
    b = _discrete(*rng.integers(0, 2, size=(2, 50)), k=2)
    phi = DiscreteIndicatorMap(2, 2)
    joint = accumulate(_discrete(*a.trajectories, *b.trajectories, k=2), phi, phi)
    merged = accumulate(a, phi, phi).merge(accumulate(b, phi, phi))
    assert merged.n == joint.n
    for name in ("phi1_bar", "phi2_bar", "c12", "c13"):
        np.testing.assert_allclose(getattr(merged, name), getattr(joint, name), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(0, 2), min_size=5, max_size=25), min_size=1, max_size=5),
       st.integers(1, 2))
def test_indicator_invariants(trajs, L):
    data = _discrete(*trajs, k=3)
    if all(len(t) < 2 * L + 1 for t in trajs):
        return
    phi = DiscreteIndicatorMap(3, L)
    stats = accumulate(data, phi, phi)
    counts = stats.c12 * stats.n
    np.testing.assert_allclose(counts, np.round(counts), atol=1e-9)
    assert round(counts.sum()) == stats.n and counts.min() >= 0
    cache_free = stats.c13.sum(axis=0)
    direct = np.zeros_like(cache_free)
    for t in extract_windows(data, L):
        direct += np.outer(phi.evaluate(t.prefix), phi.evaluate(t.suffix))
    np.testing.assert_allclose(cache_free, direct / stats.n, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(5)))
def test_accumulation_is_order_independent(perm):
    rng = np.random.default_rng(4)
    trajs = [rng.normal(size=(int(n), 1)) for n in rng.integers(10, 60, size=5)]
    phi = make_gaussian_map(rng.normal(size=(30, 2)), 8, seed=1)
    base = accumulate(TrajectoryDataset.from_continuous(trajs), phi, phi, mode="binless")
    other = accumulate(TrajectoryDataset.from_continuous([trajs[i] for i in perm]), phi, phi,
                       mode="binless")
    np.testing.assert_allclose(other.c12, base.c12, atol=1e-12, rtol=0)
    np.testing.assert_allclose(other.phi1_bar, base.phi1_bar, atol=1e-12, rtol=0)
