import random

import numpy as np
import pytest

from monomine.clustering import (
    ClusterMap,
    add_singletons,
    agglomerative_cluster,
    fnr_distance_matrix,
    resplit,
)
from monomine.errors import InvalidCut
from monomine.langid import ConfusionMatrix


def naive_average_linkage(dist, n_clusters):
    """Oracle: O(n^3) agglomeration recomputing all pairwise averages each
    step from the raw matrix. Clusters keyed by smallest original index;
    merges pick the lexicographically smallest (avg, i, j)."""
    clusters = {i: [i] for i in range(dist.shape[0])}
    while len(clusters) > n_clusters:
        best = None
        keys = sorted(clusters)
        for a_pos, i in enumerate(keys):
            for j in keys[a_pos + 1 :]:
                total = 0.0
                for p in clusters[i]:
                    for q in clusters[j]:
                        total += dist[p][q]
                avg = total / (len(clusters[i]) * len(clusters[j]))
                if best is None or (avg, i, j) < best:
                    best = (avg, i, j)
        _, i, j = best
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]
    return {frozenset(m) for m in clusters.values()}


def naive_dendrogram_resplit(indices, dist, max_size):
    """Oracle: cut each oversized subtree at its top merge, repeatedly."""
    if len(indices) <= max_size:
        return [sorted(indices)]
    sub = dist[np.ix_(sorted(indices), sorted(indices))]
    local = sorted(indices)
    parts = naive_average_linkage(sub, 2)
    out = []
    for part in parts:
        out.extend(naive_dendrogram_resplit([local[i] for i in part], dist, max_size))
    return out


def random_distance_matrix(rng, n):
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = rng.random()
    return dist


def partition_of(cluster_map, labels):
    index = {lang: i for i, lang in enumerate(labels)}
    return {frozenset(index[lang] for lang in group) for group in cluster_map.members.values()}


class TestFnrDistance:
    def test_never_confused(self):
        cm = ConfusionMatrix(("a", "b"), np.array([[10, 0], [0, 10]]))
        dist = fnr_distance_matrix(cm)
        assert dist[0, 1] == 1.0

    def test_max_rule(self):
        # a misread as b 60% of the time, b misread as a 20%
        cm = ConfusionMatrix(("a", "b"), np.array([[4, 6], [2, 8]]))
        dist = fnr_distance_matrix(cm)
        assert dist[0, 1] == pytest.approx(0.4)
        assert dist[1, 0] == pytest.approx(0.4)

    def test_zero_diagonal(self):
        rng = np.random.default_rng(0)
        cm = ConfusionMatrix(("a", "b", "c"), rng.integers(0, 9, (3, 3)))
        assert np.all(np.diagonal(fnr_distance_matrix(cm)) == 0)

    def test_range(self):
        rng = np.random.default_rng(1)
        cm = ConfusionMatrix(("a", "b", "c"), rng.integers(0, 9, (3, 3)))
        dist = fnr_distance_matrix(cm)
        assert np.all((dist >= 0) & (dist <= 1))


class TestAgglomerative:
    def test_nearest_pair_merges_first(self):
        dist = np.full((3, 3), 0.9)
        np.fill_diagonal(dist, 0.0)
        dist[0, 1] = dist[1, 0] = 0.1
        cmap = agglomerative_cluster(dist, ["p1", "p2", "p3"], n_clusters=2)
        assert partition_of(cmap, ["p1", "p2", "p3"]) == {frozenset({0, 1}), frozenset({2})}

    def test_n_clusters_equals_n(self):
        dist = random_distance_matrix(random.Random(2), 5)
        cmap = agglomerative_cluster(dist, list("abcde"), n_clusters=5)
        assert all(len(m) == 1 for m in cmap.members.values())

    def test_matches_naive_oracle_100_trials(self):
        rng = random.Random(42)
        for trial in range(100):
            n = 6
            dist = random_distance_matrix(rng, n)
            k = rng.randint(1, n)
            labels = [f"l{i}" for i in range(n)]
            cmap = agglomerative_cluster(dist, labels, n_clusters=k)
            assert partition_of(cmap, labels) == naive_average_linkage(dist, k), f"trial {trial}"

    def test_matches_scipy_linkage(self):
        # third, fully independent implementation; continuous random matrices
        # make tie-break differences a measure-zero event
        from scipy.cluster.hierarchy import fcluster, linkage
        from scipy.spatial.distance import squareform

        rng = random.Random(77)
        for trial in range(30):
            n = rng.randint(3, 8)
            dist = random_distance_matrix(rng, n)
            k = rng.randint(1, n)
            z = linkage(squareform(dist, checks=False), method="average")
            flat = fcluster(z, t=k, criterion="maxclust")
            groups: dict[int, set] = {}
            for i, label in enumerate(flat):
                groups.setdefault(label, set()).add(i)
            if len(groups) != k:
                continue  # scipy hit a tie; skip the comparison
            labels = [f"l{i}" for i in range(n)]
            cmap = agglomerative_cluster(dist, labels, n_clusters=k)
            expected = {frozenset(g) for g in groups.values()}
            assert partition_of(cmap, labels) == expected, f"trial {trial}"

    def test_distance_threshold_cut(self):
        dist = np.array(
            [
                [0.0, 0.1, 0.9, 0.9],
                [0.1, 0.0, 0.9, 0.9],
                [0.9, 0.9, 0.0, 0.2],
                [0.9, 0.9, 0.2, 0.0],
            ]
        )
        cmap = agglomerative_cluster(dist, list("abcd"), distance_threshold=0.5)
        assert partition_of(cmap, list("abcd")) == {frozenset({0, 1}), frozenset({2, 3})}
        # threshold below every distance: nothing merges
        cmap2 = agglomerative_cluster(dist, list("abcd"), distance_threshold=0.05)
        assert len(cmap2.members) == 4

    def test_deterministic_with_ties(self):
        dist = np.full((4, 4), 0.5)
        np.fill_diagonal(dist, 0.0)
        labels = list("abcd")
        first = agglomerative_cluster(dist, labels, n_clusters=2)
        for _ in range(5):
            assert agglomerative_cluster(dist, labels, n_clusters=2).members == first.members

    def test_monotonicity_smoke(self):
        # pulling a and b closer never separates them at the same cut level
        labels = list("abc")
        for d_ab in (0.8, 0.5, 0.2, 0.05):
            dist = np.array([[0.0, d_ab, 0.9], [d_ab, 0.0, 0.85], [0.9, 0.85, 0.0]])
            cmap = agglomerative_cluster(dist, labels, n_clusters=2)
            assert cmap.cluster_of("a") == cmap.cluster_of("b")

    def test_invalid_cuts(self):
        dist = random_distance_matrix(random.Random(3), 4)
        with pytest.raises(InvalidCut):
            agglomerative_cluster(dist, list("abcd"), n_clusters=0)
        with pytest.raises(InvalidCut):
            agglomerative_cluster(dist, list("abcd"), n_clusters=5)
        with pytest.raises(InvalidCut):
            agglomerative_cluster(dist, list("abcd"))
        with pytest.raises(InvalidCut):
            agglomerative_cluster(dist, list("abcd"), n_clusters=2, distance_threshold=0.5)

    def test_partition_property(self):
        rng = random.Random(4)
        for _ in range(20):
            n = rng.randint(2, 8)
            labels = [f"x{i}" for i in range(n)]
            dist = random_distance_matrix(rng, n)
            cmap = agglomerative_cluster(dist, labels, n_clusters=rng.randint(1, n))
            assert sorted(lang for m in cmap.members.values() for lang in m) == sorted(labels)
            assert set(cmap.assignment) == set(labels)


class TestResplit:
    def test_small_clusters_unchanged(self):
        dist = random_distance_matrix(random.Random(5), 6)
        labels = [f"x{i}" for i in range(6)]
        cmap = agglomerative_cluster(dist, labels, n_clusters=2)
        assert resplit(cmap, dist, labels, max_size=20).members == cmap.members

    def test_oversized_cluster_is_split(self):
        rng = random.Random(6)
        n = 25
        labels = [f"x{i:02d}" for i in range(n)]
        dist = random_distance_matrix(rng, n)
        cmap = ClusterMap.from_groups([labels])
        split = resplit(cmap, dist, labels, max_size=20)
        assert len(split.members) >= 2
        assert all(len(m) <= 20 for m in split.members.values())
        assert sorted(lang for m in split.members.values() for lang in m) == sorted(labels)

    def test_never_merges(self):
        rng = random.Random(7)
        n = 12
        labels = [f"x{i:02d}" for i in range(n)]
        dist = random_distance_matrix(rng, n)
        cmap = agglomerative_cluster(dist, labels, n_clusters=3)
        split = resplit(cmap, dist, labels, max_size=3)
        originals = [set(m) for m in cmap.members.values()]
        for group in split.members.values():
            assert any(set(group) <= orig for orig in originals)

    def test_chain_matches_dendrogram_cut_oracle(self):
        # 40 languages on a chain: neighbours close, far pairs distant
        n = 40
        labels = [f"x{i:02d}" for i in range(n)]
        dist = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j:
                    dist[i, j] = min(1.0, 0.05 * abs(i - j))
        cmap = ClusterMap.from_groups([labels])
        split = resplit(cmap, dist, labels, max_size=20)
        expected = {
            frozenset(part) for part in naive_dendrogram_resplit(list(range(n)), dist, 20)
        }
        assert partition_of(split, labels) == expected
        assert all(len(m) <= 20 for m in split.members.values())


class TestSingletons:
    def test_add_new_language(self):
        cmap = ClusterMap.from_groups([["aa", "bb"]])
        out = add_singletons(cmap, {"en"})
        assert len(out.members[out.cluster_of("en")]) == 1
        assert "en" in out.singletons

    def test_idempotent(self):
        cmap = add_singletons(ClusterMap.from_groups([["aa"]]), {"en"})
        again = add_singletons(cmap, {"en"})
        assert again.members == cmap.members
        assert again.singletons == cmap.singletons

    def test_removes_from_old_cluster(self):
        cmap = ClusterMap.from_groups([["aa", "bb", "cc", "dd", "en"]])
        out = add_singletons(cmap, {"en", "fr"})
        old = out.members[out.cluster_of("aa")]
        assert len(old) == 4 and "en" not in old
        assert len(out.members[out.cluster_of("en")]) == 1
        assert len(out.members[out.cluster_of("fr")]) == 1


class TestClusterMapIO:
    def test_json_roundtrip(self, tmp_path):
        cmap = add_singletons(ClusterMap.from_groups([["aa", "bb"], ["cc"]]), {"en"})
        path = tmp_path / "clusters.json"
        cmap.save_json(path)
        back = ClusterMap.load_json(path)
        assert back.members == cmap.members

    def test_json_is_flat_mapping(self, tmp_path):
        import json

        cmap = ClusterMap.from_groups([["aa", "bb"], ["cc"]])
        path = tmp_path / "clusters.json"
        cmap.save_json(path)
        assert json.loads(path.read_text()) == {"aa": 0, "bb": 0, "cc": 1}

    def test_tsv_export(self, tmp_path):
        cmap = ClusterMap.from_groups([["bb", "aa"], ["cc"]])
        path = tmp_path / "clusters.tsv"
        cmap.save_tsv(path)
        lines = path.read_text().splitlines()
        assert lines == ["aa\t0", "bb\t0", "cc\t1"]

    def test_partition_enforced(self):
        with pytest.raises(ValueError):
            ClusterMap.from_groups([["aa"], ["aa", "bb"]])

    def test_canonical_ids(self):
        a = ClusterMap.from_groups([["zz"], ["aa", "mm"]])
        b = ClusterMap.from_groups([["mm", "aa"], ["zz"]])
        assert a.members == b.members
