import random

import numpy as np
import pytest

from orgmarl.cluster import average_linkage, cut_tree, kmeans, pick_k, silhouette


class TestAverageLinkage:
    def test_two_tight_groups(self):
        # Distances: within groups 0.1, across 0.9.
        n = 6
        d = np.full((n, n), 0.9)
        for i in range(n):
            d[i, i] = 0.0
        for group in ((0, 1, 2), (3, 4, 5)):
            for i in group:
                for j in group:
                    if i != j:
                        d[i, j] = 0.1
        merges = average_linkage(d)
        assert len(merges) == n - 1
        labels = cut_tree(merges, n, 0.5)
        assert labels[0] == labels[1] == labels[2]
        assert labels[3] == labels[4] == labels[5]
        assert labels[0] != labels[3]

    def test_threshold_zero_keeps_singletons(self):
        d = np.array([[0.0, 0.4], [0.4, 0.0]])
        merges = average_linkage(d)
        assert cut_tree(merges, 2, 0.1) == [0, 1]
        assert cut_tree(merges, 2, 0.4) == [0, 0]

    def test_average_linkage_height_oracle(self):
        # Three points: heights must follow the unweighted average rule.
        d = np.array(
            [
                [0.0, 0.2, 0.8],
                [0.2, 0.0, 0.6],
                [0.8, 0.6, 0.0],
            ]
        )
        merges = average_linkage(d)
        assert merges[0].left == 0 and merges[0].right == 1
        assert merges[0].height == pytest.approx(0.2)
        # d({0,1}, 2) = (0.8 + 0.6) / 2
        assert merges[1].height == pytest.approx(0.7)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        x = rng.random((12, 12))
        d = (x + x.T) / 2
        np.fill_diagonal(d, 0.0)
        assert average_linkage(d) == average_linkage(d)


class TestKmeans:
    def planted(self, k, per=20, dim=5, spread=0.05, seed=0):
        rng = np.random.default_rng(seed)
        centers = rng.random((k, dim)) * 10
        points = np.concatenate(
            [centers[j] + rng.normal(0, spread, (per, dim)) for j in range(k)]
        )
        truth = np.repeat(np.arange(k), per)
        return points, truth

    def test_recovers_planted_partition(self):
        x, truth = self.planted(3)
        labels, _, _ = kmeans(x, 3, seed=1)
        # Same partition up to relabeling.
        mapping = {}
        for got, want in zip(labels, truth):
            mapping.setdefault(got, want)
            assert mapping[got] == want

    def test_exhaustive_assignment_oracle_k2(self):
        # For k=2 on a tiny set, the optimal partition by exhaustive search
        # over all assignments must match kmeans inertia.
        rng = random.Random(5)
        x = np.array([[rng.random() * 5, rng.random() * 5] for _ in range(8)])
        _, _, inertia = kmeans(x, 2, seed=0)
        best = None
        for mask in range(1, 2**8 - 1):
            groups = [[], []]
            for i in range(8):
                groups[(mask >> i) & 1].append(x[i])
            total = 0.0
            for g in groups:
                g = np.array(g)
                total += ((g - g.mean(axis=0)) ** 2).sum()
            best = total if best is None else min(best, total)
        assert inertia == pytest.approx(best, rel=1e-9)

    def test_silhouette_prefers_true_k(self):
        x, _ = self.planted(3, seed=4)
        assert pick_k(x, range(2, 9), seed=0) == 3

    def test_silhouette_range(self):
        x, truth = self.planted(2, seed=7)
        s = silhouette(x, truth)
        assert 0.8 < s <= 1.0

    def test_degenerate_partition_scores_zero(self):
        x, _ = self.planted(2, seed=8)
        assert silhouette(x, np.zeros(len(x), dtype=int)) == 0.0

    def test_k_bounds(self):
        x, _ = self.planted(2, per=3)
        with pytest.raises(ValueError):
            kmeans(x, 0)
        with pytest.raises(ValueError):
            kmeans(x, 7)

    def test_deterministic_given_seed(self):
        x, _ = self.planted(3, seed=2)
        a = kmeans(x, 3, seed=9)
        b = kmeans(x, 3, seed=9)
        assert (a[0] == b[0]).all()
        assert a[2] == b[2]
