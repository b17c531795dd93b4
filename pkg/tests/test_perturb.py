import numpy as np
import pytest

from dropdistill.datasets import generate_sbm
from dropdistill.graph import Graph, gcn_normalize
from dropdistill.perturb import (
    EdgeDropMask,
    apply_drop,
    drop_edges,
    surviving_edges,
    zero_mean_perturbation,
)


def star_graph(leaves=2):
    # node 0 is the center
    edges = [e for leaf in range(1, leaves + 1) for e in ((0, leaf), (leaf, 0))]
    n = leaves + 1
    return Graph(features=np.eye(n), labels=np.zeros(n, int), edges=edges, num_classes=2)


class TestDropEdges:
    def test_p_zero_drops_nothing(self):
        g = generate_sbm([10, 10], 0.4, 0.1, d=2, feature_noise=0.1, seed=0)
        assert len(drop_edges(g, 0.0, seed=1)) == 0

    def test_p_one_drops_everything(self):
        g = generate_sbm([10, 10], 0.4, 0.1, d=2, feature_noise=0.1, seed=0)
        mask = drop_edges(g, 1.0, seed=1)
        assert len(mask) == len(g.undirected_edges())

    def test_drop_count_within_binomial_bounds(self):
        g = generate_sbm([60, 60, 60], 0.5, 0.25, d=3, feature_noise=0.1, seed=3)
        m = len(g.undirected_edges())
        assert m > 2000
        p = 0.2
        mask = drop_edges(g, p, seed=7)
        sigma = np.sqrt(m * p * (1 - p))
        assert abs(len(mask) - m * p) < 4 * sigma

    def test_deterministic_per_seed(self):
        g = generate_sbm([20, 20], 0.3, 0.1, d=2, feature_noise=0.1, seed=0)
        assert drop_edges(g, 0.3, seed=5) == drop_edges(g, 0.3, seed=5)
        assert drop_edges(g, 0.3, seed=5) != drop_edges(g, 0.3, seed=6)

    def test_survivors_and_dropped_partition_the_edges(self):
        g = generate_sbm([15, 15], 0.4, 0.2, d=2, feature_noise=0.1, seed=2)
        mask = drop_edges(g, 0.5, seed=11)
        kept = surviving_edges(g, mask)
        kept_und = {(min(u, v), max(u, v)) for u, v in kept}
        all_und = set(map(tuple, g.undirected_edges()))
        assert kept_und | set(mask.dropped) == all_und
        assert kept_und & set(mask.dropped) == set()
        # both directions dropped together
        kept_pairs = set(map(tuple, kept))
        for u, v in kept:
            assert (v, u) in kept_pairs


class TestApplyDrop:
    def test_empty_mask_is_identity(self):
        g = star_graph(3)
        src, dst, w = apply_drop(g, None, "gcn-renormalize")
        src2, dst2, w2 = gcn_normalize(g)
        assert np.array_equal(src, src2) and np.array_equal(dst, dst2)
        assert np.array_equal(w, w2)

    def test_star_graph_renormalization(self):
        # drop one of two leaf edges: center keeps degree 1 (2 incl. self-loop)
        g = star_graph(2)
        mask = EdgeDropMask(dropped=frozenset({(0, 2)}), p_star=0.5, seed=0)
        src, dst, w = apply_drop(g, mask, "gcn-renormalize")
        table = {(int(u), int(v)): x for u, v, x in zip(src, dst, w)}
        assert table[(0, 1)] == pytest.approx(1 / np.sqrt(2 * 2))
        assert table[(0, 0)] == pytest.approx(1 / 2)
        assert table[(1, 1)] == pytest.approx(1 / 2)
        assert table[(2, 2)] == 1.0  # node 2 now isolated
        assert (0, 2) not in table and (2, 0) not in table

    def test_all_edges_dropped_leaves_self_loops(self):
        g = star_graph(2)
        mask = drop_edges(g, 1.0, seed=0)
        src, dst, w = apply_drop(g, mask, "gcn-renormalize")
        assert np.array_equal(src, dst)
        assert np.allclose(w, 1.0)

    def test_renormalized_weights_symmetric_positive(self):
        g = generate_sbm([10, 10], 0.5, 0.2, d=2, feature_noise=0.1, seed=4)
        mask = drop_edges(g, 0.4, seed=1)
        src, dst, w = apply_drop(g, mask, "gcn-renormalize")
        assert np.all(w > 0)
        table = {(int(u), int(v)): x for u, v, x in zip(src, dst, w)}
        for (u, v), x in table.items():
            assert table[(v, u)] == x

    def test_none_mode_returns_raw_survivors(self):
        g = star_graph(2)
        mask = EdgeDropMask(dropped=frozenset({(0, 1)}), p_star=0.5, seed=0)
        src, dst, w = apply_drop(g, mask, "none")
        assert sorted(zip(src, dst)) == [(0, 2), (2, 0)]
        assert np.all(w == 1.0)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="unknown renorm mode"):
            apply_drop(star_graph(), None, "mean")

    def test_foreign_mask_rejected(self):
        g = star_graph(2)
        mask = EdgeDropMask(dropped=frozenset({(5, 6)}), p_star=0.5, seed=0)
        with pytest.raises(ValueError, match="not in the graph"):
            apply_drop(g, mask, "gcn-renormalize")


class TestZeroMeanPerturbation:
    def test_branch_values(self):
        w = np.array([0.5])
        p = 0.25
        deltas = zero_mean_perturbation(w, p, seed=0, size=4000)
        vals = sorted(np.unique(np.round(deltas, 12)))
        assert len(vals) == 2
        assert vals[0] == pytest.approx(-0.5)               # b = 0 branch: -w
        assert vals[1] == pytest.approx(0.5 * p / (1 - p))  # b = 1 branch: w*p/(1-p)

    def test_empirical_mean_is_zero(self):
        rng = np.random.default_rng(0)
        w = rng.uniform(0.2, 1.0, 8)
        p = 0.2
        n = 100_000
        deltas = zero_mean_perturbation(w, p, seed=3, size=n)
        sigma = np.sqrt((w ** 2 * p / (1 - p)).mean())
        assert abs(deltas.mean()) < 4 * sigma / np.sqrt(n * len(w))

    def test_small_p_limit(self):
        w = np.ones(5)
        deltas = zero_mean_perturbation(w, 1e-9, seed=1, size=1000)
        assert np.abs(deltas).max() < 1e-6

    def test_p_out_of_range_rejected(self):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                zero_mean_perturbation(np.ones(3), bad, seed=0)
