from pathlib import Path

import numpy as np
import pytest

from dropdistill.datasets import generate_prop1_graph, generate_sbm, load_planetoid

CITESEER_DIR = Path(__file__).resolve().parent.parent / "data" / "citeseer"


def write_planetoid(tmp_path, content_rows, cites_rows):
    content = tmp_path / "toy.content"
    cites = tmp_path / "toy.cites"
    content.write_text("\n".join(content_rows) + "\n")
    cites.write_text("\n".join(cites_rows) + "\n" if cites_rows else "")
    return content, cites


class TestPlanetoid:
    def test_two_node_toy(self, tmp_path):
        content, cites = write_planetoid(
            tmp_path,
            ["a\t1\t0\tml", "b\t0\t1\tdb"],
            ["a\tb"],
        )
        result = load_planetoid(content, cites)
        g = result.graph
        assert (g.n, g.d, g.num_classes) == (2, 2, 2)
        # one citation stored as both directions
        assert g.edges.tolist() == [[0, 1], [1, 0]]
        assert result.skipped_citations == 0
        # labels indexed by sorted name: db=0, ml=1
        assert g.labels.tolist() == [1, 0]

    def test_dangling_citation_skipped_with_count(self, tmp_path):
        content, cites = write_planetoid(
            tmp_path,
            ["a\t1\t0\tml", "b\t0\t1\tdb"],
            ["a\tb", "a\tmissing"],
        )
        result = load_planetoid(content, cites)
        assert result.skipped_citations == 1
        assert len(result.graph.edges) == 2

    def test_duplicate_node_id_rejected(self, tmp_path):
        content, cites = write_planetoid(
            tmp_path, ["a\t1\t0\tml", "a\t0\t1\tdb"], [])
        with pytest.raises(ValueError, match="duplicate"):
            load_planetoid(content, cites)

    def test_malformed_rows_rejected(self, tmp_path):
        content, cites = write_planetoid(tmp_path, ["a\tml"], [])
        with pytest.raises(ValueError, match="expected id"):
            load_planetoid(content, cites)
        content, cites = write_planetoid(tmp_path, ["a\tx\tml"], [])
        with pytest.raises(ValueError, match="non-numeric"):
            load_planetoid(content, cites)

    @pytest.mark.skipif(not CITESEER_DIR.exists(), reason="Citeseer files not present")
    def test_citeseer_statistics(self):
        result = load_planetoid(CITESEER_DIR / "citeseer.content",
                                CITESEER_DIR / "citeseer.cites")
        g = result.graph
        assert g.n == 3327
        assert g.d == 3703
        assert g.num_classes == 6


class TestSbm:
    def test_degenerate_probabilities_give_two_cliques(self):
        g = generate_sbm([3, 3], p_in=1.0, p_out=0.0, d=2, feature_noise=0.0, seed=0)
        und = set(map(tuple, g.undirected_edges()))
        assert und == {(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)}

    def test_edge_count_within_binomial_bounds(self):
        # p_in == p_out: every pair independently with probability p
        n, p = 80, 0.3
        g = generate_sbm([40, 40], p_in=p, p_out=p, d=2, feature_noise=0.1, seed=123)
        pairs = n * (n - 1) / 2
        mean = pairs * p
        sigma = np.sqrt(pairs * p * (1 - p))
        count = len(g.undirected_edges())
        assert abs(count - mean) < 4 * sigma

    def test_deterministic_per_seed(self):
        a = generate_sbm([5, 5], 0.5, 0.1, d=3, feature_noise=0.3, seed=9)
        b = generate_sbm([5, 5], 0.5, 0.1, d=3, feature_noise=0.3, seed=9)
        assert np.array_equal(a.edges, b.edges)
        assert np.array_equal(a.features, b.features)

    def test_empty_block_rejected(self):
        with pytest.raises(ValueError, match="empty block"):
            generate_sbm([3, 0], 0.5, 0.1, d=2, feature_noise=0.1, seed=0)

    def test_labels_are_blocks(self):
        g = generate_sbm([2, 3], 0.5, 0.5, d=4, feature_noise=0.0, seed=1)
        assert g.labels.tolist() == [0, 0, 1, 1, 1]
        # noiseless features are exactly the one-hot block signal
        assert np.array_equal(g.features[:, :2], np.eye(2)[g.labels])


class TestMultilabelSbm:
    def test_every_node_keeps_its_block_label(self):
        from dropdistill.datasets import generate_multilabel_sbm

        g = generate_multilabel_sbm([8, 8, 8], 0.5, 0.1, d=5, feature_noise=0.3,
                                    overlap=0.4, seed=2)
        assert g.is_multilabel
        base = np.repeat(np.arange(3), 8)
        assert np.all(g.labels[np.arange(g.n), base] == 1)
        counts = g.labels.sum(axis=1)
        assert counts.min() >= 1 and counts.max() <= 2
        assert counts.max() == 2  # overlap actually fires at 0.4

    def test_deterministic(self):
        from dropdistill.datasets import generate_multilabel_sbm

        a = generate_multilabel_sbm([5, 5], 0.5, 0.1, d=4, feature_noise=0.2,
                                    overlap=0.3, seed=7)
        b = generate_multilabel_sbm([5, 5], 0.5, 0.1, d=4, feature_noise=0.2,
                                    overlap=0.3, seed=7)
        assert np.array_equal(a.labels, b.labels)


class TestProp1Construction:
    def test_outputs_identical_so_churn_is_zero(self):
        cons = generate_prop1_graph(6, 0.9, 0.1)
        f = cons.model_f.logits(cons.graph).values
        g = cons.model_g.logits(cons.graph).values
        assert np.array_equal(f[cons.roots], g[cons.roots])

    def test_influence_distributions_are_p_eps(self):
        from dropdistill.influence import influence_distributions

        cons = generate_prop1_graph(4, 0.9, 0.1)
        dists = influence_distributions(cons.model_f, cons.graph, cons.roots)
        for root in cons.roots:
            # weights normalized by p + eps = 1
            assert np.allclose(sorted(dists[int(root)].mass), [0.1, 0.9])

    def test_p_equal_eps_rejected(self):
        with pytest.raises(ValueError):
            generate_prop1_graph(4, 0.5, 0.5)

    def test_each_root_has_two_neighbors_with_twin_features(self):
        cons = generate_prop1_graph(5, 0.8, 0.2)
        g = cons.graph
        for r in cons.roots:
            nbrs = g.neighbors(int(r))
            assert len(nbrs) == 2
            assert np.array_equal(g.features[nbrs[0]], g.features[nbrs[1]])
