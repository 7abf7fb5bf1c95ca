"""SVCCA tests: truncation, CCA against a QR oracle, aggregate scoring."""

import numpy as np
import pytest

from transferlab import rng
from transferlab.errors import ContractError, NumericError
from transferlab.model import ModelConfig, init_model
from transferlab.netsim import (
    AGGREGATE_LAYERS,
    capture_activations,
    cca,
    svcca_score,
    svd_truncate,
    write_svcca,
)

SMALL = ModelConfig(conv_filters=8, dense1=32, dense2=16, seed=0)


def random_matrix(seed, n, d, label="netsim-test"):
    stream = rng.RngStream(seed, label)
    return np.array(stream.normals(n * d)).reshape(n, d)


def random_probe(seed, n):
    stream = rng.RngStream(seed, "probe")
    return np.array(stream.normals(n * 4 * 7)).reshape(n, 4, 7)


def random_orthogonal(seed, d):
    from transferlab.linalg import svd
    return svd(random_matrix(seed, d, d, "ortho")).u


def qr_cca_oracle(a, b):
    """CCA correlations via an independent route: QR then SVD."""
    qa, _ = np.linalg.qr(a - a.mean(axis=0))
    qb, _ = np.linalg.qr(b - b.mean(axis=0))
    return np.linalg.svd(qa.T @ qb, compute_uv=False)


class TestCapture:
    def test_layer_order_and_shapes(self):
        model = init_model(SMALL)
        x = random_probe(1, 5)
        cap = capture_activations(model, x)
        labels = cap.labels()
        assert labels[:3] == ["conv1:sales", "conv2:sales", "pool:sales"]
        assert labels[-4:] == ["concat", "dense1", "dense2", "output"]
        assert cap.get("pool:sales").shape == (5, 8 * SMALL.pooled_len)
        assert cap.get("concat").shape == (5, SMALL.concat_width)
        assert cap.get("dense1").shape == (5, 32)
        assert cap.get("output").shape == (5, 7)

    def test_single_probe_row(self):
        model = init_model(SMALL)
        cap = capture_activations(model, random_probe(2, 1))
        assert all(acts.shape[0] == 1 for _, acts in cap.layer_activations)

    def test_dense1_width_default_config(self):
        model = init_model(ModelConfig(seed=1))
        cap = capture_activations(model, random_probe(3, 2))
        assert cap.get("dense1").shape[1] == 200

    def test_zero_parameter_model_all_zero(self):
        model = init_model(SMALL)
        for key in model.params:
            model.params[key][...] = 0.0
        cap = capture_activations(model, random_probe(4, 3))
        for _, acts in cap.layer_activations:
            assert np.all(acts == 0.0)


class TestSvdTruncate:
    def test_rank_one_keeps_one(self):
        u = random_matrix(10, 30, 1)
        v = random_matrix(11, 1, 6)
        out = svd_truncate(u @ v)
        assert out.shape == (30, 1)

    def test_isotropic_keeps_all(self):
        x = random_matrix(12, 100, 10)
        assert svd_truncate(x).shape == (100, 10)

    def test_dead_neuron_column_ignored(self):
        x = random_matrix(13, 40, 5)
        k = svd_truncate(x).shape[1]
        with_dead = np.hstack([x, np.full((40, 1), 3.7)])
        assert svd_truncate(with_dead).shape[1] == k

    def test_all_zero_gives_empty_subspace(self):
        out = svd_truncate(np.zeros((8, 4)))
        assert out.shape == (8, 0)

    def test_preserves_pairwise_geometry(self):
        # the kept projections reproduce the centered data's Gram structure
        x = random_matrix(14, 25, 4)
        out = svd_truncate(x, threshold=1.0)
        centered = x - x.mean(axis=0)
        assert np.allclose(out @ out.T, centered @ centered.T, atol=1e-8)

    def test_too_few_rows_rejected(self):
        with pytest.raises(ContractError):
            svd_truncate(np.ones((1, 3)))


class TestCca:
    def test_self_correlations_one(self):
        a = random_matrix(20, 60, 4)
        corr = cca(a, a)
        assert corr.shape == (4,)
        assert np.all(np.abs(corr - 1.0) < 1e-8)

    def test_matches_qr_oracle(self):
        for seed in range(5):
            a = random_matrix(30 + seed, 200, 5)
            b = 0.5 * a[:, :4] + random_matrix(40 + seed, 200, 4)
            ours = cca(a, b)
            oracle = qr_cca_oracle(a, b)
            assert np.allclose(ours, oracle, atol=1e-8)

    def test_orthogonal_invariance_through_truncation(self):
        a = random_matrix(50, 80, 6)
        b = random_matrix(51, 80, 6)
        q = random_orthogonal(52, 6)
        base = cca(svd_truncate(a), svd_truncate(b))
        rotated = cca(svd_truncate(a @ q), svd_truncate(b))
        assert np.allclose(np.sort(base), np.sort(rotated), atol=1e-8)

    def test_descending_and_clipped(self):
        a = random_matrix(60, 100, 5)
        b = random_matrix(61, 100, 3)
        corr = cca(a, b)
        assert corr.shape == (3,)
        assert np.all(np.diff(corr) <= 1e-12)
        assert np.all((corr >= 0.0) & (corr <= 1.0))

    def test_independent_null_small(self):
        a = random_matrix(70, 1000, 2)
        b = random_matrix(71, 1000, 2)
        assert cca(a, b).max() < 0.15

    def test_more_columns_than_rows_rejected(self):
        with pytest.raises(ContractError, match="truncate"):
            cca(random_matrix(80, 4, 6), random_matrix(81, 4, 2))

    def test_zero_variance_rejected(self):
        with pytest.raises(NumericError):
            cca(np.ones((10, 2)), random_matrix(82, 10, 2))


class TestSvccaScore:
    def test_self_score_is_one(self):
        model = init_model(SMALL)
        probe = random_probe(5, 30)
        result = svcca_score(model, model, probe)
        assert abs(result.rho - 1.0) < 1e-6
        assert {ls.layer for ls in result.per_layer} <= set(AGGREGATE_LAYERS)

    def test_symmetry(self):
        a = init_model(SMALL)
        b = init_model(ModelConfig(conv_filters=8, dense1=32, dense2=16, seed=9))
        probe = random_probe(6, 30)
        r_ab = svcca_score(a, b, probe)
        r_ba = svcca_score(b, a, probe)
        assert abs(r_ab.rho - r_ba.rho) < 1e-8

    def test_distinct_nets_below_self_score(self):
        a = init_model(SMALL)
        b = init_model(ModelConfig(conv_filters=8, dense1=32, dense2=16, seed=9))
        probe = random_probe(7, 30)
        assert svcca_score(a, b, probe).rho < 1.0

    def test_rho_in_range_random_pairs(self):
        probe = random_probe(8, 25)
        for seed in range(5):
            a = init_model(ModelConfig(conv_filters=8, dense1=32, dense2=16,
                                       seed=100 + seed))
            b = init_model(ModelConfig(conv_filters=8, dense1=32, dense2=16,
                                       seed=200 + seed))
            rho = svcca_score(a, b, probe).rho
            assert 0.0 <= rho <= 1.0

    def test_deterministic(self):
        a = init_model(SMALL)
        b = init_model(ModelConfig(conv_filters=8, dense1=32, dense2=16, seed=9))
        probe = random_probe(9, 20)
        assert svcca_score(a, b, probe).rho == svcca_score(a, b, probe).rho

    def test_architecture_mismatch_rejected(self):
        a = init_model(SMALL)
        b = init_model(ModelConfig(conv_filters=16, dense1=32, dense2=16, seed=0))
        with pytest.raises(ContractError):
            svcca_score(a, b, random_probe(10, 12))

    def test_all_dead_layers_undefined(self):
        a = init_model(SMALL)
        b = init_model(SMALL)
        for model in (a, b):
            for key in model.params:
                model.params[key][...] = 0.0
        with pytest.raises(NumericError, match="undefined"):
            svcca_score(a, b, random_probe(11, 12))


class TestWriteSvcca:
    def test_row_format(self, tmp_path):
        a = init_model(SMALL)
        result = svcca_score(a, a, random_probe(12, 20))
        path = tmp_path / "svcca.csv"
        write_svcca(path, [("b1", "b2", result)])
        lines = path.read_text().splitlines()
        assert lines[0] == "source;target;layer;kept_a;kept_b;mean_cc"
        assert lines[1].startswith("b1;b2;pool:sales;")
        rho_line = lines[-1].split(";")
        assert rho_line[2] == "rho"
        assert float(rho_line[5]) == pytest.approx(result.rho)
