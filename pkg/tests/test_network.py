import numpy as np
import pytest

from shallowcal.network import (
    MAGIC,
    Network,
    augment,
    augment_batch,
    clone_initial,
    feature_gradient,
    forward,
    forward_batch,
    freeze_features,
    frozen_forward,
    frozen_forward_batch,
    init_network,
    load_network,
    save_network,
)


def manual_net(signs, weights, rho=1.0):
    signs = np.asarray(signs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return Network(
        m=len(signs),
        d=weights.shape[1],
        rho=rho,
        signs=signs,
        weights=weights.copy(),
        init_weights=weights.copy(),
    )


class TestInit:
    def test_same_seed_bitwise_identical(self):
        a = init_network(64, 5, 0.5, seed=42)
        b = init_network(64, 5, 0.5, seed=42)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.signs, b.signs)
        assert np.array_equal(a.init_weights, b.init_weights)

    def test_weight_mean_clt_bound(self):
        net = init_network(10_000, 10, 1.0, seed=0)
        assert abs(net.weights.mean()) <= 3.5 / np.sqrt(10_000 * 10)

    def test_both_signs_present(self):
        net = init_network(64, 2, 1.0, seed=7)
        assert np.any(net.signs == 1.0) and np.any(net.signs == -1.0)

    def test_init_snapshot_immutable(self):
        net = init_network(8, 2, 1.0, seed=1)
        with pytest.raises(ValueError):
            net.init_weights[0, 0] = 99.0

    def test_clone_initial_resets(self):
        net = init_network(8, 2, 1.0, seed=1)
        net.weights += 1.0
        fresh = clone_initial(net)
        assert np.array_equal(fresh.weights, net.init_weights)


class TestForward:
    def test_single_relu(self):
        net = manual_net([1.0], [[1.0, 0.0]])
        assert forward(net, np.array([1.0, 0.0])) == 1.0

    def test_dead_relu(self):
        net = manual_net([1.0], [[1.0, 0.0]])
        assert forward(net, np.array([-1.0, 0.0])) == 0.0

    def test_cancellation(self):
        net = manual_net([1.0, -1.0], [[1.0, 0.0], [1.0, 0.0]], rho=2.0)
        assert forward(net, np.array([1.0, 0.0])) == 0.0

    def test_batch_matches_single(self):
        net = init_network(33, 4, 0.7, seed=5)
        X = np.random.default_rng(6).uniform(-0.5, 0.5, size=(17, 4))
        batch = forward_batch(net, X)
        single = np.array([forward(net, x) for x in X])
        np.testing.assert_allclose(batch, single, rtol=1e-12)

    def test_positive_homogeneity_in_x(self):
        net = init_network(16, 3, 1.3, seed=8)
        rng = np.random.default_rng(9)
        for _ in range(20):
            x = rng.standard_normal(3) * 0.2
            c = rng.uniform(0.1, 3.0)
            assert forward(net, c * x) == pytest.approx(c * forward(net, x), rel=1e-12)

    def test_dimension_mismatch(self):
        net = init_network(4, 3, 1.0, seed=0)
        with pytest.raises(ValueError):
            forward(net, np.zeros(2))


class TestFeatureGradient:
    def test_zero_input_gives_zero_matrix(self):
        net = init_network(6, 3, 1.0, seed=2)
        grad = feature_gradient(net, np.zeros(3))
        assert np.array_equal(grad, np.zeros((6, 3)))

    def test_single_relu_row(self):
        net = manual_net([1.0], [[1.0, 0.0]])
        grad = feature_gradient(net, np.array([1.0, 0.0]))
        np.testing.assert_allclose(grad, [[1.0, 0.0]])

    def test_frobenius_norm_identity(self):
        # ||grad||^2 = (rho^2/m) * (#active) * ||x||^2, and <= rho^2 ||x||^2
        net = init_network(50, 4, 1.7, seed=3)
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = rng.standard_normal(4)
            x /= np.linalg.norm(x)
            grad = feature_gradient(net, x)
            active = int(np.sum(net.weights @ x >= 0))
            expect = net.rho * np.sqrt(active / net.m)
            assert np.linalg.norm(grad) == pytest.approx(expect, rel=1e-12)
            assert np.linalg.norm(grad) <= net.rho + 1e-12

    def test_directional_derivative(self):
        net = init_network(40, 3, 0.9, seed=10)
        rng = np.random.default_rng(11)
        x = rng.standard_normal(3)
        x /= 2 * np.linalg.norm(x)
        # skip knife-edge activations
        assert np.min(np.abs(net.weights @ x)) > 1e-4
        delta = rng.standard_normal((40, 3))
        h = 1e-6
        net_hi = clone_initial(net)
        net_hi.weights[...] = net.weights + h * delta
        fd = (forward(net_hi, x) - forward(net, x)) / h
        inner = float(np.sum(feature_gradient(net, x) * delta))
        assert fd == pytest.approx(inner, abs=1e-5)


class TestFrozenFeatures:
    def test_homogeneity_identity(self):
        net = init_network(32, 3, 1.1, seed=12)
        ff = freeze_features(net)
        rng = np.random.default_rng(13)
        for _ in range(10):
            x = rng.standard_normal(3) * 0.3
            assert frozen_forward(ff, net.weights, x) == pytest.approx(
                forward(net, x), rel=1e-12, abs=1e-15
            )

    def test_linearity(self):
        net = init_network(16, 2, 1.0, seed=14)
        ff = freeze_features(net)
        x = np.array([0.4, -0.2])
        v = forward(net, x)
        assert frozen_forward(ff, np.zeros((16, 2)), x) == 0.0
        assert frozen_forward(ff, 2.0 * net.weights, x) == pytest.approx(
            2.0 * v, rel=1e-12, abs=1e-15
        )

    def test_batch_matches_single(self):
        net = init_network(21, 3, 0.8, seed=15)
        ff = freeze_features(net)
        V = np.random.default_rng(16).standard_normal((21, 3))
        X = np.random.default_rng(17).uniform(-0.4, 0.4, size=(9, 3))
        batch = frozen_forward_batch(ff, V, X)
        single = np.array([frozen_forward(ff, V, x) for x in X])
        np.testing.assert_allclose(batch, single, rtol=1e-12)


class TestAugment:
    def test_origin(self):
        out = augment(np.zeros(1)).x_tilde
        np.testing.assert_allclose(out, [0.0, 1 / np.sqrt(2)])
        assert np.linalg.norm(out) == pytest.approx(1 / np.sqrt(2))

    def test_unit_norm_input(self):
        out = augment(np.array([0.6, 0.8])).x_tilde
        np.testing.assert_allclose(out, np.array([0.6, 0.8, 1.0]) / np.sqrt(2))
        assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-15)

    def test_norm_flag(self):
        with pytest.raises(ValueError):
            augment(np.array([1.2, 0.0]), assert_unit_ball=True)
        augment(np.array([1.2, 0.0]))  # no flag, no check

    def test_batch(self):
        X = np.array([[0.3, -0.4], [0.0, 0.0]])
        out = augment_batch(X)
        assert out.shape == (2, 3)
        np.testing.assert_allclose(out[1], [0.0, 0.0, 1 / np.sqrt(2)])


class TestSerialization:
    def test_round_trip_bitwise(self, tmp_path):
        net = init_network(37, 5, 0.33, seed=20)
        net.weights += 0.125  # make weights differ from the snapshot
        path = tmp_path / "net.srln"
        save_network(net, path)
        back = load_network(path)
        assert back.m == net.m and back.d == net.d and back.rho == net.rho
        assert np.array_equal(back.signs, net.signs)
        assert np.array_equal(back.weights, net.weights)
        assert np.array_equal(back.init_weights, net.init_weights)

    def test_header_layout(self, tmp_path):
        net = init_network(3, 2, 1.5, seed=21)
        path = tmp_path / "net.srln"
        save_network(net, path)
        raw = path.read_bytes()
        assert raw[:5] == MAGIC
        assert int.from_bytes(raw[5:13], "little") == 3
        assert int.from_bytes(raw[13:21], "little") == 2
        assert len(raw) == 5 + 8 + 8 + 8 + 3 + 2 * 3 * 2 * 8

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.srln"
        path.write_bytes(b"NOPE!" + b"\0" * 64)
        with pytest.raises(ValueError):
            load_network(path)
