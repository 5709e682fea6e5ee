import math

import numpy as np
import pytest

from shallowcal.diagnostics import (
    activation_flip_count,
    gaussian_row_count_check,
    gen_gap_slope,
    generalization_gap,
    risk_ratio_check,
    sphere_linearization_gap,
    sphere_points,
)
from shallowcal.distributions import make_distribution, sample
from shallowcal.network import freeze_features, init_network
from shallowcal.trainer import TrainConfig, train


class TestGaussianRowCount:
    def test_vanishing_band_counts_zero(self):
        report = gaussian_row_count_check(m=100, tau=1e-9, trials=50, seed=0)
        assert report.observed_max_stat == 0.0
        assert report.verdict

    def test_violation_frequency_within_nominal(self):
        report = gaussian_row_count_check(m=1000, tau=0.1, trials=2000, delta=0.05, seed=1)
        assert report.observed_freq <= 0.15 + 3 * math.sqrt(0.15 * 0.85 / 2000)
        assert report.verdict

    def test_mean_count_matches_gaussian_density(self):
        report = gaussian_row_count_check(m=1000, tau=0.1, trials=2000, seed=2)
        expect = report.details["expected_count"]
        se = report.details["count_se"]
        assert abs(report.details["mean_count"] - expect) <= 4 * se

    def test_rejects_bad_tau(self):
        with pytest.raises(ValueError):
            gaussian_row_count_check(m=10, tau=1.5, trials=10)

    def test_report_serializes(self):
        report = gaussian_row_count_check(m=50, tau=0.05, trials=100, seed=3)
        d = report.to_dict()
        assert d["lemma_id"] == "gauss-count"
        assert d["verdict"] in ("pass", "fail")


class TestActivationFlips:
    def test_identical_matrices_no_flips(self):
        W = np.random.default_rng(4).standard_normal((64, 3))
        X = np.random.default_rng(5).uniform(-0.5, 0.5, size=(32, 3))
        stats = activation_flip_count(W, W.copy(), X)
        assert stats.max_flips == 0
        assert stats.radius == 0.0

    def test_flip_count_bounded_by_width(self):
        rng = np.random.default_rng(6)
        W = rng.standard_normal((32, 2))
        stats = activation_flip_count(W, -W, rng.uniform(-1, 1, size=(50, 2)))
        assert stats.max_flips <= 32

    def test_along_training_run(self):
        dist = make_distribution("logistic-1d", c=2.0)
        samp = sample(dist, 256, seed=7)
        m = 4096
        net = init_network(m, 1, float(m) ** -0.125, seed=8)
        before = net.init_weights.copy()
        cfg = TrainConfig(eta=4.0 / net.rho**2, t_max=10)
        train(net, samp.points, samp.labels, cfg)
        stats = activation_flip_count(before, net.weights, samp.points)
        assert stats.max_flips <= stats.bound


class TestSphereGap:
    def test_points_on_unit_sphere(self):
        for d in (1, 2, 3, 5):
            pts = sphere_points(d, 64, seed=9)
            np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, rtol=1e-12)

    def test_zero_at_initialization(self):
        net = init_network(128, 2, 0.9, seed=10)
        rep = sphere_linearization_gap(net, net.init_weights, resolution=256)
        assert rep.sup_gap <= 1e-12

    def test_zero_below_smallest_activation_margin(self):
        net = init_network(32, 2, 1.0, seed=11)
        X = sphere_points(2, 128)
        margins = np.abs(X @ net.init_weights.T)
        eps = 0.5 * margins.min()  # no activation can flip on the grid
        rng = np.random.default_rng(12)
        delta = rng.standard_normal((32, 2))
        delta *= eps / np.linalg.norm(delta, axis=1, keepdims=True).max() / np.sqrt(32)
        V = net.init_weights + delta
        assert float(np.linalg.norm(V - net.init_weights, axis=1).max()) < margins.min()
        rep = sphere_linearization_gap(net, V, resolution=128)
        assert rep.sup_gap == 0.0

    def test_gap_below_bound_after_training(self):
        dist = make_distribution("logistic-1d", c=2.0)
        samp = sample(dist, 256, seed=13)
        m = 1024
        net = init_network(m, 1, float(m) ** -0.125, seed=14)
        cfg = TrainConfig(eta=4.0 / net.rho**2, t_max=10)
        train(net, samp.points, samp.labels, cfg)
        rep = sphere_linearization_gap(net, net.weights)
        assert rep.sup_gap <= rep.bound


class TestRiskRatio:
    def test_single_iterate_ratio_is_one(self):
        dist = make_distribution("logistic-1d", c=2.0)
        samp = sample(dist, 64, seed=15)
        net = init_network(64, 1, 0.7, seed=16)
        rep = risk_ratio_check(
            net, samp.points, samp.labels,
            TrainConfig(eta=4.0 / net.rho**2, t_max=1),
            net.init_weights,
        )
        # two iterates recorded; ratio at (i, i) would be 1, max over pairs >= 1
        assert rep.max_ratio >= 1.0
        single = rep.frozen_risks[:1]
        assert float(single.max() / single.min()) == 1.0

    def test_ratio_below_bound_on_easy_run(self):
        dist = make_distribution("logistic-1d", c=2.0)
        samp = sample(dist, 256, seed=17)
        m = 4096
        net = init_network(m, 1, float(m) ** -0.125, seed=18)
        cfg = TrainConfig(eta=4.0 / net.rho**2, t_max=10)
        rep = risk_ratio_check(net, samp.points, samp.labels, cfg, net.init_weights)
        assert 1.0 <= rep.max_ratio <= rep.bound
        assert rep.iterates == 11


class TestGeneralizationGap:
    def test_fair_coin_at_initialization(self):
        dist = make_distribution("constant-1d", p=0.5)
        samp = sample(dist, 4096, seed=19)
        net = init_network(256, 1, 0.25, seed=20)
        ff = freeze_features(net, at_init=True)
        rep = generalization_gap(ff, net.init_weights, samp.points, samp.labels, dist)
        # both sides sit within O(rho) of ln 2; the gap is small at this n
        assert abs(rep.gap) <= 0.05
        assert rep.bound > 0

    def test_tiny_sample_no_assertion(self):
        dist = make_distribution("constant-1d", p=0.5)
        samp = sample(dist, 1, seed=21)
        net = init_network(64, 1, 0.5, seed=22)
        ff = freeze_features(net, at_init=True)
        rep = generalization_gap(ff, net.init_weights, samp.points, samp.labels, dist)
        assert math.isfinite(rep.gap)

    def test_slope_driver_returns_fit(self):
        dist = make_distribution("logistic-1d", c=2.0)
        net = init_network(128, 1, 0.5, seed=23)
        rng = np.random.default_rng(24)
        delta = rng.standard_normal(net.weights.shape)
        V = net.init_weights + delta / np.linalg.norm(delta)
        out = gen_gap_slope(net, V, dist, n_grid=[256, 1024, 4096], seeds=5)
        assert len(out["medians"]) == 3
        assert out["slope"] < 0.0
