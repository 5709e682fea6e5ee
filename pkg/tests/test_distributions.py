import math
import struct

import numpy as np
import pytest

from shallowcal.distributions import (
    bayes_risk,
    bayes_zero_one_risk,
    builtin_distributions,
    evaluator,
    load_idx,
    make_distribution,
    population_risk,
    sample,
)
from shallowcal.metrics import LOG2, binary_entropy, binary_kl


class TestSampling:
    def test_certain_labels(self):
        dist = make_distribution("constant-1d", p=1.0)
        samp = sample(dist, 50, seed=0)
        assert np.all(samp.labels == 1.0)

    def test_fair_labels_ci(self):
        dist = make_distribution("constant-1d", p=0.5)
        n = 100_000
        samp = sample(dist, n, seed=1)
        assert abs(samp.labels.mean()) <= 4.0 / math.sqrt(n)

    def test_determinism(self):
        dist = make_distribution("logistic-1d", c=2.0)
        a = sample(dist, 64, seed=5)
        b = sample(dist, 64, seed=5)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.labels, b.labels)

    def test_unit_ball(self):
        for name, factory in builtin_distributions().items():
            dist = factory()
            samp = sample(dist, 500, seed=2)
            assert np.all(np.linalg.norm(samp.points, axis=1) <= 1 + 1e-12), name

    def test_label_frequencies_match_cond_prob(self):
        dist = make_distribution("logistic-1d", c=2.0)
        samp = sample(dist, 200_000, seed=3)
        x = samp.points[:, 0]
        edges = np.linspace(-1, 1, 9)
        for lo, hi in zip(edges[:-1], edges[1:]):
            mask = (x >= lo) & (x < hi)
            k = int(mask.sum())
            freq = np.mean(samp.labels[mask] == 1.0)
            p_true = float(np.mean(dist.cond_prob(samp.points[mask])))
            se = math.sqrt(p_true * (1 - p_true) / k)
            assert abs(freq - p_true) <= 4 * se + 1e-12


class TestPopulationRisk:
    def test_zero_predictor_fair_coin(self):
        dist = make_distribution("constant-1d", p=0.5)
        out = population_risk(dist, lambda P: np.zeros(len(P)))
        assert out.breakdown.logistic_risk == pytest.approx(LOG2, abs=1e-12)
        assert out.breakdown.excess_logistic == pytest.approx(0.0, abs=1e-12)

    def test_zero_predictor_biased_coin(self):
        dist = make_distribution("constant-1d", p=0.75)
        out = population_risk(dist, lambda P: np.zeros(len(P)))
        assert out.breakdown.excess_logistic == pytest.approx(
            binary_kl(0.75, 0.5), abs=1e-12
        )

    def test_bayes_predictor_achieves_bayes_risk(self):
        dist = make_distribution("logistic-1d", c=2.0)
        out = population_risk(dist, lambda P: 2.0 * P[:, 0])
        assert out.breakdown.excess_logistic <= 1e-10
        assert out.breakdown.l2_calibration_sq <= 1e-12

    def test_weights_sum_to_one(self):
        for name, factory in builtin_distributions().items():
            ev = evaluator(factory())
            assert abs(ev.weights.sum() - 1.0) <= 1e-12, name
            assert np.all(ev.weights >= 0), name

    def test_quadrature_vs_mc_cross_check(self):
        dist = make_distribution("logistic-1d", c=2.0)
        predictor = lambda P: 1.5 * P[:, 0] - 0.2
        quad = population_risk(dist, predictor)
        mc_dist = make_distribution("logistic-1d", c=2.0)
        mc_dist.eval_scheme = "mc"
        mc_dist.mc_eval_n = 1_000_000
        mc = population_risk(mc_dist, predictor)
        assert mc.logistic_se is not None
        diff = abs(quad.breakdown.logistic_risk - mc.breakdown.logistic_risk)
        assert diff <= 5 * mc.logistic_se


class TestCatalogConstants:
    def test_constant_bayes_risks(self):
        dist = make_distribution("constant-1d", p=0.75)
        expect = -0.75 * math.log(0.75) - 0.25 * math.log(0.25)
        assert bayes_risk(dist) == pytest.approx(expect, abs=1e-12)
        assert bayes_risk(dist) == pytest.approx(0.5623, abs=5e-5)
        assert bayes_zero_one_risk(dist) == pytest.approx(0.25, abs=1e-12)
        assert dist.documented["bayes_risk"] == pytest.approx(expect, rel=1e-14)

    def test_logistic_with_zero_slope_is_fair_coin(self):
        dist = make_distribution("logistic-1d", c=0.0)
        assert bayes_risk(dist) == pytest.approx(LOG2, abs=1e-12)

    def test_step_bayes_zero_one(self):
        dist = make_distribution("step-1d")
        assert bayes_zero_one_risk(dist) == pytest.approx(0.3, abs=1e-12)
        assert bayes_risk(dist) == pytest.approx(binary_entropy(0.3), abs=1e-12)

    def test_documented_constants_match_evaluator(self):
        dist = make_distribution("step-1d")
        assert dist.documented["bayes_zero_one"] == pytest.approx(
            bayes_zero_one_risk(dist), abs=1e-12
        )

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError):
            make_distribution("nope-1d")

    def test_step_smooth_interval_is_bounded_away(self):
        dist = make_distribution("step-smooth-1d", width=0.1)
        lo, hi = dist.wrong_pair_interval
        grid = np.linspace(lo, hi, 2001)[:, None]
        p = dist.cond_prob(grid)
        assert np.all(p > 0.5 + 0.15)
        assert np.all(p < 1.0 - 0.25)

    def test_sphere_cap_marginal(self):
        dist = make_distribution("sphere-cap-teacher", d=4, c=4.0)
        samp = sample(dist, 2000, seed=4)
        np.testing.assert_allclose(np.linalg.norm(samp.points, axis=1), 1.0, atol=1e-12)
        assert np.all(samp.points[:, 0] >= 0)
        out = population_risk(dist, lambda P: 4.0 * P[:, 0])
        assert out.logistic_se is not None
        assert out.breakdown.excess_logistic <= 5 * out.logistic_se + 1e-6


def write_idx_fixture(tmp_path, labels, pixel_scale=200):
    """Four 4x4 images with the given labels."""
    n = len(labels)
    rng = np.random.default_rng(7)
    images = rng.integers(0, pixel_scale, size=(n, 4, 4), endpoint=True).astype(np.uint8)
    img_path = tmp_path / "images.idx3"
    lab_path = tmp_path / "labels.idx1"
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">iiii", 0x00000803, n, 4, 4))
        fh.write(images.tobytes())
    with open(lab_path, "wb") as fh:
        fh.write(struct.pack(">ii", 0x00000801, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())
    return img_path, lab_path, images


class TestIdxLoader:
    def test_round_trip_mapping_and_norms(self, tmp_path):
        img, lab, raw = write_idx_fixture(tmp_path, [1, 5, 1, 5])
        samp = load_idx(img, lab, (1, 5))
        assert samp.n == 4
        np.testing.assert_array_equal(samp.labels, [1.0, -1.0, 1.0, -1.0])
        assert np.all(np.linalg.norm(samp.points, axis=1) <= 1 + 1e-12)
        d = 16
        expect0 = raw[0].reshape(-1) / (255 * math.sqrt(d))
        nrm = np.linalg.norm(expect0)
        np.testing.assert_allclose(samp.points[0], expect0 / max(1.0, nrm), rtol=1e-12)
        assert samp.meta["class_pair"] == [1, 5]

    def test_filters_other_classes(self, tmp_path):
        img, lab, _ = write_idx_fixture(tmp_path, [1, 5, 3, 5, 1, 7])
        samp = load_idx(img, lab, (1, 5))
        assert samp.n == 4

    def test_degenerate_pair_rejected(self, tmp_path):
        img, lab, _ = write_idx_fixture(tmp_path, [3, 3, 3, 3])
        with pytest.raises(ValueError):
            load_idx(img, lab, (3, 3))

    def test_absent_class_rejected(self, tmp_path):
        img, lab, _ = write_idx_fixture(tmp_path, [1, 1, 1, 1])
        with pytest.raises(ValueError):
            load_idx(img, lab, (1, 5))

    def test_truncated_file_rejected(self, tmp_path):
        img, lab, _ = write_idx_fixture(tmp_path, [1, 5])
        data = img.read_bytes()
        img.write_bytes(data[:-5])
        with pytest.raises(ValueError):
            load_idx(img, lab, (1, 5))

    def test_bad_magic_rejected(self, tmp_path):
        img, lab, _ = write_idx_fixture(tmp_path, [1, 5])
        data = bytearray(lab.read_bytes())
        data[3] = 0x99
        lab.write_bytes(bytes(data))
        with pytest.raises(ValueError):
            load_idx(img, lab, (1, 5))
