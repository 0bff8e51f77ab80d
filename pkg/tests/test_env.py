"""Environment tests: determinism, substream isolation, statistical moments."""

import numpy as np
import pytest

from slicesim.config import ScenarioConfig
from slicesim.env import (RngStream, UserGeometry, load_geometry, pathloss,
                          sample_geometry, sample_slot)


def cfg_small(**kw):
    base = dict(num_embb_users=3, num_urllc_users=2, num_rbs=4,
                arrival_rate=2.0)
    base.update(kw)
    return ScenarioConfig().replace(**base)


class TestPathloss:
    def test_reference_distance(self):
        assert pathloss(1.0) == pytest.approx(10 ** (-3.8))

    def test_one_decade(self):
        assert pathloss(10.0) == pytest.approx(10 ** (-(38 + 35) / 10))

    def test_monotone_decreasing(self):
        rng = np.random.default_rng(2)
        d = np.sort(rng.uniform(1, 500, 100))
        g = pathloss(d)
        assert np.all(np.diff(g) <= 0)

    def test_domain(self):
        with pytest.raises(ValueError):
            pathloss(0.0)
        with pytest.raises(ValueError):
            pathloss(-3.0)


class TestRngStream:
    def test_same_seed_same_sequences(self):
        cfg = cfg_small()
        geo = sample_geometry(cfg, RngStream(9))
        s1 = [sample_slot(cfg, geo, RngStream(9), t) for t in range(5)]
        s2 = [sample_slot(cfg, geo, RngStream(9), t) for t in range(5)]
        for a, b in zip(s1, s2):
            np.testing.assert_array_equal(a.embb_gain, b.embb_gain)
            np.testing.assert_array_equal(a.urllc_gain, b.urllc_gain)
            assert a.arrivals == b.arrivals

    def test_slot_random_access(self):
        cfg = cfg_small()
        rng = RngStream(4)
        geo = sample_geometry(cfg, rng)
        forward = [sample_slot(cfg, geo, rng, t) for t in range(4)]
        backward = [sample_slot(cfg, geo, rng, t) for t in (3, 2, 1, 0)]
        np.testing.assert_array_equal(forward[2].embb_gain,
                                      backward[1].embb_gain)

    def test_policy_substream_isolated(self):
        cfg = cfg_small()
        rng1, rng2 = RngStream(5), RngStream(5)
        geo1 = sample_geometry(cfg, rng1)
        geo2 = sample_geometry(cfg, rng2)
        # drain the policy stream on one side only
        rng1.substream("policy").random(1000)
        for t in range(3):
            a = sample_slot(cfg, geo1, rng1, t)
            b = sample_slot(cfg, geo2, rng2, t)
            np.testing.assert_array_equal(a.embb_gain, b.embb_gain)
            assert a.arrivals == b.arrivals

    def test_different_seeds_differ(self):
        cfg = cfg_small()
        geo = sample_geometry(cfg, RngStream(1))
        a = sample_slot(cfg, geo, RngStream(1), 0)
        b = sample_slot(cfg, geo, RngStream(2), 0)
        assert not np.array_equal(a.embb_gain, b.embb_gain)


class TestSampleSlot:
    def test_zero_arrival_rate(self):
        cfg = cfg_small(arrival_rate=0.0)
        rng = RngStream(0)
        geo = sample_geometry(cfg, rng)
        assert all(sample_slot(cfg, geo, rng, t).arrivals == 0
                   for t in range(20))

    def test_poisson_mean(self):
        cfg = cfg_small(arrival_rate=3.0, num_rbs=1, num_embb_users=1,
                        num_urllc_users=1)
        rng = RngStream(17)
        geo = sample_geometry(cfg, rng)
        n = 100_000
        draws = np.array([sample_slot(cfg, geo, rng, t).arrivals
                          for t in range(n)])
        sigma = np.sqrt(3.0 / n)
        assert abs(draws.mean() - 3.0) < 3 * sigma
        assert np.all(draws >= 0)

    def test_fading_unit_mean(self):
        cfg = cfg_small(num_embb_users=1, num_urllc_users=1, num_rbs=64)
        rng = RngStream(8)
        geo = UserGeometry(embb_distance_m=np.array([100.0]),
                           urllc_distance_m=np.array([100.0]))
        scale = pathloss(100.0)
        n_slots = 2000
        total = 0.0
        for t in range(n_slots):
            total += sample_slot(cfg, geo, rng, t).embb_gain.sum() / scale
        n = n_slots * 64
        mean = total / n
        assert abs(mean - 1.0) < 3 / np.sqrt(n)  # Exp(1) has unit variance

    def test_gains_nonnegative(self):
        cfg = cfg_small()
        rng = RngStream(0)
        geo = sample_geometry(cfg, rng)
        slot = sample_slot(cfg, geo, rng, 0)
        assert np.all(slot.embb_gain >= 0) and np.all(slot.urllc_gain >= 0)


class TestGeometry:
    def test_sampled_within_annulus(self):
        cfg = cfg_small(num_embb_users=50, num_urllc_users=50)
        geo = sample_geometry(cfg, RngStream(3))
        for d in (geo.embb_distance_m, geo.urllc_distance_m):
            assert np.all(d >= cfg.min_distance_m)
            assert np.all(d <= cfg.cell_radius_m)

    def test_load_geometry_roundtrip(self, tmp_path):
        cfg = cfg_small(num_embb_users=2, num_urllc_users=1)
        path = tmp_path / "geo.txt"
        path.write_text("# id distance_m\nembb_0 120.5\nembb_1 80.0\n"
                        "urllc_0 200.0\n")
        geo = load_geometry(str(path), cfg)
        np.testing.assert_allclose(geo.embb_distance_m, [120.5, 80.0])
        np.testing.assert_allclose(geo.urllc_distance_m, [200.0])

    def test_load_geometry_missing_user(self, tmp_path):
        cfg = cfg_small(num_embb_users=2, num_urllc_users=1)
        path = tmp_path / "geo.txt"
        path.write_text("embb_0 120.5\nurllc_0 200.0\n")
        with pytest.raises(ValueError):
            load_geometry(str(path), cfg)

    def test_load_geometry_bad_row(self, tmp_path):
        cfg = cfg_small()
        path = tmp_path / "geo.txt"
        path.write_text("nonsense\n")
        with pytest.raises(ValueError):
            load_geometry(str(path), cfg)

    def test_positive_distances_required(self):
        with pytest.raises(ValueError):
            UserGeometry(embb_distance_m=np.array([0.0]),
                         urllc_distance_m=np.array([10.0]))
