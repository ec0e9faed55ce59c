import json

import numpy as np
import pytest

from modalsr import ConfigError, angular_distance, build_direction_grid, build_hybrid, build_lma, build_sma
from modalsr.geometry import HybridConfig


class TestBuildSma:
    def test_standard_64_mic_layout(self):
        arr = build_sma(64, 0.10)
        assert len(arr) == 64
        radii = np.linalg.norm(arr.positions, axis=1)
        assert np.allclose(radii, 0.10, atol=1e-9)
        assert set(arr.labels) == {"SMA"}

    def test_minimal_sphere(self):
        arr = build_sma(4, 1.0)
        assert np.allclose(np.linalg.norm(arr.positions, axis=1), 1.0)
        d = arr.positions[:, None, :] - arr.positions[None, :, :]
        dist = np.linalg.norm(d, axis=2)
        np.fill_diagonal(dist, np.inf)
        assert dist.min() > 0

    def test_min_pairwise_distance(self):
        # brute-force pairwise check of the deterministic 64-point layout
        arr = build_sma(64, 0.10)
        d = arr.positions[:, None, :] - arr.positions[None, :, :]
        dist = np.linalg.norm(d, axis=2)
        np.fill_diagonal(dist, np.inf)
        assert dist.min() > 0.03

    def test_deterministic(self):
        a = build_sma(64, 0.10)
        b = build_sma(64, 0.10)
        assert np.array_equal(a.positions, b.positions)

    @pytest.mark.parametrize("n, r", [(3, 1.0), (64, 0.0), (64, -1.0)])
    def test_invalid_config(self, n, r):
        with pytest.raises(ConfigError):
            build_sma(n, r)


class TestBuildLma:
    def test_eight_mic_lma(self):
        arr = build_lma(8, 0.04, (0.5, 0, 0), (0, 1, 0))
        assert len(arr) == 8
        span = arr.positions[-1] - arr.positions[0]
        assert np.linalg.norm(span) == pytest.approx(0.28, abs=1e-12)
        assert np.allclose(arr.positions.mean(axis=0), [0.5, 0, 0], atol=1e-12)

    def test_two_element_symmetry(self):
        arr = build_lma(2, 1.0, (0, 0, 0), (1, 0, 0))
        assert np.allclose(sorted(arr.positions[:, 0]), [-0.5, 0.5], atol=1e-15)
        assert np.allclose(arr.positions[:, 1:], 0)

    def test_consecutive_spacing(self):
        arr = build_lma(8, 0.04, (0.3, -0.2, 0.1), (1, 2, 2))
        steps = np.diff(arr.positions, axis=0)
        assert np.allclose(np.linalg.norm(steps, axis=1), 0.04, atol=1e-12)

    def test_zero_axis_rejected(self):
        with pytest.raises(ConfigError):
            build_lma(8, 0.04, (0, 0, 0), (0, 0, 0))


class TestBuildHybrid:
    def test_default_is_96(self, hybrid):
        assert len(hybrid) == 96
        assert hybrid.labels[:64] == ("SMA",) * 64

    def test_four_lma_labels_of_8(self, hybrid):
        from collections import Counter

        counts = Counter(l for l in hybrid.labels if l != "SMA")
        assert counts == {"LMA0": 8, "LMA1": 8, "LMA2": 8, "LMA3": 8}

    def test_zero_lmas_degenerates_to_sma(self):
        cfg = HybridConfig(sma_count=64, sma_radius_m=0.10, lmas=())
        arr = build_hybrid(cfg)
        assert np.array_equal(arr.positions, build_sma(64, 0.10).positions)

    def test_lma_centers_and_tangential_axes(self, hybrid):
        for label, center, axis in [("LMA0", (0.5, 0, 0), (0, 1, 0)),
                                    ("LMA2", (0, 0.5, 0), (1, 0, 0))]:
            pts = hybrid.sub_array(label)
            assert np.allclose(pts.mean(axis=0), center, atol=1e-12)
            span = pts[-1] - pts[0]
            assert abs(abs(span @ np.asarray(axis)) - np.linalg.norm(span)) < 1e-12

    def test_overlapping_mics_rejected(self):
        cfg = HybridConfig(sma_count=64, sma_radius_m=0.10,
                           lmas=(HybridConfig.default().lmas[0],) * 2)
        with pytest.raises(ConfigError):
            build_hybrid(cfg)

    def test_from_json(self):
        doc = {"sma": {"count": 16, "radius_m": 0.05},
               "lma": {"count_each": 4, "spacing_m": 0.02, "offset_m": 0.3, "axes": "radial"}}
        arr = build_hybrid(HybridConfig.from_json(json.dumps(doc)))
        assert len(arr) == 16 + 4 * 4


class TestDirectionGrid:
    @pytest.mark.parametrize("level, count", [(0, 12), (1, 42), (2, 162), (3, 642), (4, 2562)])
    def test_vertex_count(self, level, count):
        assert len(build_direction_grid(level)) == count

    def test_level3_is_642(self, grid3):
        assert len(grid3) == 642

    def test_unit_norm(self, grid3):
        assert np.allclose(np.linalg.norm(grid3.directions, axis=1), 1.0, atol=1e-12)

    def test_adjacency_structure(self):
        # brute-force mesh check after one subdivision
        g = build_direction_grid(1)
        assert len(g) == 42
        degrees = [len(a) for a in g.adjacency]
        assert set(degrees) <= {5, 6}
        assert degrees.count(5) == 12
        for i, neigh in enumerate(g.adjacency):
            for j in neigh:
                assert i in g.adjacency[j]

    def test_deterministic_ordering(self):
        a = build_direction_grid(2)
        b = build_direction_grid(2)
        assert np.array_equal(a.directions, b.directions)

    @pytest.mark.parametrize("level", [-1, 7])
    def test_level_out_of_range(self, level):
        with pytest.raises(ConfigError):
            build_direction_grid(level)


class TestAngularDistance:
    def test_identity(self):
        assert angular_distance([1, 0, 0], [1, 0, 0]) == 0.0

    def test_antipodal(self):
        assert angular_distance([1, 0, 0], [-1, 0, 0]) == np.pi

    def test_orthogonal(self):
        assert angular_distance([1, 0, 0], [0, 1, 0]) == pytest.approx(np.pi / 2, abs=1e-15)

    def test_defensive_normalization(self):
        assert angular_distance([2, 0, 0], [0, 0, 3]) == pytest.approx(np.pi / 2, abs=1e-15)

    def test_symmetry_and_triangle_inequality(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            a, b, c = rng.standard_normal((3, 3))
            ab = angular_distance(a, b)
            assert ab == pytest.approx(angular_distance(b, a), abs=1e-15)
            assert ab <= angular_distance(a, c) + angular_distance(c, b) + 1e-12
