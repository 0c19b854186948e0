import json
import math

import numpy as np
import pytest

from mixzone.errors import DomainError, EmptyRegion, InconsistentGrid, MissingComposition
from mixzone.features import GridFeatureSet
from mixzone.stats import (
    export_region_map,
    format_report,
    read_composition_csv,
    region_composition,
    region_monthly_means,
    write_map_csv,
    write_summary_json,
)


def feature_set(features, valid=None, lat=None):
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    return GridFeatureSet(
        np.arange(n),
        np.zeros(n) if lat is None else np.asarray(lat, dtype=float),
        np.zeros(n),
        features,
        np.ones(n, dtype=bool) if valid is None else np.asarray(valid),
    )


class TestMonthlyMeans:
    def test_single_region_is_global_mean(self):
        X = np.random.default_rng(0).random((10, 36))
        (s,) = region_monthly_means(feature_set(X), np.ones(10, dtype=int))
        np.testing.assert_allclose(s.monthly_chi.T.reshape(-1), X.mean(axis=0), rtol=1e-15)
        assert s.cell_count == 10

    def test_single_cell_region(self):
        X = np.random.default_rng(1).random((3, 36))
        out = region_monthly_means(feature_set(X), [1, 2, 2])
        np.testing.assert_array_equal(out[0].monthly_chi[:, 0], X[0, :12])
        np.testing.assert_array_equal(out[0].monthly_chi[:, 2], X[0, 24:])

    def test_two_cell_mean(self):
        X = np.full((2, 36), 0.5)
        X[:, 0] = [0.2, 0.4]
        (s,) = region_monthly_means(feature_set(X), [1, 1])
        assert s.monthly_chi[0, 0] == pytest.approx(0.3, abs=1e-16)

    def test_reconstruction(self):
        rng = np.random.default_rng(2)
        X = rng.random((500, 36))
        labels = rng.integers(1, 8, size=500)
        out = region_monthly_means(feature_set(X), labels)
        recon = sum(s.cell_count * s.monthly_chi for s in out) / 500
        np.testing.assert_allclose(recon.T.reshape(-1), X.mean(axis=0), atol=1e-12, rtol=0)
        assert sum(s.cell_count for s in out) == 500
        assert [s.region_id for s in out] == sorted(set(labels))

    def test_mean_latitude(self):
        out = region_monthly_means(feature_set(np.zeros((3, 36)), lat=[10, 20, -5]), [1, 1, 2])
        assert out[0].mean_latitude == 15.0 and out[1].mean_latitude == -5.0

    def test_invalid_cells_must_be_unlabelled(self):
        fs = feature_set(np.zeros((3, 36)), valid=[True, False, True])
        region_monthly_means(fs, [1, 0, 1])
        with pytest.raises(DomainError):
            region_monthly_means(fs, [1, 1, 1])
        with pytest.raises(DomainError):
            region_monthly_means(fs, [1, 0, 0])

    def test_gap_in_region_ids(self):
        with pytest.raises(EmptyRegion):
            region_monthly_means(feature_set(np.zeros((2, 36))), [1, 3])


class TestComposition:
    def test_mean(self):
        comp, missing = region_composition([1, 2], [1, 1], [1, 2], ["a", "b"], [[0.2, 0.8], [0.4, 0.6]])
        assert comp[1]["a"] == pytest.approx(0.3) and comp[1]["b"] == pytest.approx(0.7)
        assert missing == []

    def test_single_cell(self):
        comp, _ = region_composition([5], [1], [5], ["a", "b", "c"], [[0.1, 0.2, 0.7]])
        assert comp[1] == pytest.approx({"a": 0.1, "b": 0.2, "c": 0.7})

    def test_matches_summation_oracle(self):
        rng = np.random.default_rng(3)
        f = rng.random((100, 6))
        f /= f.sum(axis=1, keepdims=True)
        comp, _ = region_composition(np.arange(100), np.ones(100, dtype=int), np.arange(100), list("abcdef"), f)
        oracle = [math.fsum(f[i, j] for i in range(100)) / 100 for j in range(6)]
        total = math.fsum(oracle)
        for j, sp in enumerate("abcdef"):
            assert comp[1][sp] == pytest.approx(oracle[j] / total, abs=1e-12)
        assert math.fsum(comp[1].values()) == pytest.approx(1.0, abs=1e-9)

    def test_species_order_irrelevant(self):
        rng = np.random.default_rng(4)
        f = rng.random((30, 4))
        f /= f.sum(axis=1, keepdims=True)
        labels = rng.integers(1, 4, size=30)
        a, _ = region_composition(np.arange(30), labels, np.arange(30), list("wxyz"), f)
        b, _ = region_composition(np.arange(30), labels, np.arange(30), list("zyxw"), f[:, ::-1])
        assert a == b

    def test_missing_reported(self):
        with pytest.warns(MissingComposition):
            comp, missing = region_composition([1, 2, 3], [1, 1, 2], [1], ["a"], [[1.0]])
        assert missing == [2, 3]
        assert comp == {1: {"a": 1.0}}

    def test_bad_sum(self):
        with pytest.raises(DomainError):
            region_composition([1], [1], [1], ["a", "b"], [[0.5, 0.4]])

    def test_weighted(self):
        comp, _ = region_composition(
            [1, 2], [1, 1], [1, 2], ["a", "b"], [[0.0, 1.0], [1.0, 0.0]], weights=[3.0, 1.0]
        )
        assert comp[1]["a"] == pytest.approx(0.25)

    def test_csv(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("cell_id,BC,SO4,total_mass\n1,0.25,0.75,2\n2,0.5,0.5,1\n")
        ids, species, f, w = read_composition_csv(path, "total_mass")
        assert species == ["BC", "SO4"]
        np.testing.assert_array_equal(w, [2.0, 1.0])
        ids, species, f, w = read_composition_csv(path)
        assert w is None and len(species) == 3


class TestMap:
    def test_two_by_two(self, tmp_path):
        lat = [-45, -45, 45, 45]
        lon = [0, 180, 0, 180]
        grid = export_region_map(lat, lon, [1, 1, 2, 0])
        np.testing.assert_array_equal(grid, [[1, 1], [2, 0]])
        path = tmp_path / "map.csv"
        write_map_csv(path, grid)
        assert path.read_text() == "lat_index,lon_index,region\n0,0,1\n0,1,1\n1,0,2\n1,1,0\n"

    def test_all_unassigned(self):
        grid = export_region_map([0, 0, 1, 1], [0, 1, 0, 1], [0, 0, 0, 0])
        assert not grid.any()

    def test_order_independent(self):
        grid = export_region_map([45, -45, 45, -45], [180, 0, 0, 180], [0, 1, 2, 1])
        np.testing.assert_array_equal(grid, [[1, 1], [2, 0]])

    def test_full_grid_size(self, tmp_path):
        from mixzone.synthetic import grid_coordinates

        lat, lon = grid_coordinates(192, 288)
        LA, LO = np.meshgrid(lat, lon, indexing="ij")
        grid = export_region_map(LA.ravel(), LO.ravel(), np.ones(LA.size, dtype=int), 192, 288)
        path = tmp_path / "map.csv"
        write_map_csv(path, grid)
        assert len(path.read_text().splitlines()) == 55296 + 1

    def test_inconsistent(self):
        with pytest.raises(InconsistentGrid):
            export_region_map([0, 0, 1], [0, 1, 0], [1, 1, 1])
        with pytest.raises(InconsistentGrid):
            export_region_map([0, 0], [0, 0], [1, 1])
        with pytest.raises(InconsistentGrid):
            export_region_map([0, 0, 1, 1], [0, 1, 0, 1], [1, 1, 1, 1], n_lat=3)


def test_summary_json_and_report(tmp_path):
    X = np.random.default_rng(5).random((4, 36))
    out = region_monthly_means(feature_set(X, lat=[60, 60, -60, -60]), [1, 1, 2, 2])
    out[0].composition = {"BC": 0.25, "SO4": 0.75}
    path = tmp_path / "s.json"
    write_summary_json(path, out)
    data = json.loads(path.read_text())
    assert [d["region"] for d in data] == [1, 2]
    assert set(data[0]) == {"region", "cell_count", "mean_latitude", "monthly_chi", "composition"}
    assert len(data[0]["monthly_chi"]) == 3 and all(len(v) == 12 for v in data[0]["monthly_chi"])
    assert data[0]["monthly_chi"][0][0] == (X[0, 0] + X[1, 0]) / 2
    assert data[1]["composition"] is None
    text = format_report(out, "percent")
    assert "(index values in percent)" in text
    assert f"{out[0].monthly_chi[:, 0].mean() * 100:6.1f}" in text
