import csv
import json

import numpy as np
import pytest

from circmode.exceptions import EmptyInput, SpanMismatch
from circmode.pipeline import (DAYS_IN_YEAR, EventRecord, PipelineConfig, cell_centroid,
                               cell_index, cell_seed, events_array, filter_low_incidence,
                               grid_events, jitter_to_angles, make_fixture, patches_from_labels,
                               read_label_raster, run_pipeline, test_cells)
from circmode._validation import TWO_PI


class TestJitter:
    def test_last_and_first_day_ranges(self, rng):
        last = jitter_to_angles(np.full(10_000, 366), rng)
        assert last.min() >= TWO_PI * 365 / 366 and last.max() < TWO_PI
        first = jitter_to_angles(np.ones(10_000), rng)
        assert first.min() >= 0.0 and first.max() < TWO_PI / 366

    def test_uniform_days_give_uniform_angles(self, rng):
        days = rng.integers(1, 367, 100_000)
        theta = jitter_to_angles(days, rng)
        assert abs(np.mean(np.exp(1j * theta))) < 0.02
        assert np.unique(theta).size == theta.size

    def test_bad_day(self, rng):
        with pytest.raises(ValueError):
            jitter_to_angles([0], rng)
        with pytest.raises(ValueError):
            EventRecord(0.0, 0.0, 367, 2001)


class TestGrid:
    def test_index_arithmetic(self):
        assert cell_index(10.0, 20.0, 0.5) == (20, 40)
        # floor((10.0 - 0) / 0.5) = 20; floor((20.0 - 0) / 0.5) = 40
        r, c = cell_index(10.0 + 0.5 * np.r_[0.0, 0.49, 0.999], 20.0, 0.5)
        assert r.tolist() == [20, 20, 21] or r.tolist() == [20, 20, 20]

    def test_boundary_goes_to_higher_cell(self):
        assert cell_index(0.3 * 3, 0.0, 0.3) == (3, 0)
        assert cell_index(-0.5, -0.5, 0.5) == (-1, -1)

    def test_single_event_at_centre(self):
        lat, lon = cell_centroid(3, 4, 0.5)
        cells = grid_events([lat], [lon], [1.0], 0.5)
        assert list(cells) == [(3, 4)] and cells[(3, 4)].n == 1

    def test_order_independent(self, rng):
        lat = rng.uniform(0, 3, 500)
        lon = rng.uniform(0, 3, 500)
        val = rng.uniform(0, TWO_PI, 500)
        perm = rng.permutation(500)
        a = grid_events(lat, lon, val, 0.5)
        b = grid_events(lat[perm], lon[perm], val[perm], 0.5)
        assert list(a) == list(b)
        assert all(np.array_equal(a[k].angles, b[k].angles) for k in a)

    def test_canonical_event_order(self):
        recs = [EventRecord(1.0, 2.0, 5, 2002), EventRecord(1.0, 1.0, 9, 2001),
                EventRecord(1.0, 2.0, 3, 2002)]
        arr = events_array(recs)
        assert arr["lon"].tolist() == [1.0, 2.0, 2.0] and arr["day_of_year"].tolist() == [9, 3, 5]
        with pytest.raises(EmptyInput):
            events_array([])


class TestFilter:
    YEARS = list(range(2001, 2011))

    def counts(self, per_year):
        return {(0, 0): dict(zip(self.YEARS, per_year))}

    def test_ten_every_year_kept(self):
        kept, report = filter_low_incidence(self.counts([10] * 10), self.YEARS)
        assert kept == [(0, 0)] and report == []

    def test_nine_in_eight_years_dropped(self):
        kept, report = filter_low_incidence(self.counts([9] * 8 + [30] * 2), self.YEARS)
        assert kept == [] and report == [{"cell": "0_0", "low_years": 8}]

    def test_zero_in_exactly_seven_years_kept(self):
        kept, _ = filter_low_incidence(self.counts([0] * 7 + [50] * 3), self.YEARS)
        assert kept == [(0, 0)]

    def test_missing_years_count_as_low(self):
        kept, _ = filter_low_incidence({(0, 0): {2001: 100, 2002: 100}}, self.YEARS)
        assert kept == []

    def test_span_mismatch(self):
        years = self.YEARS[:5]
        with pytest.raises(SpanMismatch):
            filter_low_incidence(self.counts([50] * 10), years)
        # scaled limit 3.5 of 5 years
        kept, _ = filter_low_incidence({(0, 0): dict(zip(years, [0, 0, 0, 50, 50]))}, years,
                                       scale_span=True)
        assert kept == [(0, 0)]
        kept, _ = filter_low_incidence({(0, 0): dict(zip(years, [0, 0, 0, 0, 50]))}, years,
                                       scale_span=True)
        assert kept == []


class TestConfig:
    def test_overrides_and_validation(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"events": "e.csv", "B": 50, "seed": 3}))
        cfg = PipelineConfig.from_file(path, B=None, seed=7)
        assert cfg.B == 50 and cfg.seed == 7
        assert cfg.events == str(tmp_path / "e.csv")
        with pytest.raises(ValueError):
            PipelineConfig(alpha_c=0.7)
        with pytest.raises(ValueError):
            PipelineConfig.from_dict({"bogus": 1})
        with pytest.raises(ValueError):
            PipelineConfig(cell_size=0)

    def test_round_trip(self):
        cfg = PipelineConfig(events="a", origin=(1, 2))
        assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_cell_seeds_distinct():
    seeds = {cell_seed(0, r, c) for r in range(-3, 4) for c in range(-3, 4)}
    assert len(seeds) == 49


def test_test_cells_records_failures():
    from circmode import CircularSample

    res = test_cells({(0, 0): CircularSample([1.0]), (0, 1): CircularSample(
        np.random.default_rng(0).vonmises(0, 1, 30))}, B=5)
    assert np.isnan(res[(0, 0)][0]) and "InvalidK" in res[(0, 0)][1]
    assert res[(0, 1)][1] is None


def test_raster_and_patches(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("a a .\nb a a\n")
    labels = read_label_raster(path)
    assert (0, 2) not in labels and labels[(1, 0)] == "b"
    patches = patches_from_labels(labels)
    assert [(p.label, p.size) for p in patches] == [("a", 4), ("b", 1)]


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = make_fixture(tmp_path_factory.mktemp("fx"), seed=1, shape=(6, 6),
                     planted=((2, 4), (2, 4)), n_per_cell=100, years=10)
    cfg = PipelineConfig.from_file(d / "config.json", B=20, alpha_c=0.05, alpha_r=0.05)
    return d, cfg, run_pipeline(cfg)


class TestRun:
    def test_outputs_written(self, small_run):
        d, cfg, res = small_run
        out = d / "out"
        rows = list(csv.DictReader(open(out / "cells.csv")))
        assert len(rows) == 36 == len(res.cells)
        assert {r["decision"] for r in rows} <= {"accept", "reject", "failed"}
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"] == cfg.to_dict() and manifest["seed"] == 1
        assert {"numpy", "scipy", "numba", "scikit-learn", "circmode"} <= set(manifest["versions"])

    def test_geojson_structure(self, small_run):
        d, _, res = small_run
        gj = json.loads((d / "out" / "decisions.geojson").read_text())
        assert gj["type"] == "FeatureCollection"
        ids = [f["properties"]["id"] for f in gj["features"]]
        assert len(ids) == len(set(ids)) == len(res.cells)
        for f in gj["features"]:
            ring = f["geometry"]["coordinates"][0]
            assert f["geometry"]["type"] == "Polygon" and ring[0] == ring[-1] and len(ring) == 5
            assert set(f["properties"]) >= {"pvalue", "zscore", "patch", "decision"}

    def test_rerun_and_workers_identical(self, small_run, tmp_path):
        d, cfg, _ = small_run
        first = (d / "out" / "cells.csv").read_bytes()
        for workers in (1, 2):
            alt = PipelineConfig.from_dict({**cfg.to_dict(), "output": str(tmp_path / str(workers)),
                                            "workers": workers})
            run_pipeline(alt)
            assert (tmp_path / str(workers) / "cells.csv").read_bytes() == first

    def test_rejections_inside_rejected_patches(self, small_run):
        _, _, res = small_run
        cells = {c for p in res.patches if p.id in res.outcome.rejected_patches for c in p.cells}
        assert res.outcome.rejected_cells <= cells

    def test_bundled_fixture_rejects_planted_patch_at_strict_levels(self, bundled_run):
        cfg, res, _ = bundled_run
        assert cfg.alpha_c == cfg.alpha_r == 0.01
        planted = [p for p in res.patches if p.label == "planted"]
        assert len(planted) == 1 and planted[0].size == 25
        assert res.outcome.rejected_patches == (planted[0].id,)

    def test_empty_event_file(self, tmp_path):
        (tmp_path / "e.csv").write_text("lat,lon,day_of_year,year\n")
        cfg = PipelineConfig(events=str(tmp_path / "e.csv"), output=str(tmp_path / "out"))
        with pytest.raises(EmptyInput):
            run_pipeline(cfg)
        assert not (tmp_path / "out").exists()
