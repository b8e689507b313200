"""End-to-end seasonality mapping: events to per-cell tests to FDR decisions.

Steps: events are sorted into a canonical order and their days jittered to
angles, binned into grid cells, filtered for low incidence, tested cell by
cell, grouped into land-cover patches and passed to the hierarchical FDR
procedure.  Every random stream is keyed by the master seed and the cell
indices, so outputs do not depend on input order or worker count.
"""

import csv
import json
import logging
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import TWO_PI, child_rng
from .circular import CircularSample
from .exceptions import CircModeError, EmptyInput, SpanMismatch
from .models import get_model
from .modetest import excess_mass_test
from .spatial import Cell, build_patches, cell_id, hierarchical_test

log = logging.getLogger(__name__)

DAYS_IN_YEAR = 366
BOUNDARY_EPS = 1e-9
DEFAULT_LABEL = "all"
PATH_KEYS = ("events", "labels", "output")


@dataclass(frozen=True)
class EventRecord:
    """One dated event at a location (degrees)."""

    lat: float
    lon: float
    day_of_year: int
    year: int

    def __post_init__(self):
        if not 1 <= int(self.day_of_year) <= DAYS_IN_YEAR:
            raise ValueError(f"day_of_year must lie in 1..366, got {self.day_of_year}")


@dataclass
class PipelineConfig:
    """Parameters of one pipeline run; ``from_file`` reads JSON."""

    events: str = ""
    labels: str = ""
    output: str = "out"
    cell_size: float = 0.5
    origin: tuple = (0.0, 0.0)
    k: int = 1
    B: int = 200
    alpha_c: float = 0.01
    alpha_r: float = 0.01
    seed: int = 0
    min_count: int = 10
    max_low_years: int = 7
    year_span: int = 10
    scale_span: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        for name in ("alpha_c", "alpha_r"):
            if not 0.0 < getattr(self, name) <= 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5]")
        self.origin = tuple(float(x) for x in self.origin)

    @classmethod
    def from_dict(cls, data, **overrides):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)

    @classmethod
    def from_file(cls, path, **overrides):
        """Read JSON; relative paths in the file are taken from its directory."""
        with open(path) as fh:
            data = json.load(fh)
        base = Path(path).parent
        for key in PATH_KEYS:
            if data.get(key):
                data[key] = os.fspath(base / data[key])
        return cls.from_dict(data, **overrides)

    def to_dict(self):
        out = asdict(self)
        out["origin"] = list(self.origin)
        return out


# ---------------------------------------------------------------------------
# inputs


def read_events(path):
    """Events CSV with columns ``lat, lon, day_of_year, year``.

    Returns a structured array sorted in canonical order.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptyInput(f"no events in {path}")
    recs = [EventRecord(float(r["lat"]), float(r["lon"]), int(r["day_of_year"]),
                        int(r["year"])) for r in rows]
    return events_array(recs)


def events_array(records):
    """Structured array of events in canonical ``(lat, lon, year, day)`` order."""
    dtype = [("lat", float), ("lon", float), ("day_of_year", int), ("year", int)]
    arr = np.array([(r.lat, r.lon, r.day_of_year, r.year) for r in records], dtype=dtype)
    if arr.size == 0:
        raise EmptyInput("no events")
    return np.sort(arr, order=["lat", "lon", "year", "day_of_year"])


def read_labels(path):
    """Labels CSV with columns ``row, col, label``; returns ``{(row, col): label}``."""
    with open(path, newline="") as fh:
        return {(int(r["row"]), int(r["col"])): r["label"] for r in csv.DictReader(fh)}


def read_label_raster(path):
    """Whitespace-separated label raster, one grid row per line; ``.`` is no data."""
    with open(path) as fh:
        rows = [line.split() for line in fh if line.strip()]
    return {(i, j): v for i, row in enumerate(rows) for j, v in enumerate(row) if v != "."}


# ---------------------------------------------------------------------------
# steps


def jitter_to_angles(days, rng):
    """``2 pi (day + e) / 366`` with ``e ~ U(-1, 0)``, in [0, 2pi)."""
    days = np.asarray(days, float)
    if days.size and (days.min() < 1 or days.max() > DAYS_IN_YEAR):
        raise ValueError("days must lie in 1..366")
    eps = rng.uniform(-1.0, 0.0, size=days.shape)
    out = TWO_PI * (days + eps) / DAYS_IN_YEAR
    return np.where(out >= TWO_PI, 0.0, out)


def cell_index(lat, lon, cell_size, origin=(0.0, 0.0)):
    """Floor-binned ``(row, col)``; points on a boundary go to the higher cell."""
    row = np.floor((np.asarray(lat, float) - origin[0]) / cell_size + BOUNDARY_EPS)
    col = np.floor((np.asarray(lon, float) - origin[1]) / cell_size + BOUNDARY_EPS)
    return row.astype(int), col.astype(int)


def cell_centroid(row, col, cell_size, origin=(0.0, 0.0)):
    return (origin[0] + (row + 0.5) * cell_size, origin[1] + (col + 0.5) * cell_size)


def grid_events(lat, lon, values, cell_size, origin=(0.0, 0.0)):
    """Group ``values`` by grid cell; returns ``{(row, col): CircularSample}``."""
    rows, cols = cell_index(lat, lon, cell_size, origin)
    values = np.asarray(values, float)
    out = {}
    for key in sorted(set(zip(rows.tolist(), cols.tolist()))):
        sel = (rows == key[0]) & (cols == key[1])
        out[key] = CircularSample(np.sort(values[sel]))
    return out


def yearly_counts(events, cell_size, origin=(0.0, 0.0)):
    """``{(row, col): {year: count}}``."""
    rows, cols = cell_index(events["lat"], events["lon"], cell_size, origin)
    out = {}
    for r, c, y in zip(rows.tolist(), cols.tolist(), events["year"].tolist()):
        d = out.setdefault((r, c), {})
        d[y] = d.get(y, 0) + 1
    return out


def filter_low_incidence(counts, years, min_count=10, max_low_years=7, span=10,
                         scale_span=False):
    """Cells to keep, and a report of dropped cells.

    A cell is dropped when more than ``max_low_years`` of the observed
    ``years`` have fewer than ``min_count`` events.  When the number of
    years differs from ``span`` :class:`SpanMismatch` is raised, unless
    ``scale_span``, which scales ``max_low_years`` proportionally.
    """
    years = sorted(set(years))
    limit = max_low_years
    if len(years) != span:
        if not scale_span:
            raise SpanMismatch(f"data cover {len(years)} years, configured span is {span}")
        limit = max_low_years * len(years) / span
        log.warning("year span %d != %d; low-year limit scaled to %.2f",
                    len(years), span, limit)
    kept, dropped = [], []
    for key in sorted(counts):
        low = sum(1 for y in years if counts[key].get(y, 0) < min_count)
        (dropped if low > limit else kept).append(key)
        if low > limit:
            log.info("dropping cell %s: %d low years", key, low)
    report = [{"cell": cell_id(*key), "low_years": sum(
        1 for y in years if counts[key].get(y, 0) < min_count)} for key in dropped]
    return kept, report


def _zigzag(x):
    return 2 * x if x >= 0 else -2 * x - 1


def cell_seed(seed, row, col):
    """Bootstrap seed of one cell, independent of scheduling."""
    return int(child_rng(seed, _zigzag(row), _zigzag(col), 1).integers(0, 2**62))


def _test_chunk(items, k, B, seed):
    out = []
    for key, sample in items:
        try:
            res = excess_mass_test(sample, k, B=B, random_state=cell_seed(seed, *key))
            out.append((key, res.pvalue, None))
        except (CircModeError, ValueError) as exc:
            out.append((key, float("nan"), f"{type(exc).__name__}: {exc}"))
    return out


def test_cells(samples, k=1, B=200, seed=0, workers=1):
    """Excess-mass p-values of every cell; failures give NaN and a message.

    Returns ``{key: (pvalue, error or None)}``.
    """
    items = sorted(samples.items())
    workers = max(1, int(workers))
    if workers == 1 or len(items) < 2:
        res = _test_chunk(items, k, B, seed)
    else:
        parts = [items[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_test_chunk, p, k, B, seed) for p in parts if p]
            res = [r for f in futs for r in f.result()]
    return {key: (p, err) for key, p, err in sorted(res)}


test_cells.__test__ = False  # not a pytest function


# ---------------------------------------------------------------------------
# outputs


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))


def _decision(key, outcome, failed):
    if key in failed:
        return "failed"
    return "reject" if key in outcome.rejected_cells else "accept"


def write_cells_csv(path, cells, patch_of, outcome, failed):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "row", "col", "lat", "lon", "n", "pvalue", "zscore",
                    "patch", "conditional_pvalue", "decision"])
        for key in sorted(cells):
            c = cells[key]
            w.writerow([c.id, c.row, c.col, _fmt(c.centroid[0]), _fmt(c.centroid[1]), c.n,
                        _fmt(c.pvalue), _fmt(c.zscore if key in outcome.zscores else None),
                        patch_of.get(key, ""), _fmt(outcome.conditional_pvalues.get(key)),
                        _decision(key, outcome, failed)])


def geojson_features(cells, patch_of, outcome, failed, cell_size):
    feats = []
    half = cell_size / 2.0
    for key in sorted(cells):
        c = cells[key]
        lat, lon = c.centroid
        ring = [[lon - half, lat - half], [lon + half, lat - half], [lon + half, lat + half],
                [lon - half, lat + half], [lon - half, lat - half]]
        props = {"id": c.id, "row": c.row, "col": c.col, "n": c.n,
                 "pvalue": None if np.isnan(c.pvalue) else c.pvalue,
                 "zscore": outcome.zscores.get(key), "patch": patch_of.get(key),
                 "conditional_pvalue": outcome.conditional_pvalues.get(key),
                 "decision": _decision(key, outcome, failed)}
        feats.append({"type": "Feature", "geometry": {"type": "Polygon", "coordinates": [ring]},
                      "properties": props})
    return {"type": "FeatureCollection", "features": feats}


def write_patches_csv(path, patches, offset=(0, 0)):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patch", "label", "size", "row", "col"])
        for p in patches:
            for r, c in p.cells:
                w.writerow([p.id, p.label, p.size, r + offset[0], c + offset[1]])


def patches_from_labels(labels, keep=None):
    """Patches over a ``{(row, col): label}`` map, in absolute cell indices."""
    keys = [k for k in labels if keep is None or k in keep]
    if not keys:
        return []
    r0 = min(k[0] for k in keys)
    c0 = min(k[1] for k in keys)
    nr = max(k[0] for k in keys) - r0 + 1
    nc = max(k[1] for k in keys) - c0 + 1
    grid = np.full((nr, nc), None, dtype=object)
    for r, c in keys:
        grid[r - r0, c - c0] = labels[(r, c)]
    out = []
    for p in build_patches(grid):
        cells = tuple((r + r0, c + c0) for r, c in p.cells)
        out.append(type(p)(p.id, cells, p.label))
    return out


@dataclass
class PipelineResult:
    outcome: object
    cells: dict
    patches: list
    failed: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)


def _versions():
    import numba
    import scipy
    import sklearn
    return {"circmode": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "scikit-learn": sklearn.__version__}


def run_pipeline(config):
    """Run all steps and write ``cells.csv``, ``decisions.geojson``, ``manifest.json``.

    Returns
    -------
    PipelineResult
    """
    cfg = config
    events = read_events(cfg.events)
    angles = jitter_to_angles(events["day_of_year"], child_rng(cfg.seed, 0))
    samples = grid_events(events["lat"], events["lon"], angles, cfg.cell_size, cfg.origin)
    counts = yearly_counts(events, cfg.cell_size, cfg.origin)
    kept, dropped = filter_low_incidence(counts, events["year"].tolist(), cfg.min_count,
                                         cfg.max_low_years, cfg.year_span, cfg.scale_span)
    tested = test_cells({k: samples[k] for k in kept}, cfg.k, cfg.B, cfg.seed, cfg.workers)
    failed = {k: err for k, (p, err) in tested.items() if err is not None}
    for key, err in failed.items():
        log.warning("cell %s excluded: %s", cell_id(*key), err)
    cells = {}
    for key in kept:
        cells[key] = Cell(row=key[0], col=key[1],
                          centroid=cell_centroid(*key, cfg.cell_size, cfg.origin),
                          pvalue=tested[key][0], n=samples[key].n)
    labels = read_labels(cfg.labels) if cfg.labels else {k: DEFAULT_LABEL for k in kept}
    usable = {k for k in kept if k not in failed}
    patches = patches_from_labels(labels, keep=usable)
    patch_of = {c: p.id for p in patches for c in p.cells}
    outcome = hierarchical_test(cells, patches, cfg.alpha_c, cfg.alpha_r, B=cfg.B,
                                rng=child_rng(cfg.seed, 2))
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_cells_csv(out / "cells.csv", cells, patch_of, outcome, failed)
    with open(out / "decisions.geojson", "w") as fh:
        json.dump(geojson_features(cells, patch_of, outcome, failed, cfg.cell_size), fh,
                  indent=1, sort_keys=True)
    vg = outcome.variogram
    manifest = {
        "config": cfg.to_dict(), "seed": cfg.seed, "versions": _versions(),
        "n_events": int(events.size), "n_cells": len(samples), "n_kept": len(kept),
        "dropped": dropped, "failed": {cell_id(*k): v for k, v in sorted(failed.items())},
        "n_patches": len(patches),
        "rejected_patches": list(outcome.rejected_patches), "cutoff": outcome.cutoff,
        "n_rejected_cells": len(outcome.rejected_cells),
        "variogram": None if vg is None else asdict(vg),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return PipelineResult(outcome, cells, patches, failed, dropped)


# ---------------------------------------------------------------------------
# synthetic fixture


def make_fixture(directory, seed=0, shape=(20, 20), planted=((8, 13), (8, 13)),
                 n_per_cell=200, years=10, background="M1", planted_model="M11",
                 origin=(40.0, -5.0), cell_size=0.5):
    """Write a synthetic ``events.csv`` and ``labels.csv`` plus a ``config.json``.

    Paths in ``config.json`` are relative to ``directory``.

    Cells in the ``planted`` row/column ranges draw their days from
    ``planted_model`` and carry their own label; all others follow
    ``background``.  Each cell has ``n_per_cell`` events spread evenly over
    ``years`` years.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (r_lo, r_hi), (c_lo, c_hi) = planted
    row0, col0 = cell_index(origin[0], origin[1], cell_size)
    rows = []
    labels = []
    for i in range(shape[0]):
        for j in range(shape[1]):
            inside = r_lo <= i < r_hi and c_lo <= j < c_hi
            model = get_model(planted_model if inside else background)
            theta = model.sample(n_per_cell, child_rng(seed, i, j)).angles
            days = np.clip(np.ceil(theta * DAYS_IN_YEAR / TWO_PI), 1, DAYS_IN_YEAR).astype(int)
            r, c = int(row0) + i, int(col0) + j
            lat, lon = cell_centroid(r, c, cell_size)
            for m, day in enumerate(days.tolist()):
                rows.append((lat, lon, day, 2001 + m % years))
            labels.append((r, c, "planted" if inside else "background"))
    with open(d / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat", "lon", "day_of_year", "year"])
        w.writerows(rows)
    with open(d / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "label"])
        w.writerows(labels)
    cfg = {"events": "events.csv", "labels": "labels.csv", "output": "out",
           "cell_size": cell_size, "year_span": years, "seed": seed}
    with open(d / "config.json", "w") as fh:
        json.dump(cfg, fh, indent=1, sort_keys=True)
    return d
