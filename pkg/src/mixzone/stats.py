"""Per-region summaries: monthly index curves, bulk composition, gridded map."""

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyRegion, FormatError, InconsistentGrid, MissingComposition
from .features import INDEX_NAMES, N_MONTHS, GridFeatureSet

MAP_HEADER = ("lat_index", "lon_index", "region")
COMPOSITION_SUM_TOL = 1e-6
MONTH_ABBR = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


@dataclass
class RegionSummary:
    region_id: int
    cell_count: int
    monthly_chi: np.ndarray  # (12, 3): rows Jan..Dec, columns chi_a, chi_o, chi_h
    mean_latitude: float
    composition: dict | None = None

    def to_json(self):
        return {
            "region": int(self.region_id),
            "cell_count": int(self.cell_count),
            "mean_latitude": float(self.mean_latitude),
            "monthly_chi": [[float(v) for v in self.monthly_chi[:, s]] for s in range(len(INDEX_NAMES))],
            "composition": None
            if self.composition is None
            else {sp: float(v) for sp, v in self.composition.items()},
        }


def _check_labels(fs: GridFeatureSet, regions):
    regions = np.asarray(regions, dtype=np.int64)
    if regions.shape != (fs.n_cells,):
        raise DomainError(f"{regions.size} labels for {fs.n_cells} cells")
    bad = np.flatnonzero((regions > 0) != fs.valid)
    if bad.size:
        i = int(bad[0])
        raise DomainError(
            f"labels must cover exactly the valid cells; cell {int(fs.cell_ids[i])} "
            f"has region {int(regions[i])} but valid={bool(fs.valid[i])}"
        )
    ids = np.unique(regions[regions > 0])
    if ids.size:
        expected = np.arange(1, int(ids.max()) + 1)
        missing = np.setdiff1d(expected, ids)
        if missing.size:
            raise EmptyRegion(f"region {int(missing[0])} has no cells")
    return regions, ids


def region_monthly_means(fs: GridFeatureSet, regions):
    """One RegionSummary per region id with the unweighted mean monthly curves.

    ``regions`` gives a region id per cell of ``fs`` (0 for unclustered cells).
    """
    regions, ids = _check_labels(fs, regions)
    out = []
    for r in ids:
        members = regions == r
        mean = fs.features[members].mean(axis=0)
        monthly = mean.reshape(len(INDEX_NAMES), N_MONTHS).T.copy()
        lat = math.fsum(fs.lat[members]) / int(members.sum())
        out.append(RegionSummary(int(r), int(members.sum()), monthly, lat))
    return out


def region_composition(cell_ids, regions, comp_ids, species, fractions, weights=None):
    """Mean per-cell species mass fractions of each region, renormalised to sum to 1.

    Returns ``(composition, missing)``: ``composition`` maps region id to
    ``{species: fraction}`` (regions without any composition row are absent)
    and ``missing`` lists labelled cell ids that had no composition row. With
    ``weights`` (per composition row, e.g. total aerosol mass) the mean is
    weighted instead of plain.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    comp_ids = np.asarray(comp_ids, dtype=np.int64)
    if fractions.shape != (comp_ids.size, len(species)):
        raise DomainError("composition matrix does not match ids and species")
    if np.any(fractions < 0) or not np.all(np.isfinite(fractions)):
        raise DomainError("composition fractions must be finite and nonnegative")
    sums = np.array([math.fsum(row) for row in fractions])
    off = np.flatnonzero(np.abs(sums - 1.0) > COMPOSITION_SUM_TOL)
    if off.size:
        i = int(off[0])
        raise DomainError(f"composition of cell {int(comp_ids[i])} sums to {sums[i]!r}, not 1")
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != comp_ids.shape or np.any(weights < 0):
            raise DomainError("composition weights must be nonnegative, one per row")
    row_of = {int(c): i for i, c in enumerate(comp_ids)}
    cell_ids = np.asarray(cell_ids, dtype=np.int64)
    regions = np.asarray(regions, dtype=np.int64)
    missing = []
    composition = {}
    for r in np.unique(regions[regions > 0]):
        rows = []
        for cid in cell_ids[regions == r]:
            i = row_of.get(int(cid))
            if i is None:
                missing.append(int(cid))
            else:
                rows.append(i)
        if not rows:
            continue
        block = fractions[rows]
        if weights is None:
            mean = [math.fsum(col) / len(rows) for col in block.T]
        else:
            wt = weights[rows]
            total = math.fsum(wt)
            if total <= 0:
                continue
            mean = [math.fsum(col * wt) / total for col in block.T]
        norm = math.fsum(mean)
        composition[int(r)] = {sp: m / norm for sp, m in zip(species, mean)}
    if missing:
        warnings.warn(
            f"{len(missing)} labelled cells have no composition row (first: {missing[0]})",
            MissingComposition,
            stacklevel=2,
        )
    return composition, sorted(missing)


def export_region_map(lat, lon, regions, n_lat=None, n_lon=None):
    """Dense ``(n_lat, n_lon)`` region grid, latitude ascending, 0 for unassigned cells.

    Grid coordinates are the sorted distinct cell latitudes and longitudes;
    every grid position must be covered by exactly one cell.
    """
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    regions = np.asarray(regions, dtype=np.int64)
    lats = np.unique(lat)
    lons = np.unique(lon)
    if n_lat is not None and lats.size != n_lat:
        raise InconsistentGrid(f"cells span {lats.size} latitudes, grid declares {n_lat}")
    if n_lon is not None and lons.size != n_lon:
        raise InconsistentGrid(f"cells span {lons.size} longitudes, grid declares {n_lon}")
    grid = np.zeros((lats.size, lons.size), dtype=np.int64)
    if lat.size != lats.size * lons.size:
        raise InconsistentGrid(f"{lat.size} cells do not tile a {lats.size}x{lons.size} grid")
    i = np.searchsorted(lats, lat)
    j = np.searchsorted(lons, lon)
    flat = i * lons.size + j
    if np.unique(flat).size != flat.size:
        raise InconsistentGrid("two cells share a grid position")
    grid.reshape(-1)[flat] = regions
    return grid


def write_map_csv(path, grid):
    n_lat, n_lon = grid.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MAP_HEADER)
        for i in range(n_lat):
            for j in range(n_lon):
                writer.writerow([i, j, int(grid[i, j])])


def write_summary_json(path, summaries):
    with open(path, "w") as fh:
        json.dump([s.to_json() for s in summaries], fh, indent=2)
        fh.write("\n")


def read_composition_csv(path, weight_column=None):
    """Returns ``(cell_ids, species, fractions, weights)`` from ``cell_id,<species>...``.

    ``weight_column`` names an optional per-cell weight column (e.g. total
    aerosol mass) that is split off from the species columns.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0].strip() != "cell_id":
            raise FormatError(f"{path} row 1: header must be 'cell_id,<species>...'")
        header = [h.strip() for h in header]
        wcol = None
        if weight_column is not None:
            if weight_column not in header[1:]:
                raise FormatError(f"{path} row 1: no weight column {weight_column!r}")
            wcol = header.index(weight_column)
        scols = [c for c in range(1, len(header)) if c != wcol]
        species = [header[c] for c in scols]
        if len(set(species)) != len(species):
            raise FormatError(f"{path} row 1: duplicate species columns")
        ids, fracs, weights = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != len(header):
                    raise ValueError(f"expected {len(header)} fields, got {len(row)}")
                ids.append(int(row[0]))
                fracs.append([float(row[c]) for c in scols])
                if wcol is not None:
                    weights.append(float(row[wcol]))
            except ValueError as exc:
                raise FormatError(f"{path} row {lineno}: {exc}") from None
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate cell_id")
    fr = np.array(fracs, dtype=np.float64).reshape(-1, len(species))
    return np.array(ids, dtype=np.int64), species, fr, (np.array(weights) if wcol is not None else None)


def format_report(summaries, unit="percent"):
    """Plain-text table of annual-mean and min/max monthly indices per region."""
    if unit not in ("percent", "fraction"):
        raise ValueError("unit must be 'percent' or 'fraction'")
    scale = 100.0 if unit == "percent" else 1.0
    fmt = (lambda v: f"{v * scale:6.1f}") if unit == "percent" else (lambda v: f"{v:6.3f}")
    lines = [
        f"{'region':>6} {'cells':>7} {'mean_lat':>8}  "
        + "  ".join(f"{name + ' mean/min/max':>20}" for name in INDEX_NAMES)
    ]
    for s in summaries:
        cols = []
        for k in range(len(INDEX_NAMES)):
            m = s.monthly_chi[:, k]
            cols.append(f"{fmt(m.mean())} {fmt(m.min())} {fmt(m.max())}")
        lines.append(f"{s.region_id:>6} {s.cell_count:>7} {s.mean_latitude:8.2f}  " + "  ".join(cols))
        if s.composition:
            comp = ", ".join(f"{sp} {v * scale:.1f}" if unit == "percent" else f"{sp} {v:.3f}"
                             for sp, v in s.composition.items())
            lines.append(f"{'':>6} composition: {comp}")
    lines.append(f"(index values in {unit})")
    return "\n".join(lines) + "\n"
