"""Per-cell index time series, monthly means, and 36-wide feature vectors.

Feature layout (fixed)::

    columns  0..11  chi_a  Jan..Dec
    columns 12..23  chi_o  Jan..Dec
    columns 24..35  chi_h  Jan..Dec
"""

import csv
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import ConfigError, DuplicateTimestamp, FormatError, RangeError

INDEX_NAMES = ("chi_a", "chi_o", "chi_h")
N_MONTHS = 12
N_FEATURES = N_MONTHS * len(INDEX_NAMES)
LAYOUT = "chi_a[Jan..Dec],chi_o[Jan..Dec],chi_h[Jan..Dec]"
RANGE_SLACK = 1e-9

SERIES_HEADER = ("cell_id", "lat", "lon", "time", *INDEX_NAMES)
FEATURE_HEADER = ("cell_id", "lat", "lon", "valid", *(f"f{i:02d}" for i in range(N_FEATURES)))


def feature_column(index, month):
    """Column of ``index`` ('chi_a' / 'chi_o' / 'chi_h' or 0..2) for calendar ``month`` 1..12."""
    s = INDEX_NAMES.index(index) if isinstance(index, str) else int(index)
    if not 1 <= month <= N_MONTHS:
        raise ValueError(f"month must be 1..12, got {month}")
    return s * N_MONTHS + (month - 1)


@dataclass(frozen=True)
class CellIndexSeries:
    cell_id: int
    lat: float
    lon: float
    times: np.ndarray = field(repr=False)  # datetime64[s], strictly increasing
    values: np.ndarray = field(repr=False)  # (n_samples, 3), NaN = missing

    def __len__(self):
        return self.times.shape[0]

    def months(self):
        """Calendar month (1..12) of every sample."""
        return self.times.astype("datetime64[M]").astype(np.int64) % 12 + 1


@dataclass(frozen=True)
class GridFeatureSet:
    cell_ids: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    features: np.ndarray
    valid: np.ndarray
    layout: str = LAYOUT

    def __post_init__(self):
        n = len(self.cell_ids)
        if self.features.shape != (n, N_FEATURES):
            raise ValueError(f"features must have shape ({n}, {N_FEATURES}), got {self.features.shape}")
        if not (len(self.lat) == len(self.lon) == len(self.valid) == n):
            raise ValueError("cell metadata arrays differ in length")

    @property
    def n_cells(self):
        return len(self.cell_ids)

    @property
    def n_valid(self):
        return int(np.count_nonzero(self.valid))

    def valid_features(self):
        return self.features[self.valid]

    def with_features(self, features):
        return GridFeatureSet(self.cell_ids, self.lat, self.lon, features, self.valid, self.layout)


# ---------------------------------------------------------------------------
# ingestion


def parse_time(text):
    """ISO-8601 instant to ``datetime64[s]`` in UTC; naive stamps are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt, "s")


def format_time(t):
    return str(np.datetime64(t, "s")) + "Z"


def _parse_chi(text, where):
    text = text.strip()
    if not text:
        return math.nan
    try:
        v = float(text)
    except ValueError:
        raise FormatError(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise FormatError(f"{where}: non-finite index value {text!r}")
    if v < -RANGE_SLACK or v > 1.0 + RANGE_SLACK:
        raise RangeError(f"{where}: index value {v} outside [0, 1]")
    return min(max(v, 0.0), 1.0)


def ingest_index_series(source, name=None):
    """Group series-CSV rows into one time-sorted CellIndexSeries per cell.

    ``source`` is a path or an open text stream with the header
    ``cell_id,lat,lon,time,chi_a,chi_o,chi_h``. Returns series sorted by cell_id.
    """
    if hasattr(source, "read"):
        return _ingest(source, name or getattr(source, "name", "<stream>"))
    with open(source, newline="") as fh:
        return _ingest(fh, name or str(source))


def _ingest(fh, name):
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != SERIES_HEADER:
        raise FormatError(f"{name} row 1: header must be {','.join(SERIES_HEADER)}")
    cells = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        where = f"{name} row {lineno}"
        if len(row) != len(SERIES_HEADER):
            raise FormatError(f"{where}: expected {len(SERIES_HEADER)} fields, got {len(row)}")
        try:
            cell_id = int(row[0])
            lat = float(row[1])
            lon = float(row[2])
        except ValueError as exc:
            raise FormatError(f"{where}: {exc}") from None
        try:
            t = parse_time(row[3])
        except ValueError:
            raise FormatError(f"{where}: bad ISO-8601 time {row[3]!r}") from None
        if not -90.0 <= lat <= 90.0:
            raise RangeError(f"{where}: latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon < 360.0:
            raise RangeError(f"{where}: longitude {lon} outside [-180, 360)")
        chis = [_parse_chi(v, where) for v in row[4:]]
        entry = cells.get(cell_id)
        if entry is None:
            entry = cells[cell_id] = (lat, lon, [], [])
        elif entry[0] != lat or entry[1] != lon:
            raise FormatError(f"{where}: cell {cell_id} changes coordinates")
        entry[2].append(t)
        entry[3].append((chis, lineno))

    out = []
    for cell_id in sorted(cells):
        lat, lon, times, samples = cells[cell_id]
        times = np.array(times, dtype="datetime64[s]")
        order = np.argsort(times, kind="stable")
        times = times[order]
        dup = np.flatnonzero(times[1:] == times[:-1])
        if dup.size:
            rows = (samples[order[dup[0]]][1], samples[order[dup[0] + 1]][1])
            raise DuplicateTimestamp(
                f"{name} rows {rows[0]} and {rows[1]}: cell {cell_id} repeats time {format_time(times[dup[0]])}"
            )
        values = np.array([samples[i][0] for i in order], dtype=np.float64).reshape(-1, len(INDEX_NAMES))
        out.append(CellIndexSeries(cell_id, lat, lon, times, values))
    return out


def write_series_csv(path, series):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_HEADER)
        for s in series:
            for t, vals in zip(s.times, s.values):
                writer.writerow(
                    [s.cell_id, _fmt(s.lat), _fmt(s.lon), format_time(t), *(_fmt(v) for v in vals)]
                )


# ---------------------------------------------------------------------------
# monthly averaging

_MIN_COUNT = re.compile(r"^min_count\s*=\s*(\d+)$")


def parse_missing_policy(policy):
    """``'strict'`` or ``'min_count=N'`` to the minimum number of defined samples per month."""
    if isinstance(policy, int):
        count = policy
    elif policy == "strict":
        count = 1
    else:
        m = _MIN_COUNT.match(str(policy).strip())
        if not m:
            raise ConfigError(f"missing-data policy must be 'strict' or 'min_count=N', got {policy!r}")
        count = int(m.group(1))
    if count < 1:
        raise ConfigError("min_count must be at least 1")
    return count


def monthly_average(series: CellIndexSeries, policy="strict") -> np.ndarray:
    """12x3 matrix of monthly means (rows Jan..Dec, columns chi_a/chi_o/chi_h).

    Entries with fewer defined samples than the policy requires are NaN.
    Samples from every year that falls in the series are pooled by calendar month.
    """
    min_count = parse_missing_policy(policy)
    out = np.full((N_MONTHS, len(INDEX_NAMES)), np.nan)
    if len(series) == 0:
        return out
    months = series.months()
    for m in range(1, N_MONTHS + 1):
        block = series.values[months == m]
        for s in range(len(INDEX_NAMES)):
            vals = block[:, s]
            vals = vals[~np.isnan(vals)]
            if vals.size < min_count:
                continue
            mean = math.fsum(vals) / vals.size
            out[m - 1, s] = min(max(mean, vals.min()), vals.max())
    return out


def assemble_features(monthly) -> GridFeatureSet:
    """Stack per-cell monthly matrices into a GridFeatureSet.

    ``monthly`` is an iterable of ``(cell_id, lat, lon, matrix12x3)``. Cells are
    sorted by cell_id; a cell with any NaN entry is marked invalid.
    """
    rows = sorted(monthly, key=lambda r: int(r[0]))
    n = len(rows)
    ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    if n and np.any(ids[1:] == ids[:-1]):
        raise FormatError("duplicate cell_id in monthly input")
    lat = np.array([float(r[1]) for r in rows], dtype=np.float64)
    lon = np.array([float(r[2]) for r in rows], dtype=np.float64)
    features = np.empty((n, N_FEATURES))
    for i, r in enumerate(rows):
        m = np.asarray(r[3], dtype=np.float64)
        if m.shape != (N_MONTHS, len(INDEX_NAMES)):
            raise ValueError(f"cell {ids[i]}: monthly matrix must be 12x3, got {m.shape}")
        features[i] = m.T.reshape(-1)
    valid = ~np.isnan(features).any(axis=1) if n else np.zeros(0, dtype=bool)
    return GridFeatureSet(ids, lat, lon, features, valid)


def build_features(series, policy="strict") -> GridFeatureSet:
    return assemble_features((s.cell_id, s.lat, s.lon, monthly_average(s, policy)) for s in series)


# ---------------------------------------------------------------------------
# feature CSV


def _fmt(v):
    return "" if math.isnan(v) else format(float(v), ".17g")


def write_features_csv(path, fs: GridFeatureSet):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_HEADER)
        for i in range(fs.n_cells):
            writer.writerow(
                [
                    int(fs.cell_ids[i]),
                    _fmt(fs.lat[i]),
                    _fmt(fs.lon[i]),
                    int(bool(fs.valid[i])),
                    *(_fmt(v) for v in fs.features[i]),
                ]
            )


def read_features_csv(path) -> GridFeatureSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FEATURE_HEADER:
            raise FormatError(f"{path} row 1: header must be cell_id,lat,lon,valid,f00..f35")
        ids, lat, lon, valid, feats = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path} row {lineno}"
            if len(row) != len(FEATURE_HEADER):
                raise FormatError(f"{where}: expected {len(FEATURE_HEADER)} fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
                lat.append(float(row[1]))
                lon.append(float(row[2]))
                flag = row[3].strip()
                if flag not in ("0", "1"):
                    raise ValueError(f"valid flag must be 0 or 1, got {flag!r}")
                values = [float(v) if v.strip() else math.nan for v in row[4:]]
            except ValueError as exc:
                raise FormatError(f"{where}: {exc}") from None
            if flag == "1" and any(not math.isfinite(v) for v in values):
                raise FormatError(f"{where}: valid cell with missing or non-finite features")
            valid.append(flag == "1")
            feats.append(values)
    ids = np.array(ids, dtype=np.int64)
    order = np.argsort(ids, kind="stable")
    if ids.size and np.any(ids[order][1:] == ids[order][:-1]):
        raise FormatError(f"{path}: duplicate cell_id")
    features = np.array(feats, dtype=np.float64).reshape(-1, N_FEATURES)
    return GridFeatureSet(
        ids[order],
        np.array(lat, dtype=np.float64)[order],
        np.array(lon, dtype=np.float64)[order],
        features[order],
        np.array(valid, dtype=bool)[order],
    )
