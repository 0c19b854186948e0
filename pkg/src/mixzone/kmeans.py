"""k-means regionalization of grid-cell feature vectors.

Lloyd iterations from k-means++ seeds, best of several restarts, automatic
choice of k from the relative drop of the within-cluster sum of squares, and
a latitude-ordered canonical labelling of the regions.

Randomness: restart ``r`` at cluster count ``k`` draws from
``SeedSequence(seed, spawn_key=(k, r))``, so a fit at a given k is the same
whether it is run alone or as part of a k sweep.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import kernels
from .errors import ConfigError, FormatError, TooFewCells
from .features import GridFeatureSet

AUTO = "auto"
SELECT_MODES = ("at_threshold", "before_threshold")
LABELS_HEADER = ("cell_id", "lat", "lon", "region")
CURVE_HEADER = ("k", "variance", "selected")


@dataclass
class KMeansConfig:
    k: int | str = AUTO
    k_max: int = 20
    tau: float = 0.05
    restarts: int = 10
    max_iterations: int = 300
    centroid_tolerance: float = 1e-6
    seed: int = 0
    select: str = "at_threshold"
    zscore: bool = False
    lat_weighting: bool = False

    def __post_init__(self):
        if isinstance(self.k, str):
            if self.k.lower() != AUTO:
                try:
                    self.k = int(self.k)
                except ValueError:
                    raise ConfigError(f"k must be a positive integer or 'auto', got {self.k!r}") from None
            else:
                self.k = AUTO
        if self.k != AUTO and self.k < 1:
            raise ConfigError("k must be positive")
        if self.k_max < 1:
            raise ConfigError("k_max must be positive")
        if self.k != AUTO and self.k > self.k_max:
            raise ConfigError(f"k={self.k} exceeds k_max={self.k_max}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if self.restarts < 1 or self.max_iterations < 1:
            raise ConfigError("restarts and max_iterations must be positive")
        if self.centroid_tolerance < 0:
            raise ConfigError("centroid_tolerance must be nonnegative")
        if self.select not in SELECT_MODES:
            raise ConfigError(f"select must be one of {SELECT_MODES}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown k-means config keys {unknown}")
        return cls(**d)


@dataclass
class ClusteringResult:
    k: int
    assignments: np.ndarray  # cluster id 1..k per clustered cell
    centroids: np.ndarray  # (k, d)
    variance: float
    iterations: int
    seed: int
    restart: int = 0
    converged: bool = True
    history: list = field(default_factory=list)  # per-iteration variance of the kept run
    variance_curve: list | None = None  # [(k, V_k), ...] for automatic selection
    selection_warning: bool = False
    cell_index: np.ndarray | None = None  # rows of the feature set that were clustered

    @property
    def sizes(self):
        return np.bincount(self.assignments - 1, minlength=self.k)


@dataclass
class KSelection:
    k: int
    curve: list  # [(k, V_k)]
    warning: bool
    fits: dict = field(repr=False, default_factory=dict)


# ---------------------------------------------------------------------------
# building blocks


def _as_matrix(features):
    if isinstance(features, GridFeatureSet):
        return np.ascontiguousarray(features.valid_features(), dtype=np.float64)
    X = np.ascontiguousarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D array")
    return X


def _weights(X, weights):
    if weights is None:
        return np.ones(X.shape[0])
    return np.ascontiguousarray(weights, dtype=np.float64)


def substream(seed, k, restart):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(k), int(restart))))


def _sample(rng, cumulative, total):
    u = rng.random() * total
    i = int(np.searchsorted(cumulative, u, side="right"))
    return min(i, cumulative.shape[0] - 1)


def kmeanspp_init(features, k, rng, weights=None):
    """k-means++ seeding: each new centroid drawn with probability proportional to D^2.

    Returns the ``(k, d)`` centroid matrix; chosen rows are distinct. When
    every remaining cell coincides with a chosen centroid, the next one is
    drawn uniformly from the unchosen cells.
    """
    X = _as_matrix(features)
    n = X.shape[0]
    if k > n or n == 0:
        raise TooFewCells(f"cannot seed k={k} centroids from {n} cells")
    w = _weights(X, weights)
    chosen = np.zeros(n, dtype=bool)
    cw = np.cumsum(w)
    first = _sample(rng, cw, cw[-1])
    idx = [first]
    chosen[first] = True
    mind = np.full(n, np.inf)
    kernels.min_sqdist_update(X, X[first], mind)
    for _ in range(1, k):
        p = np.where(chosen, 0.0, w * mind)
        cp = np.cumsum(p)
        if cp[-1] > 0:
            i = _sample(rng, cp, cp[-1])
        else:
            free = np.flatnonzero(~chosen)
            i = int(free[rng.integers(free.size)])
        idx.append(i)
        chosen[i] = True
        kernels.min_sqdist_update(X, X[i], mind)
    return X[np.array(idx)].copy()


def _reseed_empty(labels, mind, k):
    """Move the farthest cell (from a cluster with >1 members) into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    if counts.min() > 0:
        return labels, mind
    labels = labels.copy()
    mind = mind.copy()
    for c in np.flatnonzero(counts == 0):
        donor = counts[labels] > 1
        i = int(np.argmax(np.where(donor, mind, -1.0)))
        counts[labels[i]] -= 1
        counts[c] += 1
        labels[i] = c
        mind[i] = 0.0
    return labels, mind


def _means(X, w, labels, k):
    sums, totals = kernels.cluster_sums(X, w, labels, k)
    return sums / totals[:, None]


def lloyd_step(features, centroids, weights=None):
    """One assignment + update pass.

    Returns ``(labels, new_centroids, variance)`` with 0-based labels and the
    variance measured against the incoming centroids (ties go to the lower
    cluster index). Empty clusters are reseeded before means are taken.
    """
    X = _as_matrix(features)
    C = np.ascontiguousarray(centroids, dtype=np.float64)
    w = _weights(X, weights)
    labels, mind = kernels.assign(X, C)
    variance = kernels.weighted_total(w, mind)
    labels, _ = _reseed_empty(labels, mind, C.shape[0])
    return labels, _means(X, w, labels, C.shape[0]), variance


def objective(features, labels, centroids, weights=None):
    """Within-cluster sum of squares for 0-based ``labels`` (plain numpy)."""
    X = _as_matrix(features)
    w = _weights(X, weights)
    diff = X - np.asarray(centroids)[labels]
    return float(np.sum(w * np.sum(diff * diff, axis=1)))


def _lloyd(X, w, C, max_iterations, tol):
    k = C.shape[0]
    history = []
    prev = None
    converged = False
    it = 0
    while True:
        labels, mind = kernels.assign(X, C)
        history.append(kernels.weighted_total(w, mind))
        if converged or it >= max_iterations:
            break
        if prev is not None and np.array_equal(labels, prev):
            converged = True
            break
        labels, mind = _reseed_empty(labels, mind, k)
        new = _means(X, w, labels, k)
        shift = math.sqrt(float(np.max(np.sum((new - C) ** 2, axis=1))))
        C, prev = new, labels
        it += 1
        if shift < tol:
            converged = True
    if np.bincount(labels, minlength=k).min() == 0:
        labels, mind = _reseed_empty(labels, mind, k)
        C = _means(X, w, labels, k)
        diff = X - C[labels]
        history.append(kernels.weighted_total(w, np.sum(diff * diff, axis=1)))
    return labels, C, history[-1], it, converged, history


def kmeans(features, k, config=None, weights=None):
    """Best-of-restarts k-means; lowest variance wins, ties to the earliest restart."""
    config = config or KMeansConfig(k=k)
    X = _as_matrix(features)
    n = X.shape[0]
    if k < 1:
        raise ConfigError("k must be positive")
    if k > n:
        raise TooFewCells(f"k={k} exceeds the {n} clusterable cells")
    w = _weights(X, weights)
    best = None
    for r in range(config.restarts):
        rng = substream(config.seed, k, r)
        C0 = kmeanspp_init(X, k, rng, w)
        labels, C, V, it, conv, hist = _lloyd(X, w, C0, config.max_iterations, config.centroid_tolerance)
        if best is None or V < best.variance:
            best = ClusteringResult(
                k=k,
                assignments=labels + 1,
                centroids=C,
                variance=V,
                iterations=it,
                seed=int(config.seed),
                restart=r,
                converged=conv,
                history=hist,
            )
    return best


# ---------------------------------------------------------------------------
# choosing k


def select_from_curve(curve, tau=0.05, k_max=None, select="at_threshold"):
    """Smallest k >= 2 with ``V[k-1] - V[k] <= tau * V[k-1]``.

    ``curve`` is a sequence of ``(k, V_k)`` pairs or of ``V_k`` values for
    k = 1, 2, .... Returns ``(k, warning)``; when nothing qualifies up to
    ``k_max`` the result is ``(k_max, True)``. ``select='before_threshold'``
    returns k - 1 instead of k.
    """
    pairs = [tuple(p) for p in curve] if len(curve) and np.ndim(curve[0]) else list(enumerate(curve, 1))
    pairs = sorted((int(kk), float(v)) for kk, v in pairs)
    values = dict(pairs)
    k_max = pairs[-1][0] if k_max is None else min(k_max, pairs[-1][0])
    for kk in range(2, k_max + 1):
        if kk - 1 not in values or kk not in values:
            raise ValueError(f"variance curve lacks k={kk - 1} or k={kk}")
        prev, cur = values[kk - 1], values[kk]
        if prev - cur <= tau * prev:
            return (kk - 1 if select == "before_threshold" else kk), False
    return k_max, True


def select_k(features, config=None, weights=None):
    """Fit k = 1..k_max independently and apply the relative-drop rule."""
    config = config or KMeansConfig()
    X = _as_matrix(features)
    n = X.shape[0]
    if n < 2:
        raise TooFewCells(f"need at least 2 cells to choose k, got {n}")
    k_max = min(config.k_max, n)
    fits = {}
    for kk in range(1, k_max + 1):
        fits[kk] = kmeans(X, kk, config, weights)
    curve = [(kk, fits[kk].variance) for kk in range(1, k_max + 1)]
    k, warn = select_from_curve(curve, config.tau, k_max, config.select)
    if warn:
        warnings.warn(
            f"relative variance drop never fell to tau={config.tau} up to k_max={k_max}; using k={k_max}",
            RuntimeWarning,
            stacklevel=2,
        )
    return KSelection(k, curve, warn, fits)


# ---------------------------------------------------------------------------
# labelling


def relabel(result: ClusteringResult, lat) -> ClusteringResult:
    """Renumber clusters 1..k by descending mean latitude of their members.

    Ties go to the larger cluster, then to the smaller original id. ``lat``
    holds the latitude of each clustered cell.
    """
    lat = np.asarray(lat, dtype=np.float64)
    old = result.assignments - 1
    keys = []
    for c in range(result.k):
        members = lat[old == c]
        keys.append((-math.fsum(members) / members.size, -members.size, c))
    order = [c for *_, c in sorted(keys)]
    new_id = np.empty(result.k, dtype=np.int64)
    new_id[order] = np.arange(1, result.k + 1)
    return replace(result, assignments=new_id[old], centroids=result.centroids[order])


def standardize(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return (X - mean) / std


def latitude_weights(lat):
    # floor keeps pole-centred cells from carrying exactly zero weight
    return np.maximum(np.cos(np.deg2rad(lat)), 1e-6)


def regionalize(fs: GridFeatureSet, config: KMeansConfig) -> ClusteringResult:
    """Cluster the valid cells of ``fs`` and return latitude-ordered regions."""
    rows = np.flatnonzero(fs.valid)
    if rows.size == 0:
        raise TooFewCells("no valid cells to cluster")
    X = np.ascontiguousarray(fs.features[rows], dtype=np.float64)
    if config.zscore:
        X = standardize(X)
    w = latitude_weights(fs.lat[rows]) if config.lat_weighting else None
    if config.k == AUTO:
        sel = select_k(X, config, w)
        result = replace(sel.fits[sel.k], variance_curve=sel.curve, selection_warning=sel.warning)
    else:
        result = kmeans(X, config.k, config, w)
    result = relabel(result, fs.lat[rows])
    result.cell_index = rows
    return result


def labels_for_cells(result: ClusteringResult, n_cells):
    """Region id for every cell of the feature set, 0 for cells not clustered."""
    out = np.zeros(n_cells, dtype=np.int64)
    rows = result.cell_index if result.cell_index is not None else np.arange(result.assignments.size)
    out[rows] = result.assignments
    return out


# ---------------------------------------------------------------------------
# file formats


def write_labels_csv(path, fs: GridFeatureSet, regions):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABELS_HEADER)
        for cid, la, lo, r in zip(fs.cell_ids, fs.lat, fs.lon, regions):
            writer.writerow([int(cid), format(float(la), ".17g"), format(float(lo), ".17g"), int(r)])


def read_labels_csv(path):
    """Returns ``(cell_ids, lat, lon, region)`` arrays sorted by cell_id."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != LABELS_HEADER:
            raise FormatError(f"{path} row 1: header must be {','.join(LABELS_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 4:
                    raise ValueError(f"expected 4 fields, got {len(row)}")
                rows.append((int(row[0]), float(row[1]), float(row[2]), int(row[3])))
            except ValueError as exc:
                raise FormatError(f"{path} row {lineno}: {exc}") from None
            if rows[-1][3] < 0:
                raise FormatError(f"{path} row {lineno}: negative region id")
    rows.sort(key=lambda r: r[0])
    ids = np.array([r[0] for r in rows], dtype=np.int64)
    if ids.size and np.any(ids[1:] == ids[:-1]):
        raise FormatError(f"{path}: duplicate cell_id")
    return (
        ids,
        np.array([r[1] for r in rows], dtype=np.float64),
        np.array([r[2] for r in rows], dtype=np.float64),
        np.array([r[3] for r in rows], dtype=np.int64),
    )


def write_curve_csv(path, curve, selected_k):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for kk, v in curve:
            writer.writerow([int(kk), format(float(v), ".17g"), int(kk == selected_k)])


def read_curve_csv(path):
    """Returns ``[(k, V_k), ...]``; the ``selected`` column is optional on input."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header)[:2] != CURVE_HEADER[:2]:
            raise FormatError(f"{path} row 1: header must start with k,variance")
        curve = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                curve.append((int(row[0]), float(row[1])))
            except (ValueError, IndexError) as exc:
                raise FormatError(f"{path} row {lineno}: {exc}") from None
    if not curve:
        raise FormatError(f"{path}: empty variance curve")
    return sorted(curve)
