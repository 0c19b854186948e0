"""Seeded test data: Gaussian-blob feature grids and random particle populations."""

from dataclasses import dataclass

import numpy as np

from .errors import SpecError
from .features import N_FEATURES, CellIndexSeries, GridFeatureSet
from .mixing_state import ParticlePopulation

CANONICAL_SPECIES = ("BC", "dust", "POM", "salt", "SOA", "sulfate")
BLOCK = 4096
FULL_GRID = (192, 288)


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(x) for x in key)))


def grid_shape_for(n_cells):
    """(n_lat, n_lon) tiling ``n_cells`` with an aspect ratio near 2:3."""
    if n_cells <= 0:
        raise SpecError("n_cells must be positive")
    target = (n_cells / 1.5) ** 0.5
    divisors = [d for d in range(1, int(n_cells**0.5) + 2) if n_cells % d == 0]
    n_lat = min(divisors, key=lambda d: (abs(d - target), d))
    return n_lat, n_cells // n_lat


def grid_coordinates(n_lat, n_lon):
    """Cell-centre latitudes (ascending) and longitudes of a regular global grid."""
    lat = -90.0 + (np.arange(n_lat) + 0.5) * (180.0 / n_lat)
    lon = np.arange(n_lon) * (360.0 / n_lon)
    return lat, lon


@dataclass
class BlobSpec:
    n_cells: int
    n_clusters: int
    dimension: int = N_FEATURES
    centers: np.ndarray | None = None
    sigma: float | np.ndarray = 0.05
    mixing_weights: np.ndarray | None = None
    seed: int = 0
    min_separation: float | None = None  # in units of the largest sigma
    grid_shape: tuple | None = None

    def validate(self):
        if self.n_cells < 1 or self.n_clusters < 1 or self.dimension < 1:
            raise SpecError("n_cells, n_clusters and dimension must be positive")
        sigma = np.broadcast_to(np.asarray(self.sigma, dtype=np.float64), (self.n_clusters,))
        if np.any(sigma <= 0):
            raise SpecError("sigma must be positive")
        if self.mixing_weights is None:
            weights = np.full(self.n_clusters, 1.0 / self.n_clusters)
        else:
            weights = np.asarray(self.mixing_weights, dtype=np.float64)
            if weights.shape != (self.n_clusters,) or np.any(weights <= 0):
                raise SpecError("mixing_weights needs one positive entry per cluster")
            if abs(weights.sum() - 1.0) > 1e-9:
                raise SpecError("mixing_weights must sum to 1")
        if self.centers is not None:
            centers = np.asarray(self.centers, dtype=np.float64)
            if centers.shape != (self.n_clusters, self.dimension):
                raise SpecError(
                    f"centers must have shape ({self.n_clusters}, {self.dimension}), got {centers.shape}"
                )
        if self.dimension != N_FEATURES:
            raise SpecError(f"feature grids are {N_FEATURES}-dimensional; use blob_matrix for other sizes")
        shape = self.grid_shape or grid_shape_for(self.n_cells)
        if shape[0] * shape[1] != self.n_cells:
            raise SpecError(f"grid {shape} does not hold {self.n_cells} cells")
        return sigma, weights, shape


def _centers(spec, sigma):
    if spec.centers is not None:
        return np.asarray(spec.centers, dtype=np.float64)
    rng = _stream(spec.seed, 0)
    need = 0.0 if spec.min_separation is None else spec.min_separation * float(sigma.max())
    for _ in range(1000):
        c = rng.random((spec.n_clusters, spec.dimension))
        if spec.n_clusters == 1 or need == 0.0:
            return c
        d2 = np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=2)
        d2[np.diag_indices_from(d2)] = np.inf
        if np.sqrt(d2.min()) >= need:
            return c
    raise SpecError(f"could not place {spec.n_clusters} centers {need:g} apart in [0,1]^{spec.dimension}")


def blob_matrix(n_cells, centers, sigma, counts, seed):
    """Cluster-sorted Gaussian samples clipped to [0, 1]; rows in blocks of BLOCK with own substreams."""
    centers = np.asarray(centers, dtype=np.float64)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (centers.shape[0],))
    truth = np.repeat(np.arange(centers.shape[0]), counts)
    X = np.empty((n_cells, centers.shape[1]))
    for b, start in enumerate(range(0, n_cells, BLOCK)):
        stop = min(start + BLOCK, n_cells)
        noise = _stream(seed, 2, b).standard_normal((stop - start, centers.shape[1]))
        X[start:stop] = centers[truth[start:stop]] + sigma[truth[start:stop], None] * noise
    np.clip(X, 0.0, 1.0, out=X)
    return X, truth


def generate_blobs(spec: BlobSpec):
    """Feature grid of Gaussian blobs plus the generating labels (1..n_clusters).

    Cluster members occupy contiguous latitude bands, cluster 1 northernmost,
    on a regular grid whose row-major index (south to north) is the cell_id.
    """
    sigma, weights, (n_lat, n_lon) = spec.validate()
    centers = _centers(spec, sigma)
    counts = _stream(spec.seed, 1).multinomial(spec.n_cells, weights)
    X, truth = blob_matrix(spec.n_cells, centers, sigma, counts, spec.seed)
    # cluster-sorted rows fill the grid from the north pole down
    X = X[::-1].copy()
    truth = truth[::-1] + 1
    lat, lon = grid_coordinates(n_lat, n_lon)
    cell_ids = np.arange(spec.n_cells, dtype=np.int64)
    fs = GridFeatureSet(
        cell_ids,
        lat[cell_ids // n_lon],
        lon[cell_ids % n_lon],
        X,
        np.ones(spec.n_cells, dtype=bool),
    )
    return fs, truth


def generate_population(n_particles, n_species, seed, sparsity=0.0):
    """Masses log-uniform over four decades; ``sparsity`` zeroes entries at random.

    The first six species carry the canonical surrogate names so every
    grouping preset applies; further species are named ``X07``, ``X08``, ...
    Each particle keeps at least one nonzero mass.
    """
    if n_particles < 1 or n_species < 1:
        raise SpecError("n_particles and n_species must be at least 1")
    rng = _stream(seed, 3)
    masses = 10.0 ** rng.uniform(-4.0, 0.0, size=(n_particles, n_species))
    if sparsity > 0:
        zero = rng.random((n_particles, n_species)) < sparsity
        keep = rng.integers(n_species, size=n_particles)
        zero[np.arange(n_particles), keep] = False
        masses[zero] = 0.0
    names = CANONICAL_SPECIES[:n_species] + tuple(f"X{j + 1:02d}" for j in range(6, n_species))
    return ParticlePopulation(names, masses)


def generate_series(cell_id, lat, lon, monthly, year=2011, step_hours=3, noise=0.0, seed=0):
    """Sub-daily index series whose calendar-month means follow ``monthly`` (12x3).

    With ``noise=0`` every sample equals its month's value. Noise is added as
    a zero-mean perturbation, clipped to [0, 1].
    """
    start = np.datetime64(f"{year}-01-01T00:00:00", "s")
    stop = np.datetime64(f"{year + 1}-01-01T00:00:00", "s")
    times = np.arange(start, stop, np.timedelta64(step_hours, "h")).astype("datetime64[s]")
    months = times.astype("datetime64[M]").astype(np.int64) % 12
    values = np.asarray(monthly, dtype=np.float64)[months]
    if noise:
        values = np.clip(values + noise * _stream(seed, 4, cell_id).standard_normal(values.shape), 0.0, 1.0)
    return CellIndexSeries(int(cell_id), float(lat), float(lon), times, values)
