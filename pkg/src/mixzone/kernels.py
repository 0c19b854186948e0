"""Hot loops of the k-means regionalizer.

Every kernel exists twice: an explicit-loop version compiled with numba and
a vectorised numpy version. Both perform the floating point operations in
the same order, so they return bit-identical arrays:

* squared distances accumulate feature by feature (j = 0, 1, ..., d-1);
* reductions over cells run sequentially inside fixed-size chunks, and the
  chunk partials are then added in chunk order.

Chunk boundaries depend only on ``CHUNK``, never on the thread count, which
keeps results independent of ``numba.set_num_threads``.

The active backend is chosen at import time (``MIXZONE_DISABLE_NUMBA``) and
can be switched with :func:`use_backend`.
"""

import numpy as np

from ._numba_compat import NUMBA_AVAILABLE, USE_NUMBA, njit, prange

CHUNK = 4096


def _n_chunks(n):
    return (n + CHUNK - 1) // CHUNK


# ---------------------------------------------------------------------------
# numpy backend


def _assign_np(X, centroids):
    n, d = X.shape
    k = centroids.shape[0]
    ct = np.ascontiguousarray(centroids.T)
    dist = np.zeros((n, k))
    for j in range(d):
        diff = X[:, j, None] - ct[j][None, :]
        dist += diff * diff
    labels = np.argmin(dist, axis=1).astype(np.int64)
    mind = dist[np.arange(n), labels]
    return labels, mind


def _cluster_sums_np(X, w, labels, k):
    n, d = X.shape
    sums = np.zeros((k, d))
    weights = np.zeros(k)
    for start in range(0, n, CHUNK):
        stop = min(start + CHUNK, n)
        part = np.zeros((k, d))
        pw = np.zeros(k)
        lab = labels[start:stop]
        np.add.at(part, lab, X[start:stop] * w[start:stop, None])
        np.add.at(pw, lab, w[start:stop])
        sums += part
        weights += pw
    return sums, weights


def _weighted_total_np(w, values):
    total = 0.0
    for start in range(0, values.shape[0], CHUNK):
        stop = min(start + CHUNK, values.shape[0])
        total += np.cumsum(w[start:stop] * values[start:stop])[-1]
    return float(total)


def _min_sqdist_update_np(X, center, mind):
    diff = X[:, 0] - center[0]
    d2 = diff * diff
    for j in range(1, X.shape[1]):
        diff = X[:, j] - center[j]
        d2 += diff * diff
    np.minimum(mind, d2, out=mind)
    return mind


# ---------------------------------------------------------------------------
# numba backend


@njit(parallel=True, cache=True)
def _assign_nb(X, centroids):
    n, d = X.shape
    k = centroids.shape[0]
    ct = np.ascontiguousarray(centroids.T)
    labels = np.empty(n, dtype=np.int64)
    mind = np.empty(n)
    for i in prange(n):
        dist = np.zeros(k)
        for j in range(d):
            xj = X[i, j]
            for c in range(k):
                diff = xj - ct[j, c]
                dist[c] += diff * diff
        best = 0
        bestd = dist[0]
        for c in range(1, k):
            if dist[c] < bestd:
                bestd = dist[c]
                best = c
        labels[i] = best
        mind[i] = bestd
    return labels, mind


@njit(parallel=True, cache=True)
def _cluster_sums_nb(X, w, labels, k):
    n, d = X.shape
    nch = (n + CHUNK - 1) // CHUNK
    part = np.zeros((nch, k, d))
    pw = np.zeros((nch, k))
    for ch in prange(nch):
        stop = min((ch + 1) * CHUNK, n)
        for i in range(ch * CHUNK, stop):
            c = labels[i]
            wi = w[i]
            pw[ch, c] += wi
            for j in range(d):
                part[ch, c, j] += X[i, j] * wi
    sums = np.zeros((k, d))
    weights = np.zeros(k)
    for ch in range(nch):
        for c in range(k):
            weights[c] += pw[ch, c]
            for j in range(d):
                sums[c, j] += part[ch, c, j]
    return sums, weights


@njit(parallel=True, cache=True)
def _weighted_total_nb(w, values):
    n = values.shape[0]
    nch = (n + CHUNK - 1) // CHUNK
    part = np.zeros(nch)
    for ch in prange(nch):
        stop = min((ch + 1) * CHUNK, n)
        acc = 0.0
        for i in range(ch * CHUNK, stop):
            acc += w[i] * values[i]
        part[ch] = acc
    total = 0.0
    for ch in range(nch):
        total += part[ch]
    return total


@njit(parallel=True, cache=True)
def _min_sqdist_update_nb(X, center, mind):
    n, d = X.shape
    for i in prange(n):
        diff = X[i, 0] - center[0]
        acc = diff * diff
        for j in range(1, d):
            diff = X[i, j] - center[j]
            acc += diff * diff
        if acc < mind[i]:
            mind[i] = acc
    return mind


_BACKENDS = {
    "numpy": (_assign_np, _cluster_sums_np, _weighted_total_np, _min_sqdist_update_np),
}
if NUMBA_AVAILABLE:
    _BACKENDS["numba"] = (_assign_nb, _cluster_sums_nb, _weighted_total_nb, _min_sqdist_update_nb)

BACKEND = None
assign = cluster_sums = weighted_total = min_sqdist_update = None


def use_backend(name):
    """Rebind the public kernels to ``"numba"`` or ``"numpy"``."""
    global BACKEND, assign, cluster_sums, weighted_total, min_sqdist_update
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}")
    assign, cluster_sums, weighted_total, min_sqdist_update = _BACKENDS[name]
    BACKEND = name
    return name


def available_backends():
    return tuple(_BACKENDS)


use_backend("numba" if USE_NUMBA else "numpy")
