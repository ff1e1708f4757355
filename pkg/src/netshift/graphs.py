"""Degree-sequence diagnostics and random graph generation."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path as _csgraph_shortest_path

from .errors import DataError, NonGraphicError, NumericalError


def _check_sequence(seq) -> np.ndarray:
    seq = np.asarray(seq)
    if seq.ndim != 1 or seq.size == 0:
        raise DataError("degree sequence must be a nonempty 1-D sequence")
    if not np.all(np.equal(np.mod(seq, 1), 0)):
        raise DataError("degrees must be integers")
    seq = seq.astype(np.int64)
    if np.any(seq < 0):
        raise DataError("degrees must be nonnegative")
    if np.any(seq > seq.size - 1):
        raise DataError("a simple graph on n nodes caps degrees at n - 1")
    return seq


def is_graphic(seq) -> bool:
    """Erdos-Gallai test: can the sequence be realized by a simple graph?"""
    seq = _check_sequence(seq)
    if seq.sum() % 2 != 0:
        return False
    d = np.sort(seq)[::-1]
    n = d.size
    prefix = np.cumsum(d)
    for k in range(1, n + 1):
        tail = np.minimum(d[k:], k).sum()
        if prefix[k - 1] > k * (k - 1) + tail:
            return False
    return True


def realize(seq, rng=None, n_swaps: int = 0) -> np.ndarray:
    """Build a simple undirected graph with exactly the given degree sequence.

    Havel-Hakimi construction, optionally followed by ``n_swaps`` random
    double-edge swaps to decorrelate the deterministic wiring.  Returns an
    (m, 2) edge array with each undirected edge listed once.
    """
    seq = _check_sequence(seq)
    if not is_graphic(seq):
        raise NonGraphicError(f"degree sequence {seq.tolist()} is not graphic")
    remaining = [[int(d), i] for i, d in enumerate(seq)]
    edges = set()
    while True:
        remaining.sort(key=lambda t: (-t[0], t[1]))
        top_deg, top = remaining[0]
        if top_deg == 0:
            break
        if top_deg > len(remaining) - 1:
            raise NonGraphicError("ran out of attachment targets")
        for k in range(1, top_deg + 1):
            remaining[k][0] -= 1
            if remaining[k][0] < 0:
                raise NonGraphicError("ran out of attachment targets")
            a, b = sorted((top, remaining[k][1]))
            edges.add((a, b))
        remaining[0][0] = 0

    edges = sorted(edges)
    if n_swaps and len(edges) > 1:
        rng = np.random.default_rng(rng)
        edge_list = list(edges)
        edge_set = set(edge_list)
        done = 0
        attempts = 0
        while done < n_swaps and attempts < 50 * n_swaps:
            attempts += 1
            i, j = rng.choice(len(edge_list), size=2, replace=False)
            (a, b), (c, d) = edge_list[i], edge_list[j]
            if len({a, b, c, d}) < 4:
                continue
            new1, new2 = tuple(sorted((a, c))), tuple(sorted((b, d)))
            if new1 in edge_set or new2 in edge_set:
                continue
            edge_set.discard((a, b))
            edge_set.discard((c, d))
            edge_set.update((new1, new2))
            edge_list[i], edge_list[j] = new1, new2
            done += 1
        edges = sorted(edge_set)
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def chung_lu(expected_degrees, rng=None) -> np.ndarray:
    """Independent-edge random graph matching an expected degree sequence.

    Edge (i, j) appears with probability min(1, w_i w_j / sum w).  When the
    cap ever binds, realized expected degrees fall below the targets, so a
    warning is emitted.
    """
    w = np.asarray(expected_degrees, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise DataError("expected degrees must be a nonempty 1-D sequence")
    if np.any(w < 0):
        raise DataError("expected degrees must be nonnegative")
    total = w.sum()
    if total == 0:
        return np.empty((0, 2), dtype=np.int64)
    if w.max() ** 2 > total:
        warnings.warn(
            "largest expected degree exceeds sqrt(sum of weights); "
            "the edge-probability cap binds and expected degrees are biased low",
            stacklevel=2,
        )
    rng = np.random.default_rng(rng)
    n = w.size
    iu, ju = np.triu_indices(n, k=1)
    probs = np.minimum(1.0, w[iu] * w[ju] / total)
    keep = rng.random(probs.size) < probs
    return np.column_stack([iu[keep], ju[keep]]).astype(np.int64)


def mahalanobis_distances(covariates) -> np.ndarray:
    """Pairwise Mahalanobis distances using the sample covariance of the columns."""
    x = np.atleast_2d(np.asarray(covariates, dtype=np.float64))
    if x.ndim != 2:
        raise DataError("covariates must be a 2-D matrix")
    if x.shape[0] < 2:
        raise DataError("need at least two rows for a covariance matrix")
    cov = np.cov(x, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    try:
        cov_inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariate covariance matrix is singular") from exc
    # quadratic-form expansion keeps memory at O(n^2) instead of O(n^2 k)
    proj = x @ cov_inv
    quad = np.einsum("ij,ij->i", proj, x)
    d2 = quad[:, None] + quad[None, :] - 2.0 * (proj @ x.T)
    dist = np.sqrt(np.clip(d2, 0.0, None))
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    return dist


def nearest_neighbor_graph(covariates, degrees) -> sp.csr_matrix:
    """Directed adjacency where unit i points to its ``degrees[i]`` nearest units.

    Distances are Mahalanobis on the covariate columns; ties break by unit
    index ascending, so every row has out-degree exactly ``degrees[i]``.
    """
    dist = mahalanobis_distances(covariates)
    n = dist.shape[0]
    degrees = _check_sequence(degrees)
    if degrees.size != n:
        raise DataError("degree sequence does not match the covariate rows")
    rows, cols = [], []
    for i in range(n):
        k = int(degrees[i])
        if k == 0:
            continue
        row = dist[i].copy()
        row[i] = np.inf  # never self-select
        # partition first, then resolve exact distance ties by unit index
        cutoff = np.partition(row, k - 1)[k - 1]
        candidates = np.flatnonzero(row <= cutoff)
        ranked = candidates[np.lexsort((candidates, row[candidates]))]
        chosen = ranked[:k]
        rows.extend([i] * k)
        cols.extend(chosen.tolist())
    data = np.ones(len(rows), dtype=np.int8)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def shortest_paths(adjacency) -> np.ndarray:
    """Hop-count matrix on the undirected skeleton; disconnected pairs get inf."""
    adj = sp.csr_matrix(adjacency)
    return _csgraph_shortest_path(adj, method="D", directed=False, unweighted=True)
