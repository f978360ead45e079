"""Weighted k-nearest-neighbor graphs.

A graph is stored as a flat list of *directed* edges sorted by (src, dst),
with the guarantee that the reverse of every edge is present and carries the
same weight.  Construction is: directed kNN neighborhoods -> union with the
reversed edges (symmetrization) -> weights evaluated once per undirected pair
and mirrored, so w(x,y) == w(y,x) holds exactly.

Weight functions
----------------
gaussian(sigma)          w(x,y) = exp(-d(x,y)^2 / sigma^2)
zmp(M)                   w(x,y) = exp(-d(x,y)^2 / (s(x) s(y))), with s(x) the
                         distance from x to its M-th nearest neighbor
                         (local scaling; equivalent to max-symmetrizing the
                         one-sided truncated form on the union edge set)
pointcloud(sigma, g)     gaussian base; the convexity modification needs
                         per-point normals and is applied afterwards by
                         pointcloud_weights()
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    ConfigError,
    DataError,
    DegenerateDistanceError,
    DegenerateScaleError,
)

_WEIGHT_KINDS = ("gaussian", "zmp", "pointcloud")


@dataclass(frozen=True)
class WeightSpec:
    """Which weight function to evaluate on graph edges.

    kind is one of 'gaussian', 'zmp', 'pointcloud'.  sigma is the Gaussian
    scale (gaussian/pointcloud), M the neighbor rank for local scaling (zmp),
    gamma_conv the convexity coefficient (pointcloud).
    """

    kind: str
    sigma: float | None = None
    M: int | None = None
    gamma_conv: float | None = None

    def __post_init__(self):
        if self.kind not in _WEIGHT_KINDS:
            raise ConfigError(f"unknown weight kind {self.kind!r}")
        if self.kind in ("gaussian", "pointcloud"):
            if self.sigma is None or not (self.sigma > 0):
                raise ConfigError("sigma must be > 0")
        if self.kind == "zmp":
            if self.M is None or self.M < 1:
                raise ConfigError("zmp weight needs M >= 1")
        if self.kind == "pointcloud":
            if self.gamma_conv is None or not np.isfinite(self.gamma_conv):
                raise ConfigError("gamma_conv must be finite")

    @staticmethod
    def gaussian(sigma: float) -> "WeightSpec":
        return WeightSpec("gaussian", sigma=sigma)

    @staticmethod
    def zmp(M: int) -> "WeightSpec":
        return WeightSpec("zmp", M=M)

    @staticmethod
    def pointcloud(sigma: float, gamma_conv: float) -> "WeightSpec":
        return WeightSpec("pointcloud", sigma=sigma, gamma_conv=gamma_conv)


@dataclass(frozen=True)
class Graph:
    """Immutable symmetric weighted graph over n_nodes nodes.

    src, dst, weight describe the directed edge list, sorted
    lexicographically by (src, dst).  reverse[e] is the index of edge
    (dst[e], src[e]).  degree[x] counts the neighbors of x.  points, k and
    weight_spec record the construction inputs when the graph came from
    build_knn_graph (needed by boost_supervised_edges).
    """

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    reverse: np.ndarray
    degree: np.ndarray
    points: np.ndarray | None = None
    k: int | None = None
    weight_spec: WeightSpec | None = None

    @property
    def n_edges(self) -> int:
        """Number of directed edges."""
        return self.src.shape[0]

    def with_weights(self, weight: np.ndarray) -> "Graph":
        """Same topology with a replacement weight vector."""
        if weight.shape != self.weight.shape:
            raise ConfigError("weight vector does not match edge count")
        return replace(self, weight=np.ascontiguousarray(weight, dtype=np.float64))

    def neighbor_slices(self):
        """Row pointer into the (src-sorted) edge list: edges of node x are
        edge indices row_ptr[x]:row_ptr[x+1]."""
        counts = np.bincount(self.src, minlength=self.n_nodes)
        row_ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        return row_ptr


def _directed_from_pairs(n_nodes, pair_src, pair_dst, pair_weight):
    """Assemble a sorted directed edge list (both directions) from undirected
    pairs with src < dst, mirroring the weight so symmetry is exact."""
    src = np.concatenate([pair_src, pair_dst])
    dst = np.concatenate([pair_dst, pair_src])
    w = np.concatenate([pair_weight, pair_weight])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    key = src * np.int64(n_nodes) + dst
    rev_key = dst * np.int64(n_nodes) + src
    reverse = np.searchsorted(key, rev_key)
    degree = np.bincount(src, minlength=n_nodes).astype(np.int64)
    return Graph(
        n_nodes=n_nodes,
        src=src.astype(np.int64),
        dst=dst.astype(np.int64),
        weight=np.ascontiguousarray(w, dtype=np.float64),
        reverse=reverse.astype(np.int64),
        degree=degree,
    )


def _knn_brute(points, n_query_neighbors):
    """Exact kNN by full pairwise distances; ties broken by node index.

    Returns (idx, dist) arrays of shape (N, n_query_neighbors), rows sorted by
    (distance, index), self excluded.  Blocked so N ~ a few thousand stays
    within memory.
    """
    n = points.shape[0]
    idx = np.empty((n, n_query_neighbors), dtype=np.int64)
    dist = np.empty((n, n_query_neighbors), dtype=np.float64)
    block = max(1, int(2e7) // max(n, 1))
    sq_norms = np.einsum("ij,ij->i", points, points)
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = (
            sq_norms[start:stop, None]
            - 2.0 * points[start:stop] @ points.T
            + sq_norms[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        d = np.sqrt(d2)
        d[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        # stable argsort on distance keeps the smaller index first among ties
        order = np.argsort(d, axis=1, kind="stable")[:, :n_query_neighbors]
        idx[start:stop] = order
        dist[start:stop] = np.take_along_axis(d, order, axis=1)
    return idx, dist


def _knn_kdtree(points, n_query_neighbors, workers):
    """kd-tree kNN; queried with a small buffer then re-sorted by
    (distance, index) so tie-breaking matches the brute-force oracle."""
    n = points.shape[0]
    tree = cKDTree(points)
    m = min(n, n_query_neighbors + 1 + 8)  # +1 self, +8 tie buffer
    d, i = tree.query(points, k=m, workers=workers)
    d = np.asarray(d, dtype=np.float64).reshape(n, -1)
    i = np.asarray(i, dtype=np.int64).reshape(n, -1)
    self_mask = i == np.arange(n)[:, None]
    d[self_mask] = np.inf
    order = np.lexsort((i, d), axis=1)[:, :n_query_neighbors]
    return np.take_along_axis(i, order, axis=1), np.take_along_axis(d, order, axis=1)


def _neighbors(points, n_query_neighbors, method="auto", workers=1):
    n, dim = points.shape
    if n_query_neighbors >= n:
        raise ConfigError("need more points than requested neighbors")
    if method == "auto":
        method = "kdtree" if (dim <= 8 and n > 2000) else "brute"
    if method == "brute":
        return _knn_brute(points, n_query_neighbors)
    if method == "kdtree":
        return _knn_kdtree(points, n_query_neighbors, workers)
    raise ConfigError(f"unknown kNN method {method!r}")


def _pair_weights(points, pair_src, pair_dst, weight, zmp_scale):
    d = np.linalg.norm(points[pair_dst] - points[pair_src], axis=1)
    if weight.kind in ("gaussian", "pointcloud"):
        return np.exp(-(d**2) / weight.sigma**2)
    # zmp local scaling: denominator s(x)*s(y) is symmetric by itself
    s = zmp_scale
    return np.exp(-(d**2) / (s[pair_src] * s[pair_dst]))


def _build(points, k, weight, k_per_node, method, workers):
    n = points.shape[0]
    kmax = int(np.max(k_per_node))
    need = kmax if weight.kind != "zmp" else max(kmax, weight.M)
    idx, dist = _neighbors(points, need, method=method, workers=workers)

    zmp_scale = None
    if weight.kind == "zmp":
        zmp_scale = dist[:, weight.M - 1].copy()
        if np.any(zmp_scale == 0.0):
            raise DegenerateScaleError(
                "duplicate points give zero local scale for zmp weights"
            )

    take = k_per_node[:, None] > np.arange(kmax)[None, :]
    e_src = np.repeat(np.arange(n, dtype=np.int64), k_per_node)
    e_dst = idx[:, :kmax][take]

    # canonicalize to undirected pairs (src < dst) and deduplicate
    lo = np.minimum(e_src, e_dst)
    hi = np.maximum(e_src, e_dst)
    key = lo * np.int64(n) + hi
    uniq = np.unique(key)
    pair_src = (uniq // n).astype(np.int64)
    pair_dst = (uniq % n).astype(np.int64)
    pair_w = _pair_weights(points, pair_src, pair_dst, weight, zmp_scale)

    g = _directed_from_pairs(n, pair_src, pair_dst, pair_w)
    return replace(g, points=np.ascontiguousarray(points, dtype=np.float64),
                   k=int(k), weight_spec=weight)


def build_knn_graph(points, k: int, weight: WeightSpec, method: str = "auto",
                    workers: int = 1) -> Graph:
    """Build the symmetric weighted kNN graph over a point set.

    Each node gets directed edges to its k nearest neighbors (Euclidean,
    distance ties broken by smaller node index), the edge set is symmetrized
    by union with the reversed edges, and weights are evaluated per the
    WeightSpec.  For a 'pointcloud' spec only the Gaussian base term is
    evaluated here; see pointcloud_weights().

    Parameters
    ----------
    points : (N, D) array
    k : neighbors per node; requires k < N
    weight : WeightSpec
    method : 'auto', 'brute' or 'kdtree'.  Both produce identical edge sets;
        'auto' picks kdtree for large low-dimensional inputs.
    workers : thread count for kd-tree queries (edge set is independent of
        this; pass 1 for strictly sequential construction).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] < 1:
        raise DataError("points must be an N x D matrix")
    if not np.all(np.isfinite(points)):
        raise DataError("points contain non-finite coordinates")
    n = points.shape[0]
    if k < 1 or k >= n:
        raise ConfigError(f"k={k} invalid for {n} points")
    k_per_node = np.full(n, k, dtype=np.int64)
    return _build(points, k, weight, k_per_node, method, workers)


def boost_supervised_edges(graph: Graph, supervised, factor: int) -> Graph:
    """Extend supervised nodes' neighborhoods to factor*k neighbors.

    Rebuilds the graph with the enlarged neighborhoods for the supervised
    node set (before symmetrization); all other neighborhoods keep k.  With
    factor == 1 the graph is returned unchanged.
    """
    if factor < 1:
        raise ConfigError("boost factor must be >= 1")
    if factor == 1:
        return graph
    if graph.points is None or graph.k is None or graph.weight_spec is None:
        raise ConfigError("graph does not carry construction inputs; "
                          "build it with build_knn_graph first")
    n, k = graph.n_nodes, graph.k
    if factor * k >= n:
        raise ConfigError(f"factor*k = {factor * k} must be < N = {n}")
    supervised = np.asarray(sorted(set(int(s) for s in supervised)), dtype=np.int64)
    if supervised.size and (supervised.min() < 0 or supervised.max() >= n):
        raise DataError("supervised node index out of range")
    k_per_node = np.full(n, k, dtype=np.int64)
    k_per_node[supervised] = factor * k
    return _build(graph.points, k, graph.weight_spec, k_per_node, "auto", 1)


def pointcloud_weights(graph: Graph, points, normals, sigma: float,
                       gamma_conv: float, max_weight: float = np.inf) -> Graph:
    """Replace edge weights with the convexity-aware point-cloud weights.

    w(x,y) = exp(-d^2/sigma^2 + gamma_conv * (v3(y) - v3(x))/d * sign(y1 - x1))

    where v3 is the up-component of the per-point normal v1, axis 1 is the
    view direction and axis 3 (index 2) is up.  The result is re-symmetrized
    by taking the max over the two directions (the formula is symmetric in
    exact arithmetic; the max also covers sign(0) edges).

    max_weight optionally clips the result from above.  The convexity
    exponent grows like 1/d for near-coincident points across a surface
    crease, and a few such edges can stretch the weight range over many
    orders of magnitude, which stalls the flow solver; a cap around 10
    bounds the stiffness without affecting regular edges (the 99.9th
    weight percentile is typically ~1).
    """
    points = np.asarray(points, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    if points.shape != (graph.n_nodes, 3):
        raise DataError("pointcloud weights need the N x 3 coordinates")
    if normals.shape != (graph.n_nodes, 3):
        raise DataError("normals must be N x 3")
    if not sigma > 0:
        raise ConfigError("sigma must be > 0")
    delta = points[graph.dst] - points[graph.src]
    d = np.linalg.norm(delta, axis=1)
    if np.any(d == 0.0):
        raise DegenerateDistanceError("edge between coincident points")
    v3 = normals[:, 2]
    term = (v3[graph.dst] - v3[graph.src]) / d * np.sign(delta[:, 0])
    w = np.exp(-(d**2) / sigma**2 + gamma_conv * term)
    w = np.maximum(w, w[graph.reverse])
    if max_weight != np.inf:
        if not max_weight > 0:
            raise ConfigError("max_weight must be positive")
        np.minimum(w, max_weight, out=w)
    return graph.with_weights(w)


def save_edge_list(graph: Graph, path) -> None:
    """Dump the directed edge list as 'src,dst,weight' CSV (debug aid)."""
    with open(path, "w") as fh:
        fh.write("src,dst,weight\n")
        for s, t, w in zip(graph.src, graph.dst, graph.weight):
            fh.write(f"{s},{t},{float(w)!r}\n")
