"""Independent reference implementations used to freeze expected values.

Everything here is written loop-and-dict style, sharing no code with the
package: k-NN selection by explicit sort, operators as per-node sums over an
edge dict, energies by direct enumeration.  Tests compare package output
against these, never the other way around.
"""

import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# Graph construction
# ---------------------------------------------------------------------------

def knn_sets(points, k_of):
    """Per-node nearest-neighbor lists.

    k_of: int or callable node -> int.  Ties broken by lower index.
    Returns list of lists of neighbor indices.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    want = (lambda x: k_of) if isinstance(k_of, int) else k_of
    out = []
    for x in range(n):
        cand = []
        for y in range(n):
            if y == x:
                continue
            d = math.sqrt(float(((pts[x] - pts[y]) ** 2).sum()))
            cand.append((d, y))
        cand.sort()
        out.append([y for (_, y) in cand[:want(x)]])
    return out

def undirected_edges(points, k_of):
    """Symmetrized edge set {x,y} as a sorted list of (lo, hi) pairs."""
    nbrs = knn_sets(points, k_of)
    pairs = set()
    for x, ys in enumerate(nbrs):
        for y in ys:
            pairs.add((min(x, y), max(x, y)))
    return sorted(pairs)

def zmp_scales(points, M):
    """Distance from each point to its M-th nearest neighbor."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    scales = []
    for x in range(n):
        ds = sorted(
            math.sqrt(float(((pts[x] - pts[y]) ** 2).sum()))
            for y in range(n) if y != x)
        scales.append(ds[M - 1])
    return scales

def gaussian_weight(points, x, y, sigma):
    d2 = float(((np.asarray(points[x], float) - np.asarray(points[y], float)) ** 2).sum())
    return math.exp(-d2 / sigma ** 2)

def zmp_weight(points, x, y, scales):
    d2 = float(((np.asarray(points[x], float) - np.asarray(points[y], float)) ** 2).sum())
    return math.exp(-d2 / (scales[x] * scales[y]))

def pointcloud_weight_sym(points, x, y, sigma, gamma_conv, v3):
    """Max-symmetrized convexity-aware weight; v3[x] = third component of
    the small principal direction at x."""
    px = np.asarray(points[x], float)
    py = np.asarray(points[y], float)
    d = math.sqrt(float(((px - py) ** 2).sum()))
    base = -d * d / sigma ** 2
    sgn = 0.0 if py[0] == px[0] else math.copysign(1.0, py[0] - px[0])
    wxy = math.exp(base + gamma_conv * ((v3[y] - v3[x]) / d) * sgn)
    sgn_r = -sgn
    wyx = math.exp(base + gamma_conv * ((v3[x] - v3[y]) / d) * sgn_r)
    return max(wxy, wyx)


# ---------------------------------------------------------------------------
# Discrete operators over an explicit directed edge dict
# ---------------------------------------------------------------------------

def as_edge_dict(src, dst, weight):
    return {(int(s), int(t)): float(w) for s, t, w in zip(src, dst, weight)}

def degree_counts(n, edges):
    deg = [0] * n
    for (x, _y) in edges:
        deg[x] += 1
    return deg

def gradient_dict(edges, u, q):
    return {(x, y): (w ** (1.0 - q)) * (u[y] - u[x])
            for (x, y), w in edges.items()}

def divergence_list(n, edges, phi, r, q):
    deg = degree_counts(n, edges)
    out = []
    for x in range(n):
        total = 0.0
        for (a, b), w in edges.items():
            if a == x:
                total += (w ** q) * (phi[(a, b)] - phi[(b, a)])
        out.append(total / (2.0 * deg[x] ** r))
    return out

def tv_value(edges, u, q):
    return 0.5 * sum((w ** q) * abs(u[y] - u[x]) for (x, y), w in edges.items())

def laplacian_list(n, edges, u, r):
    deg = degree_counts(n, edges)
    out = []
    for x in range(n):
        total = 0.0
        for (a, b), w in edges.items():
            if a == x:
                total += w * (u[b] - u[a])
        out.append(total / deg[x] ** r)
    return out

def vertex_inner(n, edges, u, v, r):
    deg = degree_counts(n, edges)
    return sum(u[x] * v[x] * deg[x] ** r for x in range(n))

def edge_inner(edges, phi, psi, q):
    return 0.5 * sum(phi[e] * psi[e] * (w ** (2.0 * q - 1.0))
                     for e, w in edges.items())


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------

def labeling_energy(n, edges, C, labels):
    """Cost + multiway boundary energy of a hard labeling (labels 1-based).

    The boundary term counts each undirected boundary edge twice (once per
    ordered pair), matching sum_i TV(1_{class i}).
    """
    cost = sum(C[x][labels[x] - 1] for x in range(n))
    cut = sum(w for (x, y), w in edges.items() if labels[x] != labels[y])
    return cost + cut

def exhaustive_minimum(n, n_classes, edges, C, allowed=None):
    """Minimize labeling_energy by full enumeration.

    allowed: optional predicate on the per-class count tuple.
    Returns (best labels 1-based, best energy).
    """
    best, best_e = None, math.inf
    for combo in itertools.product(range(1, n_classes + 1), repeat=n):
        if allowed is not None:
            counts = tuple(sum(1 for c in combo if c == i)
                           for i in range(1, n_classes + 1))
            if not allowed(counts):
                continue
        e = labeling_energy(n, edges, C, combo)
        if e < best_e - 1e-15:
            best, best_e = combo, e
    return list(best), best_e


# ---------------------------------------------------------------------------
# Spectral reference
# ---------------------------------------------------------------------------

def dense_second_eigenvector(n, edges, r):
    """Second-smallest eigenpair of the weighted graph Laplacian, dense.

    r = 0: L = D_w - W unnormalized.  r = 1: random-walk D^-1 (D_w - W)
    with D the neighbor-count degree; computed via the symmetric conjugate
    D^-1/2 (D_w - W) D^-1/2 and mapped back.  Sign fixed so the first
    nonzero entry is positive.
    """
    W = np.zeros((n, n))
    for (x, y), w in edges.items():
        W[x, y] = w
    Dw = np.diag(W.sum(axis=1))
    L = Dw - W
    if r == 0:
        vals, vecs = np.linalg.eigh(L)
        lam, phi = vals[1], vecs[:, 1]
    else:
        deg = np.array(degree_counts(n, edges), dtype=np.float64)
        S = np.diag(deg ** -0.5) @ L @ np.diag(deg ** -0.5)
        vals, vecs = np.linalg.eigh(S)
        lam = vals[1]
        phi = np.diag(deg ** -0.5) @ vecs[:, 1]
        phi = phi / np.linalg.norm(phi)
    nz = np.flatnonzero(np.abs(phi) > 1e-12)
    if nz.size and phi[nz[0]] < 0:
        phi = -phi
    return lam, phi
