"""Fully unsupervised two-class segmentation from the graph spectrum.

The second eigenvector phi of the weighted graph Laplacian orders nodes
along the dominant cluster split; region costs f_i = alpha |phi - c_i|^p
around two centroids turn that ordering into assignment costs for the
max-flow solver.  With p = 2 the centroids themselves can be re-estimated
as per-class means of phi, alternating with the solve until the labeling
stops changing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import ConfigError, SpectralConvergenceError
from .graph import Graph
from .solver import RegionCosts, SolverParams, SolverResult, solve

_NORMALIZATIONS = ("unnormalized", "random_walk")


@dataclass
class SpectralField:
    """Second Laplacian eigenpair: unit-norm phi, its eigenvalue, the
    residual ||L phi - eigenvalue phi||, and whether the graph was connected
    (if not, phi is a component indicator rather than a cluster split)."""

    phi: np.ndarray
    eigenvalue: float
    residual: float
    connected: bool


@dataclass(frozen=True)
class CentroidPair:
    """Two region-cost centroids in phi-space with weight alpha and
    exponent p_exp (1 or 2)."""

    c1: float
    c2: float
    alpha: float
    p_exp: int = 2

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if self.p_exp not in (1, 2):
            raise ConfigError("p_exp must be 1 or 2")
        if self.c1 == self.c2:
            raise ConfigError("centroids must differ")


def _laplacian_pieces(g: Graph, normalization: str):
    """Symmetric operator S with the same spectrum as the chosen Laplacian,
    plus the map back from S-eigenvectors to Laplacian eigenvectors and the
    known first eigenvector of S."""
    n = g.n_nodes
    W = sp.csr_matrix((g.weight, (g.src, g.dst)), shape=(n, n))
    dw = np.asarray(W.sum(axis=1)).ravel()
    L = sp.diags(dw) - W
    if normalization == "unnormalized":
        first = np.full(n, 1.0 / np.sqrt(n))
        return L, None, first
    deg = g.degree.astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg)
    S = sp.diags(inv_sqrt) @ L @ sp.diags(inv_sqrt)
    first = np.sqrt(deg)
    first /= np.linalg.norm(first)
    return S.tocsr(), inv_sqrt, first


def second_eigenvector(g: Graph, normalization: str = "random_walk",
                       seed: int = 0, tol: float = 1e-8) -> SpectralField:
    """Eigenvector of the second-smallest Laplacian eigenvalue.

    normalization 'unnormalized' uses L = D_w - W; 'random_walk' uses
    D^-1 (D_w - W) with the neighbor-count degree, computed through its
    symmetric conjugate.  The known constant first eigenvector is deflated
    away and the remaining extremal pair found by Lanczos iteration on the
    spectrum-flipped operator, seeded deterministically.  Iteration budget
    is 10 N matrix applications; exceeding it raises a convergence error
    carrying the reached residual.
    """
    if normalization not in _NORMALIZATIONS:
        raise ConfigError(f"unknown normalization {normalization!r}")
    n = g.n_nodes
    if n < 3:
        raise ConfigError("need at least 3 nodes for a second eigenvector")
    S, inv_sqrt, first = _laplacian_pieces(g, normalization)

    # flip the spectrum: M = shift I - S is PSD with Gershgorin shift, so
    # the second-smallest eigenvalue of S becomes the largest of M after
    # deflating the known first eigenvector.
    shift = float(2.0 * S.diagonal().max()) + 1.0

    def matvec(x):
        y = shift * x - S @ x
        return y - (shift * np.dot(first, x)) * first

    M = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    rng = np.random.default_rng(seed)
    v0 = rng.normal(size=n)
    v0 -= np.dot(first, v0) * first

    budget = 10 * n
    try:
        mu, vec = eigsh(M, k=1, which="LA", v0=v0, maxiter=budget, tol=tol)
    except ArpackNoConvergence as exc:
        res = np.nan
        if exc.eigenvalues.size:
            mu, vec = exc.eigenvalues[-1], exc.eigenvectors[:, -1]
            res = float(np.linalg.norm(S @ vec - (shift - mu) * vec))
        raise SpectralConvergenceError(
            f"Lanczos did not converge within {budget} applications",
            residual=res) from exc

    lam = shift - float(mu[0])
    psi = vec[:, 0]
    psi -= np.dot(first, psi) * first   # numerical re-orthogonalization
    psi /= np.linalg.norm(psi)
    residual = float(np.linalg.norm(S @ psi - lam * psi))

    phi = psi if inv_sqrt is None else inv_sqrt * psi
    phi = phi / np.linalg.norm(phi)
    nz = np.flatnonzero(np.abs(phi) > 1e-12)
    if nz.size and phi[nz[0]] < 0:
        phi = -phi

    n_comp, _ = connected_components(
        sp.csr_matrix((g.weight, (g.src, g.dst)), shape=(n, n)),
        directed=False)
    return SpectralField(phi=phi, eigenvalue=lam, residual=residual,
                         connected=(n_comp == 1))


def spectral_region_terms(phi, centroids: CentroidPair) -> np.ndarray:
    """N x 2 costs f_i = alpha |phi - c_i|^p."""
    phi = np.asarray(phi, dtype=np.float64)
    d1 = np.abs(phi - centroids.c1)
    d2 = np.abs(phi - centroids.c2)
    if centroids.p_exp == 2:
        d1, d2 = d1 * d1, d2 * d2
    return centroids.alpha * np.column_stack([d1, d2])


def joint_energy(g: Graph, phi, labels, c1: float, c2: float,
                 alpha: float) -> float:
    """alpha sum_{V1} |c1-phi|^2 + alpha sum_{V2} |c2-phi|^2 + boundary
    energy of the partition (both ordered pairs per boundary edge)."""
    phi = np.asarray(phi, dtype=np.float64)
    labels = np.asarray(labels)
    region = alpha * (np.sum((phi[labels == 1] - c1) ** 2)
                      + np.sum((phi[labels == 2] - c2) ** 2))
    cut = float(np.sum(g.weight[labels[g.src] != labels[g.dst]]))
    return float(region) + cut


@dataclass
class UnsupervisedResult:
    """Alternating-segmentation outcome: final solve, labels, centroid
    trajectory, and whether a class ever emptied (its centroid then kept)."""

    labels: np.ndarray
    result: SolverResult
    c1: float
    c2: float
    outer_iterations: int
    converged: bool
    empty_class: bool
    centroid_history: list


def alternating_segmentation(g: Graph, phi, alpha: float,
                             params: SolverParams = SolverParams(),
                             max_outer: int = 20, p_exp: int = 2,
                             warm_start: bool = False,
                             centroids: tuple | None = None) -> UnsupervisedResult:
    """Alternate two-class solves with centroid re-estimation.

    Starts from c1 = max(phi), c2 = min(phi) (or explicit centroids);
    each outer step solves the two-class problem with costs
    alpha |phi - c_i|^p, then (p = 2 only) moves each centroid to the mean
    of phi over its class.  Stops when the labeling repeats.  p = 1 is
    allowed only for the fixed-centroid single pass.
    """
    if max_outer < 1:
        raise ConfigError("max_outer must be >= 1")
    if p_exp == 1 and max_outer != 1:
        raise ConfigError("p_exp=1 supports only the fixed-centroid pass "
                          "(max_outer=1)")
    phi = np.asarray(phi, dtype=np.float64)
    if centroids is None:
        c1, c2 = float(phi.max()), float(phi.min())
    else:
        c1, c2 = map(float, centroids)

    prev_labels = None
    state = None
    empty_class = False
    history = [(c1, c2)]
    result = None
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        costs = RegionCosts(
            C=spectral_region_terms(phi, CentroidPair(c1, c2, alpha, p_exp)))
        result = solve(g, costs, params=params,
                       init=state if warm_start else None)
        if warm_start:
            state = result.state
        labels = result.labels
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            converged = True
            break
        prev_labels = labels
        if p_exp == 2 and outer < max_outer:
            in1 = labels == 1
            in2 = labels == 2
            if in1.any():
                c1 = float(phi[in1].mean())
            else:
                empty_class = True
            if in2.any():
                c2 = float(phi[in2].mean())
            else:
                empty_class = True
            if c1 == c2:  # collapse guard: keep the previous separation
                c1, c2 = history[-1]
                empty_class = True
            history.append((c1, c2))

    return UnsupervisedResult(
        labels=result.labels, result=result, c1=c1, c2=c2,
        outer_iterations=outer, converged=converged,
        empty_class=empty_class, centroid_history=history)
