"""Geometric region terms for 3D point clouds.

Per-point local PCA over the graph neighborhood (the point itself plus its
neighbors): center the neighborhood, form Y = [y0-mean ... ym-mean], and
eigendecompose the 3x3 scatter Y Y^T.  The smallest-eigenvalue direction v1
acts as a surface normal estimate; lambda1 measures how far the
neighborhood is from lying on a plane.  h*(x) is the mean neighborhood
height, a cheap local ground estimate.

Class costs (n_g the reference up direction, C in (0,1) the mix weight,
H(x) = theta * (x3 - h*)):

    ground      f_g = (1-C) |l1 - lambda_g|^2 + C (-|v1 . n_g| + H)
    human-made  f_h = (1-C) |l1 - lambda_h|^2 + C  |v1 . n_g|
    vegetation  f_v =     C |l1 - lambda_v|^2
    vegetation2 / smoke: same lambda-homogeneity form with their own levels
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .graph import Graph

CLASS_TAGS = ("ground", "human", "vegetation", "vegetation2", "smoke")


@dataclass
class LocalGeometry:
    """Per-point PCA summary: eigenvalues ascending, unit eigenvectors with
    v1 sign-fixed to a nonnegative up component, local mean height h_star,
    the point's own height z, and a degeneracy flag for all-coincident
    neighborhoods (lambda = 0, v1 = (0,0,1) by convention)."""

    lambdas: np.ndarray    # (N, 3) ascending
    v1: np.ndarray         # (N, 3)
    v2: np.ndarray
    v3: np.ndarray
    h_star: np.ndarray     # (N,)
    z: np.ndarray          # (N,) own third coordinate
    degenerate: np.ndarray  # (N,) bool


def local_pca(points, g: Graph) -> LocalGeometry:
    """Neighborhood PCA at every node of g (neighborhood = node + graph
    neighbors).  Works for any neighborhood size; rank-deficient
    neighborhoods simply produce zero eigenvalues."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError("local_pca needs N x 3 points")
    if pts.shape[0] != g.n_nodes:
        raise DataError("points and graph disagree on node count")
    n = g.n_nodes

    # neighborhood sums via the directed edge list (each neighbor once)
    m = g.degree.astype(np.float64) + 1.0           # |{x} u nbrs|
    s1 = pts.copy()                                  # sum of coordinates
    np.add.at(s1, g.src, pts[g.dst])
    mean = s1 / m[:, None]
    # sum of outer products y y^T
    outer = pts[:, :, None] * pts[:, None, :]
    s2 = outer.copy()
    np.add.at(s2, g.src, pts[g.dst][:, :, None] * pts[g.dst][:, None, :])
    scatter = s2 - m[:, None, None] * (mean[:, :, None] * mean[:, None, :])

    lam, vec = np.linalg.eigh(scatter)               # ascending eigenvalues
    np.maximum(lam, 0.0, out=lam)                    # clip tiny negatives

    # sign convention: v1 points (weakly) upward; fully zero third component
    # falls back to the first nonzero coordinate being positive
    v1 = vec[:, :, 0]
    flip = (v1[:, 2] < 0)
    zero_up = (v1[:, 2] == 0)
    flip |= zero_up & (v1[:, 0] < 0)
    flip |= zero_up & (v1[:, 0] == 0) & (v1[:, 1] < 0)
    v1 = np.where(flip[:, None], -v1, v1)

    degenerate = lam[:, 2] <= 1e-30
    if np.any(degenerate):
        lam[degenerate] = 0.0
        v1[degenerate] = (0.0, 0.0, 1.0)
        vec[degenerate, :, 1] = (0.0, 1.0, 0.0)
        vec[degenerate, :, 2] = (1.0, 0.0, 0.0)

    h_star = s1[:, 2] / m
    return LocalGeometry(
        lambdas=lam,
        v1=v1,
        v2=vec[:, :, 1],
        v3=vec[:, :, 2],
        h_star=h_star,
        z=pts[:, 2].copy(),
        degenerate=degenerate,
    )


def lambda_homogeneity(lam1, lam_level):
    """|lambda1 - lambda_level|^2, elementwise."""
    diff = np.asarray(lam1, dtype=np.float64) - lam_level
    return diff * diff


@dataclass(frozen=True)
class RegionTermConfig:
    """Expected flatness levels per class plus the direction/height mix.

    lambda levels are scene-dependent presets, not universal constants; see
    defaults() for a scale-aware choice.
    """

    lambda_g: float
    lambda_h: float
    lambda_v: float
    c_mix: float = 0.1
    theta: float = 1.0
    n_g: tuple = (0.0, 0.0, 1.0)
    lambda_v2: float | None = None
    lambda_smoke: float | None = None

    def __post_init__(self):
        if not 0.0 < self.c_mix < 1.0:
            raise ConfigError("c_mix must be in (0, 1)")
        for name in ("lambda_g", "lambda_h", "lambda_v"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        ng = np.asarray(self.n_g, dtype=np.float64)
        if ng.shape != (3,) or abs(np.linalg.norm(ng) - 1.0) > 1e-9:
            raise ConfigError("n_g must be a unit 3-vector")

    @staticmethod
    def defaults(mean_neighbor_distance: float, c_mix: float = 0.1,
                 theta: float = 1.0) -> "RegionTermConfig":
        """Scale-aware levels: flat classes expect lambda1 near
        0.002 * dbar^2, volumetric classes 10x that."""
        base = 0.002 * mean_neighbor_distance ** 2
        return RegionTermConfig(lambda_g=base, lambda_h=base,
                                lambda_v=10.0 * base, c_mix=c_mix,
                                theta=theta)


def mean_neighbor_distance(g: Graph, points=None) -> float:
    """Mean Euclidean length of the graph's directed edges."""
    pts = g.points if points is None else np.asarray(points, dtype=np.float64)
    if pts is None:
        raise DataError("graph carries no points; pass them explicitly")
    return float(np.linalg.norm(pts[g.dst] - pts[g.src], axis=1).mean())


def class_region_terms(geom: LocalGeometry, cfg: RegionTermConfig,
                       classes=("ground", "human", "vegetation")) -> np.ndarray:
    """N x n cost matrix, one column per requested class tag (order kept)."""
    for tag in classes:
        if tag not in CLASS_TAGS:
            raise ConfigError(f"unknown region class {tag!r}")
    if len(set(classes)) != len(classes):
        raise ConfigError("duplicate region class tags")

    lam1 = geom.lambdas[:, 0]
    ng = np.asarray(cfg.n_g, dtype=np.float64)
    dot = np.abs(geom.v1 @ ng)
    height = cfg.theta * (geom.z - geom.h_star)
    C = cfg.c_mix

    cols = []
    for tag in classes:
        if tag == "ground":
            cols.append((1 - C) * lambda_homogeneity(lam1, cfg.lambda_g)
                        + C * (-dot + height))
        elif tag == "human":
            cols.append((1 - C) * lambda_homogeneity(lam1, cfg.lambda_h)
                        + C * dot)
        elif tag == "vegetation":
            cols.append(C * lambda_homogeneity(lam1, cfg.lambda_v))
        elif tag == "vegetation2":
            if cfg.lambda_v2 is None:
                raise ConfigError("vegetation2 requested without lambda_v2")
            cols.append(C * lambda_homogeneity(lam1, cfg.lambda_v2))
        else:  # smoke
            if cfg.lambda_smoke is None:
                raise ConfigError("smoke requested without lambda_smoke")
            cols.append(C * lambda_homogeneity(lam1, cfg.lambda_smoke))
    return np.column_stack(cols)


def write_feature_csv(points, geom: LocalGeometry, path) -> None:
    """Per-point feature dump: x,y,z,l1,l2,l3,v1x,v1y,v1z,h*."""
    pts = np.asarray(points, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("x,y,z,l1,l2,l3,v1x,v1y,v1z,h*\n")
        for i in range(pts.shape[0]):
            row = np.concatenate([pts[i], geom.lambdas[i], geom.v1[i],
                                  [geom.h_star[i]]])
            fh.write(",".join("%.17g" % v for v in row) + "\n")
