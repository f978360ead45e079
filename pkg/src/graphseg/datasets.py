"""Synthetic dataset generators and file IO.

All generators draw from numpy's PCG64 via np.random.default_rng(seed), so a
given (parameters, seed) pair reproduces bit-identically across runs and
platforms.  The draw order is part of the contract: per-arc angles first (in
class order), then one noise matrix over the full feature block.

Labels are 1-based class indices.  CSV conventions: features are headerless
comma-separated rows with '.' decimals; label files carry a
``node_index,label`` header; point clouds use whitespace-separated XYZ text.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, InfeasibleSupervisionError


@dataclass
class Dataset:
    """Feature matrix plus optional ground truth and supervision."""

    features: np.ndarray
    labels: np.ndarray | None = None
    supervised: np.ndarray | None = None  # node indices

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max())


def _embed_with_noise(planar, dims, noise_std, rng):
    """Zero-pad 2-d coordinates to R^dims, then add iid Gaussian noise to
    every component."""
    n = planar.shape[0]
    feats = np.zeros((n, dims))
    feats[:, :2] = planar
    if noise_std > 0:
        feats += rng.normal(0.0, noise_std, size=(n, dims))
    return feats


def three_moons(n_per_class: int = 1000, dims: int = 100,
                noise_std: float = 0.14, seed: int = 0) -> Dataset:
    """Three interleaved half-circles embedded in R^dims.

    Top unit half-circles centered (0,0) and (3,0); bottom half-circle of
    radius 1.5 centered (1.5, 0.4).  In the clean limit the arcs keep a
    minimum separation of 0.6.
    """
    if dims < 2:
        raise ConfigError("dims must be >= 2")
    if n_per_class < 1:
        raise ConfigError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    t1 = rng.uniform(0.0, np.pi, n_per_class)
    t2 = rng.uniform(0.0, np.pi, n_per_class)
    t3 = rng.uniform(0.0, np.pi, n_per_class)
    arcs = np.concatenate([
        np.column_stack([np.cos(t1), np.sin(t1)]),
        np.column_stack([3.0 + np.cos(t2), np.sin(t2)]),
        np.column_stack([1.5 + 1.5 * np.cos(t3), 0.4 - 1.5 * np.sin(t3)]),
    ])
    labels = np.repeat(np.array([1, 2, 3], dtype=np.int64), n_per_class)
    return Dataset(_embed_with_noise(arcs, dims, noise_std, rng), labels)


def two_moons(n_per_class: int = 1000, dims: int = 100,
              noise_std: float = 0.08, seed: int = 0) -> Dataset:
    """Two interlocking unit half-circles (the standard construction: top
    half-circle at (0,0), bottom half-circle at (1, 0.5)), embedded and
    noised like three_moons.  Geometry parameters are package defaults."""
    if dims < 2:
        raise ConfigError("dims must be >= 2")
    if n_per_class < 1:
        raise ConfigError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    t1 = rng.uniform(0.0, np.pi, n_per_class)
    t2 = rng.uniform(0.0, np.pi, n_per_class)
    arcs = np.concatenate([
        np.column_stack([np.cos(t1), np.sin(t1)]),
        np.column_stack([1.0 + np.cos(t2), 0.5 - np.sin(t2)]),
    ])
    labels = np.repeat(np.array([1, 2], dtype=np.int64), n_per_class)
    return Dataset(_embed_with_noise(arcs, dims, noise_std, rng), labels)


# ---------------------------------------------------------------------------
# Synthetic 3D scene
# ---------------------------------------------------------------------------

GROUND, HUMAN, VEGETATION = 1, 2, 3


@dataclass(frozen=True)
class SceneSpec:
    """Desk-scale stand-in for an outdoor laser scan.

    A square ground plane of side plane_extent (optionally tilted about the
    y-axis), one box (four walls plus roof) resting on the plane, and
    isotropic Gaussian blobs as a vegetation proxy.  Point counts are split
    proportionally to surface area (blobs count as spheres of radius
    blob_spread).
    """

    plane_extent: float = 20.0
    plane_tilt: float = 0.0
    box_dims: tuple | None = (1.5, 1.5, 1.5)  # (wx, wy, height)
    box_center: tuple = (13.0, 13.0)
    blob_count: int = 3
    blob_spread: float = 0.6
    blob_height: float = 2.0
    noise_std: float = 0.0

    def __post_init__(self):
        if self.plane_extent < 0 or self.blob_count < 0:
            raise ConfigError("extents must be nonnegative")
        if self.box_dims is not None and any(d <= 0 for d in self.box_dims):
            raise ConfigError("box dimensions must be positive")
        if self.blob_count > 0 and self.blob_spread <= 0:
            raise ConfigError("blob_spread must be positive")


def _split_by_area(n_points, areas):
    """Largest-remainder allocation of n_points proportional to areas."""
    areas = np.asarray(areas, dtype=np.float64)
    total = areas.sum()
    if total <= 0:
        raise ConfigError("scene has no surface to sample")
    quota = n_points * areas / total
    counts = np.floor(quota).astype(np.int64)
    counts[areas > 0] = np.maximum(counts[areas > 0], 1)
    while counts.sum() > n_points:
        counts[np.argmax(counts)] -= 1
    rema = quota - np.floor(quota)
    order = np.argsort(-rema)
    i = 0
    while counts.sum() < n_points:
        counts[order[i % len(order)]] += 1
        i += 1
    return counts


def synth_scene(spec: SceneSpec = SceneSpec(), n_points: int = 20000,
                density: float | None = None, seed: int = 0) -> Dataset:
    """Sample a labeled 3D scene: ground plane, box walls/roof, blobs.

    density (points per unit area) overrides n_points when given.  Labels:
    1=ground, 2=human-made structure, 3=vegetation.
    """
    rng = np.random.default_rng(seed)
    L = spec.plane_extent
    slope = np.tan(spec.plane_tilt)

    def plane_z(x):
        return slope * (x - L / 2.0)

    parts = []  # (label, area, sampler)
    if L > 0:
        parts.append((GROUND, L * L, "plane"))
    if spec.box_dims is not None:
        wx, wy, h = spec.box_dims
        parts.append((HUMAN, 2 * (wx + wy) * h + wx * wy, "box"))
    if spec.blob_count > 0:
        area_each = 4.0 * np.pi * spec.blob_spread ** 2
        parts.append((VEGETATION, spec.blob_count * area_each, "blobs"))
    if not parts:
        raise ConfigError("empty scene")
    if density is not None:
        n_points = max(len(parts), int(round(density * sum(a for _, a, _ in parts))))
    counts = _split_by_area(n_points, [a for _, a, _ in parts])

    chunks, labels = [], []
    for (label, _area, kind), m in zip(parts, counts):
        if kind == "plane":
            xy = rng.uniform(0.0, L, size=(m, 2))
            pts = np.column_stack([xy, plane_z(xy[:, 0])])
        elif kind == "box":
            wx, wy, h = spec.box_dims
            cx, cy = spec.box_center
            x0, y0 = cx - wx / 2.0, cy - wy / 2.0
            z0 = plane_z(cx)
            # south, north, west, east walls, then roof
            faces = np.array([wx * h, wx * h, wy * h, wy * h, wx * wy])
            fc = _split_by_area(m, faces)
            u = []
            for fi, fm in enumerate(fc):
                a = rng.uniform(0.0, 1.0, size=(fm, 2))
                if fi == 0:    # y = y0
                    u.append(np.column_stack(
                        [x0 + a[:, 0] * wx, np.full(fm, y0), z0 + a[:, 1] * h]))
                elif fi == 1:  # y = y0 + wy
                    u.append(np.column_stack(
                        [x0 + a[:, 0] * wx, np.full(fm, y0 + wy), z0 + a[:, 1] * h]))
                elif fi == 2:  # x = x0
                    u.append(np.column_stack(
                        [np.full(fm, x0), y0 + a[:, 0] * wy, z0 + a[:, 1] * h]))
                elif fi == 3:  # x = x0 + wx
                    u.append(np.column_stack(
                        [np.full(fm, x0 + wx), y0 + a[:, 0] * wy, z0 + a[:, 1] * h]))
                else:          # roof
                    u.append(np.column_stack(
                        [x0 + a[:, 0] * wx, y0 + a[:, 1] * wy, np.full(fm, z0 + h)]))
            pts = np.concatenate(u)
        else:  # blobs
            span = L if L > 0 else 10.0
            lo, hi = 0.1 * span, 0.9 * span
            centers = []
            while len(centers) < spec.blob_count:
                cand = rng.uniform(lo, hi, size=2)
                if spec.box_dims is not None:
                    bx, by = spec.box_center
                    margin = max(spec.box_dims[:2]) / 2.0 + 3.0 * spec.blob_spread
                    if max(abs(cand[0] - bx), abs(cand[1] - by)) < margin:
                        continue
                centers.append(cand)
            per = _split_by_area(m, np.ones(spec.blob_count))
            u = []
            for (cx, cy), bm in zip(centers, per):
                cz = plane_z(cx) + spec.blob_height
                u.append(np.array([cx, cy, cz])
                         + spec.blob_spread * rng.normal(size=(bm, 3)))
            pts = np.concatenate(u)
        chunks.append(pts)
        labels.append(np.full(pts.shape[0], label, dtype=np.int64))

    points = np.concatenate(chunks)
    labels = np.concatenate(labels)
    if spec.noise_std > 0:
        points = points + rng.normal(0.0, spec.noise_std, size=points.shape)
    return Dataset(points, labels)


# ---------------------------------------------------------------------------
# Supervision sampling
# ---------------------------------------------------------------------------

def sample_supervision(dataset: Dataset, fraction: float,
                       strategy: str = "uniform", seed: int = 0,
                       score: np.ndarray | None = None,
                       band: tuple | None = None) -> np.ndarray:
    """Pick supervised nodes, stratified per class.

    Each class contributes max(1, round(fraction * class_size)) nodes drawn
    without replacement.  strategy 'uniform' draws from the whole class;
    'biased' restricts eligibility to nodes whose score (e.g. the second
    Laplacian eigenvector) lies inside band = (lo, hi), reproducing
    non-uniformly placed supervision.  Returns sorted node indices.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError("fraction must be in (0, 1)")
    if dataset.labels is None:
        raise DataError("supervision sampling needs ground-truth labels")
    if strategy not in ("uniform", "biased"):
        raise ConfigError(f"unknown strategy {strategy!r}")
    if strategy == "biased":
        if score is None or band is None:
            raise ConfigError("biased strategy needs score and band")
        score = np.asarray(score, dtype=np.float64)
        if score.shape[0] != dataset.n_nodes:
            raise DataError("score length mismatch")
        lo, hi = band
        eligible = (score >= lo) & (score <= hi)
    else:
        eligible = np.ones(dataset.n_nodes, dtype=bool)

    rng = np.random.default_rng(seed)
    picked = []
    for cls in np.unique(dataset.labels):
        members = np.flatnonzero(dataset.labels == cls)
        want = max(1, int(round(fraction * members.size)))
        pool = members[eligible[members]]
        if pool.size < want:
            raise InfeasibleSupervisionError(
                f"class {cls}: band leaves {pool.size} eligible nodes, "
                f"need {want}")
        picked.append(rng.choice(pool, size=want, replace=False))
    return np.sort(np.concatenate(picked))


def supervision_dict(dataset: Dataset, nodes) -> dict:
    """{node: true class} mapping for the chosen supervised nodes."""
    if dataset.labels is None:
        raise DataError("dataset has no labels")
    return {int(x): int(dataset.labels[x]) for x in np.asarray(nodes)}


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

def write_features_csv(features, path) -> None:
    np.savetxt(path, np.asarray(features, dtype=np.float64),
               delimiter=",", fmt="%.17g")


def read_features_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise DataError(f"non-finite values in {path}")
    return data


def write_xyz(points, path) -> None:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError("XYZ output needs an N x 3 array")
    np.savetxt(path, pts, fmt="%.17g")


def read_xyz(path) -> np.ndarray:
    data = np.loadtxt(path, ndmin=2, dtype=np.float64)
    if data.shape[1] != 3:
        raise DataError(f"{path} is not 3-column XYZ text")
    if not np.all(np.isfinite(data)):
        raise DataError(f"non-finite values in {path}")
    return data
