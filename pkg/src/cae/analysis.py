"""Contraction measurements: Jacobian norms, saturation, spectra, contraction curves.

A feature map is anything with `encode(X)` (rows are examples), `jacobian(x)`,
`d_in` and `d_out`: TiedAutoEncoder, Rbm and Stack all qualify. Work is split
into fixed-size example chunks, so results do not depend on the thread count.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .numerics import batched_svd_values, make_rng

CHUNK = 64
SAT_LOW, SAT_HIGH = 0.05, 0.95


def _map_chunks(fn, n: int, threads: int = 1) -> list:
    starts = range(0, n, CHUNK)
    chunks = [slice(s, min(s + CHUNK, n)) for s in starts]
    if threads <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def jacobians(f, x) -> np.ndarray:
    return np.stack([f.jacobian(row) for row in np.atleast_2d(x)])


def average_jacobian_norm(f, data: Dataset, threads: int = 1) -> float:
    """Mean over examples of the (non-squared) Frobenius norm of J_f(x)."""
    x = data.features
    if len(x) == 0:
        raise ValueError("empty dataset")
    parts = _map_chunks(lambda c: np.sqrt(np.sum(jacobians(f, x[c]) ** 2, axis=(1, 2))),
                        len(x), threads)
    return float(np.mean(np.concatenate(parts)))


def saturation_fraction(f, data: Dataset) -> float:
    """Average fraction of units per example strictly below 0.05 or above 0.95."""
    h = f.encode(data.features)
    return float(np.mean((h < SAT_LOW) | (h > SAT_HIGH)))


@dataclass
class SpectrumReport:
    mean_singular_values: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "mean_singular_value"])
            for i, v in enumerate(self.mean_singular_values):
                w.writerow([i, repr(float(v))])


def jacobian_spectrum(f, data: Dataset, threads: int = 1) -> SpectrumReport:
    """Per-example descending singular values, averaged position by position."""
    x = data.features
    if len(x) == 0:
        raise ValueError("empty dataset")
    parts = _map_chunks(lambda c: batched_svd_values(jacobians(f, x[c])), len(x), threads)
    return SpectrumReport(np.mean(np.concatenate(parts), axis=0))


def sample_on_sphere(x0, r: float, rng: np.random.Generator) -> np.ndarray:
    if not r > 0:
        raise ValueError("radius must be positive")
    x0 = np.asarray(x0, dtype=np.float64)
    while True:
        u = rng.standard_normal(x0.shape)
        norm = np.linalg.norm(u)
        if norm > 0:
            return x0 + r * (u / norm)


def contraction_ratio(f, x0, x1) -> float:
    """Feature-space distance over input-space distance."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    dist = np.linalg.norm(x1 - x0)
    if dist == 0:
        raise ValueError("contraction ratio undefined for identical points")
    return float(np.linalg.norm(f.encode(x1) - f.encode(x0)) / dist)


def median_pairwise_distance(data: Dataset, max_points: int = 500, seed: int = 0) -> float:
    x = data.features
    if len(x) > max_points:
        x = x[make_rng(seed).choice(len(x), max_points, replace=False)]
    sq = np.sum(x ** 2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    iu = np.triu_indices(len(x), k=1)
    return float(np.median(np.sqrt(d2[iu])))


@dataclass
class ContractionConfig:
    radii: list
    points_per_radius: int = 100
    directions_per_point: int = 10
    seed: int = 0

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=np.float64)
        if r.size == 0 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise ValueError("radii must be positive and strictly ascending")
        self.radii = [float(v) for v in r]

    @classmethod
    def default(cls, data: Dataset, seed: int = 0, n_radii: int = 20, **kw) -> "ContractionConfig":
        med = median_pairwise_distance(data, seed=seed)
        return cls(list(np.geomspace(0.01 * med, 2.0 * med, n_radii)), seed=seed, **kw)


@dataclass
class ContractionReport:
    radii: np.ndarray
    mean_ratio: np.ndarray
    std: np.ndarray
    n: np.ndarray
    samples: list = field(default_factory=list, repr=False)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["radius", "mean_ratio", "std", "n"])
            for row in zip(self.radii, self.mean_ratio, self.std, self.n):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])


def contraction_directions(data: Dataset, cfg: ContractionConfig):
    """Base points and unit directions shared by every radius.

    Returns (base_index, directions) with directions of shape
    (points, directions_per_point, d). Each base point draws from its own
    substream, so the sample set is independent of how work is split.
    """
    n = len(data)
    if n == 0:
        raise ValueError("empty dataset")
    seq = np.random.SeedSequence(cfg.seed)
    pick_seq, *point_seqs = seq.spawn(1 + cfg.points_per_radius)
    replace = cfg.points_per_radius > n
    base = make_rng(pick_seq).choice(n, cfg.points_per_radius, replace=replace)
    dirs = np.stack([_unit_directions(make_rng(s), cfg.directions_per_point, data.dim)
                     for s in point_seqs])
    return base, dirs


def _unit_directions(rng, k: int, d: int) -> np.ndarray:
    out = np.empty((k, d))
    for i in range(k):
        out[i] = sample_on_sphere(np.zeros(d), 1.0, rng)
    return out


def contraction_curve(f, data: Dataset, cfg: ContractionConfig, threads: int = 1) -> ContractionReport:
    """Mean contraction ratio between base points and points on spheres of each radius."""
    base, dirs = contraction_directions(data, cfg)
    x0 = data.features[base]
    h0 = f.encode(x0)
    k = cfg.directions_per_point

    def ratios_at(r):
        def chunk(c):
            x1 = (x0[c, None, :] + r * dirs[c]).reshape(-1, data.dim)
            h1 = f.encode(x1).reshape(-1, k, h0.shape[1])
            return np.linalg.norm(h1 - h0[c, None, :], axis=2) / r
        return np.concatenate(_map_chunks(chunk, len(base), threads)).ravel()

    samples = [ratios_at(r) for r in cfg.radii]
    return ContractionReport(np.array(cfg.radii), np.array([s.mean() for s in samples]),
                             np.array([s.std() for s in samples]),
                             np.array([s.size for s in samples]), samples)


def directional_derivative_average(f, data: Dataset, cfg: ContractionConfig) -> float:
    """Mean of ||J_f(x0) u|| over the same base points and directions as the curve."""
    base, dirs = contraction_directions(data, cfg)
    vals = [np.linalg.norm(dirs[p] @ f.jacobian(data.features[i]).T, axis=1)
            for p, i in enumerate(base)]
    return float(np.mean(np.concatenate(vals)))


def write_metrics_csv(path, avg_jacobian_norm: float, saturation: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["avg_jacobian_norm", "saturation_fraction"])
        w.writerow([repr(float(avg_jacobian_norm)), repr(float(saturation))])
