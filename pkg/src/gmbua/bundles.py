"""Structured-library extraction from the observed cube.

T rounds of (random pixel subset -> pure-pixel endmember extraction) fill a
candidate pool of T*P signatures, which spectral-angle k-means partitions
into P groups forming the bundle library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BundleLibrary, HsiCube
from .penalties import GroupStructure


class ExtractionError(Exception):
    pass


class DegenerateGeometryError(ExtractionError):
    """Sampled pixels do not span enough directions to extract P candidates."""


@dataclass(frozen=True)
class ExtractionConfig:
    n_materials: int
    n_rounds: int = 10
    pixel_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_materials < 1 or self.n_rounds < 1:
            raise ExtractionError("n_materials and n_rounds must be positive")
        if not 0.0 < self.pixel_fraction <= 1.0:
            raise ExtractionError("pixel_fraction must be in (0, 1]")


@dataclass(frozen=True)
class CandidatePool:
    """L x (T*P) candidate signatures with (round, slot) provenance."""

    signatures: np.ndarray
    provenance: tuple[tuple[int, int], ...]


def sample_pixels(cube: HsiCube, fraction: float, rng: np.random.Generator):
    """Uniform sample of ceil(fraction * N) distinct pixel indices."""
    if not 0.0 < fraction <= 1.0:
        raise ExtractionError("fraction must be in (0, 1]")
    n_draw = math.ceil(fraction * cube.n_pixels)
    return rng.choice(cube.n_pixels, size=n_draw, replace=False)


def vca_extract(pixels: np.ndarray, n_materials: int, rng=None) -> np.ndarray:
    """Pure-pixel endmember extraction by orthogonal-projection maximization.

    Works on scores in the top-P principal subspace of the mean-removed
    pixels. The first pick maximizes |projection on the first principal
    direction|; each further pick maximizes the distance to the affine hull
    of the picks so far. Every output column is an input column.

    ``rng`` is accepted for interface uniformity; the procedure is
    deterministic.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    p = n_materials
    if pixels.ndim != 2 or pixels.shape[1] < p:
        raise ExtractionError(f"need at least {p} pixels, got {pixels.shape}")
    if p == 1 and pixels.shape[1] == 1:
        return pixels.copy()

    centered = pixels - pixels.mean(axis=1, keepdims=True)
    u, sv, _ = np.linalg.svd(centered, full_matrices=False)
    scale = sv[0] if sv[0] > 0 else 1.0
    if p > 1 and (len(sv) < p - 1 or sv[p - 2] <= 1e-10 * scale):
        raise DegenerateGeometryError(
            f"sampled pixels have rank < {p - 1} after mean removal"
        )
    d = min(p, len(sv))
    scores = u[:, :d].T @ centered  # (d, n)

    selected = [int(np.argmax(np.abs(scores[0])))]
    basis = np.zeros((d, 0))
    for _ in range(1, p):
        anchor = scores[:, selected[0]][:, None]
        resid = scores - anchor
        if basis.shape[1]:
            resid = resid - basis @ (basis.T @ resid)
        dist = np.linalg.norm(resid, axis=0)
        k = int(np.argmax(dist))
        if dist[k] <= 1e-10 * scale:
            raise DegenerateGeometryError(
                "no pixel outside the affine hull of the current picks"
            )
        direction = resid[:, k] / dist[k]
        basis = np.hstack([basis, direction[:, None]])
        selected.append(k)
    return pixels[:, selected].copy()


def build_pool(cube: HsiCube, cfg: ExtractionConfig) -> CandidatePool:
    """Run T independent sample+extract rounds and stack the candidates."""
    n_draw = math.ceil(cfg.pixel_fraction * cube.n_pixels)
    if n_draw < cfg.n_materials:
        raise ExtractionError(
            f"ceil(alpha*N) = {n_draw} < P = {cfg.n_materials}; increase alpha"
        )
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_rounds)
    columns, provenance = [], []
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        idx = sample_pixels(cube, cfg.pixel_fraction, rng)
        try:
            psi = vca_extract(cube.data[:, idx], cfg.n_materials, rng)
        except ExtractionError as exc:
            raise ExtractionError(f"extraction round {i} failed: {exc}") from exc
        columns.append(psi)
        provenance.extend((i, j) for j in range(cfg.n_materials))
    return CandidatePool(np.hstack(columns), tuple(provenance))


def _angles(unit_cols, unit_centroids):
    cos = np.clip(unit_centroids.T @ unit_cols, -1.0, 1.0)
    return np.arccos(cos)  # (k, n)


def cluster_candidates(
    pool: CandidatePool,
    n_materials: int,
    rng: np.random.Generator,
    n_restarts: int = 10,
    max_iter: int = 100,
) -> BundleLibrary:
    """Partition the pool into P groups by k-means with spectral-angle
    distance (best of ``n_restarts`` by within-cluster angle sum)."""
    sig = np.asarray(pool.signatures, dtype=np.float64)
    n = sig.shape[1]
    k = n_materials
    if n < k:
        raise ExtractionError(f"pool has {n} candidates, need at least {k}")
    norms = np.linalg.norm(sig, axis=0)
    if np.any(norms == 0):
        raise ExtractionError("pool contains an all-zero candidate signature")
    unit = sig / norms

    best_labels, best_cost = None, np.inf
    for _ in range(n_restarts):
        centroids = unit[:, rng.choice(n, size=k, replace=False)].copy()
        labels = None
        for _ in range(max_iter):
            ang = _angles(unit, centroids)
            new_labels = np.argmin(ang, axis=0)
            # re-seed empty clusters to distinct farthest points
            far_order = iter(np.argsort(-np.min(ang, axis=0)))
            for c in range(k):
                if not np.any(new_labels == c):
                    for far in far_order:
                        if np.sum(new_labels == new_labels[far]) > 1:
                            new_labels[int(far)] = c
                            break
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for c in range(k):
                members = labels == c
                if not members.any():
                    continue
                mean = unit[:, members].mean(axis=1)
                nrm = np.linalg.norm(mean)
                centroids[:, c] = mean / nrm if nrm > 0 else mean
        cost = float(np.sum(_angles(unit, centroids)[labels, np.arange(n)]))
        if cost < best_cost:
            best_cost, best_labels = cost, labels
    if best_labels is None or len(np.unique(best_labels)) < k:
        raise ExtractionError("clustering could not produce P nonempty groups")

    # deterministic group order: by the lowest candidate index in each cluster
    order = sorted(range(k), key=lambda c: int(np.argmax(best_labels == c)))
    member_lists = [np.flatnonzero(best_labels == c) for c in order]
    columns = np.hstack([sig[:, m] for m in member_lists])
    groups = GroupStructure.from_sizes([len(m) for m in member_lists])
    return BundleLibrary(signatures=np.maximum(columns, 0.0), groups=groups)


def extract_library(cube: HsiCube, cfg: ExtractionConfig) -> BundleLibrary:
    """Full extraction: candidate pool plus clustering, seeded from cfg."""
    pool = build_pool(cube, cfg)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x5EED)))
    return cluster_candidates(pool, cfg.n_materials, rng)
