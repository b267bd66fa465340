"""Representative-run selection over K randomized unmixing runs.

Pairwise run distances are permutation-aligned Frobenius distances solved
as linear assignment problems; the runs form a complete graph whose
minimum spanning tree's highest-degree node indexes the returned solution.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bundles import ExtractionConfig, extract_library
from .config import UnmixConfig
from .core import AbundanceMatrix, BundleLibrary, HsiCube
from .solver import SolveInfo, aggregate_global, multiscale_unmix
from .superpix import ScaleOperators, build_operators, slic_segment


class ConsensusError(Exception):
    pass


@dataclass(frozen=True)
class RunSet:
    """K global abundance estimates with per-run seeds and libraries."""

    estimates: tuple[AbundanceMatrix, ...]
    seeds: tuple[int, ...]
    libraries: tuple[BundleLibrary, ...]

    def __post_init__(self):
        shapes = {z.coefficients.shape for z in self.estimates}
        if len(shapes) > 1:
            raise ConsensusError(f"runs disagree on (P, N): {shapes}")

    def __len__(self):
        return len(self.estimates)


@dataclass(frozen=True)
class SimilarityGraph:
    weights: np.ndarray  # (K, K) symmetric, zero diagonal
    permutations: dict = field(default_factory=dict)  # (u, v) -> perm array


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Exact minimum-cost assignment on a square cost matrix.

    Augmenting-path algorithm with potentials, O(n^3). Returns ``perm``
    with row i assigned to column perm[i].
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ConsensusError("cost matrix must be square")
    if not np.all(np.isfinite(cost)):
        raise ConsensusError("cost matrix must be finite")
    n = cost.shape[0]
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j] = row matched to column j (1-based, 0 = free)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return perm


def align_cost(z_u: np.ndarray, z_v: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum permutation-aligned distance (1/N) * ||Z_u - P Z_v||_F.

    Returns ``(cost, perm)`` where ``z_v[perm]`` is the alignment of the
    second argument's rows onto the first's.
    """
    z_u = np.asarray(z_u, dtype=np.float64)
    z_v = np.asarray(z_v, dtype=np.float64)
    if z_u.shape != z_v.shape:
        raise ConsensusError(f"shape mismatch {z_u.shape} vs {z_v.shape}")
    # pairwise squared row distances via the expansion of ||a - b||^2
    uu = np.sum(z_u**2, axis=1)[:, None]
    vv = np.sum(z_v**2, axis=1)[None, :]
    sq = np.maximum(uu + vv - 2.0 * (z_u @ z_v.T), 0.0)
    perm = hungarian(sq)
    total = float(np.sum(sq[np.arange(len(perm)), perm]))
    return math.sqrt(total) / z_u.shape[1], perm


def build_graph(runs: RunSet) -> SimilarityGraph:
    k = len(runs)
    if k < 2:
        raise ConsensusError("similarity graph needs at least 2 runs")
    weights = np.zeros((k, k))
    perms = {}
    for u in range(k):
        for v in range(u + 1, k):
            c, perm = align_cost(
                runs.estimates[u].coefficients, runs.estimates[v].coefficients
            )
            weights[u, v] = weights[v, u] = c
            perms[(u, v)] = perm
    return SimilarityGraph(weights=weights, permutations=perms)


def mst(graph: SimilarityGraph) -> list[tuple[int, int, float]]:
    """Kruskal with deterministic (weight, u, v) tie-break."""
    w = graph.weights
    k = w.shape[0]
    edges = sorted(
        ((w[u, v], u, v) for u in range(k) for v in range(u + 1, k))
    )
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree = []
    for weight, u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            tree.append((u, v, float(weight)))
            if len(tree) == k - 1:
                break
    return tree


def select_representative(tree, graph: SimilarityGraph) -> int:
    """Max-degree MST node; ties by smaller incident weight sum, then index."""
    k = graph.weights.shape[0]
    degree = np.zeros(k, dtype=np.int64)
    wsum = np.zeros(k)
    for u, v, w in tree:
        degree[u] += 1
        degree[v] += 1
        wsum[u] += w
        wsum[v] += w
    best = min(range(k), key=lambda i: (-degree[i], wsum[i], i))
    return best


@dataclass
class GmbuaResult:
    representative: AbundanceMatrix
    selected_run: int
    runs: RunSet
    graph: SimilarityGraph | None
    tree: list
    solve_infos: list[SolveInfo]
    superpixels: ScaleOperators
    bundle_estimates: tuple[AbundanceMatrix, ...] = ()

    @property
    def reconstruction(self) -> np.ndarray:
        """Predicted cube from the selected run's bundle-level solution."""
        lib = self.runs.libraries[self.selected_run]
        return lib.signatures @ self.bundle_estimates[self.selected_run].coefficients


def gmbua(cube: HsiCube, cfg: UnmixConfig) -> GmbuaResult:
    """Full pipeline: K (extraction -> multiscale unmixing -> aggregation)
    runs, then MST-centrality selection of the representative estimate."""
    n = cube.n_pixels
    m_target = cfg.m_target or max(1, math.ceil(n / 25))
    spmap = slic_segment(cube, m_target, cfg.compactness, cfg.seed)
    ops = build_operators(spmap)

    run_seeds = [
        int(s.generate_state(1)[0])
        for s in np.random.SeedSequence(cfg.seed).spawn(cfg.n_runs)
    ]
    def one_run(seed):
        lib = extract_library(
            cube,
            ExtractionConfig(
                n_materials=cfg.n_materials,
                n_rounds=cfg.n_rounds,
                pixel_fraction=cfg.pixel_fraction,
                seed=seed,
            ),
        )
        x, info = multiscale_unmix(
            cube.data,
            lib.signatures,
            lib.groups,
            ops,
            cfg.penalty,
            cfg.lam,
            cfg.lam_c,
            cfg.beta,
            cfg.solver,
        )
        return lib, x, info

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            futures = [pool.submit(one_run, seed) for seed in run_seeds]
            outcomes = []
            for k, fut in enumerate(futures):
                try:
                    outcomes.append(fut.result())
                except Exception as exc:
                    raise ConsensusError(f"run {k} failed: {exc}") from exc
    else:
        outcomes = []
        for k, seed in enumerate(run_seeds):
            try:
                outcomes.append(one_run(seed))
            except Exception as exc:
                raise ConsensusError(f"run {k} failed: {exc}") from exc

    estimates, libraries, infos, bundles = [], [], [], []
    for lib, x, info in outcomes:
        estimates.append(aggregate_global(x))
        libraries.append(lib)
        infos.append(info)
        bundles.append(x)

    runs = RunSet(tuple(estimates), tuple(run_seeds), tuple(libraries))
    bundles = tuple(bundles)
    if cfg.n_runs == 1:
        return GmbuaResult(estimates[0], 0, runs, None, [], infos, ops, bundles)
    graph = build_graph(runs)
    tree = mst(graph)
    k_star = select_representative(tree, graph)
    return GmbuaResult(
        estimates[k_star], k_star, runs, graph, tree, infos, ops, bundles
    )
