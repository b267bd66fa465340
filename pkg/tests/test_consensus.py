import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmbua.config import UnmixConfig
from gmbua.consensus import (
    ConsensusError,
    GmbuaResult,
    RunSet,
    SimilarityGraph,
    align_cost,
    build_graph,
    gmbua,
    hungarian,
    mst,
    select_representative,
)
from gmbua.core import AbundanceMatrix, HsiCube
from gmbua.penalties import PenaltySpec
from gmbua.solver import SolverParams

from .oracles import brute_force_assignment, brute_force_mst_weight, prim_mst_weight


class TestHungarian:
    def test_against_exhaustive(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 8))
            cost = rng.uniform(size=(n, n))
            perm = hungarian(cost)
            got = float(np.sum(cost[np.arange(n), perm]))
            _, ref = brute_force_assignment(cost)
            assert got == pytest.approx(ref, abs=1e-12)
            assert sorted(perm) == list(range(n))

    def test_identity_cost(self):
        cost = 1.0 - np.eye(4)
        np.testing.assert_array_equal(hungarian(cost), np.arange(4))

    def test_known_instance(self):
        # classic 3x3 example: optimal assignment is (0->1, 1->0, 2->2)
        cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
        perm = hungarian(cost)
        assert float(np.sum(cost[np.arange(3), perm])) == pytest.approx(5.0)

    def test_rejects_bad_input(self):
        with pytest.raises(ConsensusError):
            hungarian(np.zeros((2, 3)))
        with pytest.raises(ConsensusError):
            hungarian(np.array([[np.inf, 0.0], [0.0, 1.0]]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**31 - 1))
    def test_handles_ties_and_negatives(self, n, seed):
        cost = np.random.default_rng(seed).integers(-3, 4, size=(n, n)).astype(float)
        perm = hungarian(cost)
        got = float(np.sum(cost[np.arange(n), perm]))
        _, ref = brute_force_assignment(cost)
        assert got == pytest.approx(ref, abs=1e-12)


class TestAlignCost:
    def test_permuted_copy_has_zero_cost(self, rng):
        z = rng.dirichlet(np.ones(5), size=30).T
        order = rng.permutation(5)
        cost, perm = align_cost(z, z[order])
        # cost uses the expanded form of squared distances, so exact zeros
        # come back as rounding-level positives
        assert cost == pytest.approx(0.0, abs=1e-8)
        np.testing.assert_array_equal(z[order][perm], z)

    def test_cost_formula(self, rng):
        # for already-aligned rows the cost is (1/N)*||Zu - Zv||_F
        z_u = rng.uniform(size=(3, 20))
        z_v = z_u + rng.normal(scale=1e-3, size=(3, 20))
        cost, perm = align_cost(z_u, z_v)
        assert cost <= np.linalg.norm(z_u - z_v) / 20 + 1e-12

    def test_symmetry(self, rng):
        z_u = rng.uniform(size=(4, 15))
        z_v = rng.uniform(size=(4, 15))
        assert align_cost(z_u, z_v)[0] == pytest.approx(align_cost(z_v, z_u)[0])

    def test_shape_mismatch(self, rng):
        with pytest.raises(ConsensusError):
            align_cost(rng.uniform(size=(3, 5)), rng.uniform(size=(4, 5)))


def _random_graph(rng, k):
    w = rng.uniform(0.1, 1.0, size=(k, k))
    w = np.triu(w, 1)
    w = w + w.T
    return SimilarityGraph(weights=w)


class TestMst:
    def test_against_exhaustive(self, rng):
        for _ in range(100):
            k = int(rng.integers(2, 7))
            graph = _random_graph(rng, k)
            tree = mst(graph)
            assert len(tree) == k - 1
            got = sum(w for _, _, w in tree)
            assert got == pytest.approx(brute_force_mst_weight(graph.weights),
                                        abs=1e-12)

    def test_against_prim(self, rng):
        for _ in range(50):
            k = int(rng.integers(2, 10))
            graph = _random_graph(rng, k)
            got = sum(w for _, _, w in mst(graph))
            assert got == pytest.approx(prim_mst_weight(graph.weights), abs=1e-12)

    def test_spanning(self, rng):
        graph = _random_graph(rng, 8)
        tree = mst(graph)
        touched = {u for u, _, _ in tree} | {v for _, v, _ in tree}
        assert touched == set(range(8))

    def test_deterministic_tie_break(self):
        # all weights equal: Kruskal with (w, u, v) ordering picks the
        # star-free chain of lexicographically smallest edges
        w = np.ones((4, 4)) - np.eye(4)
        tree = mst(SimilarityGraph(weights=w))
        assert tree == [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]


class TestSelectRepresentative:
    def test_max_degree_wins(self):
        graph = _random_graph(np.random.default_rng(0), 4)
        tree = [(0, 1, 0.5), (0, 2, 0.5), (0, 3, 0.5)]
        assert select_representative(tree, graph) == 0

    def test_tie_broken_by_weight_sum(self):
        graph = SimilarityGraph(weights=np.zeros((4, 4)))
        # chain 0-1-2-3: nodes 1 and 2 both have degree 2; node 2's
        # incident weight is smaller
        tree = [(0, 1, 0.9), (1, 2, 0.1), (2, 3, 0.1)]
        assert select_representative(tree, graph) == 2

    def test_final_tie_by_index(self):
        graph = SimilarityGraph(weights=np.zeros((4, 4)))
        tree = [(0, 1, 0.5), (1, 2, 0.5), (2, 3, 0.5)]
        assert select_representative(tree, graph) == 1


def _runset(rng, k=4, p=3, n=20, spread=0.01):
    base = rng.dirichlet(np.ones(p), size=n).T
    estimates, libs = [], []
    for _ in range(k):
        z = base + rng.normal(scale=spread, size=(p, n))
        z = np.maximum(z, 0.0)
        z /= z.sum(axis=0)
        estimates.append(AbundanceMatrix(level="global", coefficients=z))
    return RunSet(tuple(estimates), tuple(range(k)), tuple([None] * k))


class TestGraphAndRunSet:
    def test_build_graph_symmetric(self, rng):
        runs = _runset(rng)
        graph = build_graph(runs)
        np.testing.assert_array_equal(graph.weights, graph.weights.T)
        assert np.all(np.diag(graph.weights) == 0.0)
        assert set(graph.permutations) == {(u, v) for u in range(4)
                                           for v in range(u + 1, 4)}

    def test_duplicate_run_is_selected(self, rng):
        # three near-identical runs plus one outlier: the representative
        # must come from the tight cluster
        runs_close = _runset(rng, k=3, spread=1e-4)
        outlier = _runset(rng, k=1, spread=0.0)
        runs = RunSet(
            runs_close.estimates + outlier.estimates,
            (0, 1, 2, 3),
            (None,) * 4,
        )
        graph = build_graph(runs)
        tree = mst(graph)
        assert select_representative(tree, graph) in (0, 1, 2)

    def test_runset_shape_agreement(self, rng):
        a = AbundanceMatrix(level="global",
                            coefficients=rng.dirichlet(np.ones(3), size=5).T)
        b = AbundanceMatrix(level="global",
                            coefficients=rng.dirichlet(np.ones(4), size=5).T)
        with pytest.raises(ConsensusError):
            RunSet((a, b), (0, 1), (None, None))

    def test_graph_needs_two_runs(self, rng):
        runs = _runset(rng, k=1)
        with pytest.raises(ConsensusError):
            build_graph(runs)


def _toy_cube(rng, h=12, w=12, bands=30, p=3):
    sig = rng.uniform(0.2, 1.0, size=(bands, p))
    z = rng.dirichlet(np.ones(p), size=h * w).T
    pure = rng.choice(h * w, size=3 * p, replace=False)
    for i, px in enumerate(pure):
        col = np.zeros(p)
        col[i % p] = 1.0
        z[:, px] = col
    y = sig @ z + rng.normal(scale=0.005, size=(bands, h * w))
    return HsiCube(data=np.maximum(y, 0.0), height=h, width=w)


def _cfg(**kw):
    base = dict(
        n_materials=3,
        penalty=PenaltySpec("group"),
        lam=1e-3,
        lam_c=1e-2,
        beta=1.0,
        n_runs=3,
        n_rounds=3,
        pixel_fraction=0.5,
        m_target=12,
        seed=42,
        solver=SolverParams(max_iter=120, tol_primal=1e-4, tol_dual=1e-4),
    )
    base.update(kw)
    return UnmixConfig(**base)


class TestGmbuaPipeline:
    def test_end_to_end(self, rng):
        cube = _toy_cube(rng)
        result = gmbua(cube, _cfg())
        assert isinstance(result, GmbuaResult)
        assert len(result.runs) == 3
        assert 0 <= result.selected_run < 3
        z = result.representative.coefficients
        assert z.shape == (3, 144)
        np.testing.assert_allclose(z.sum(axis=0), 1.0, atol=1e-5)
        assert result.reconstruction.shape == (30, 144)

    def test_deterministic(self, rng):
        cube = _toy_cube(rng)
        a = gmbua(cube, _cfg())
        b = gmbua(cube, _cfg())
        assert a.selected_run == b.selected_run
        np.testing.assert_array_equal(a.representative.coefficients,
                                      b.representative.coefficients)

    def test_single_run_shortcut(self, rng):
        cube = _toy_cube(rng)
        result = gmbua(cube, _cfg(n_runs=1))
        assert result.selected_run == 0
        assert result.graph is None and result.tree == []

    def test_threaded_runs_match_sequential(self, rng):
        cube = _toy_cube(rng)
        a = gmbua(cube, _cfg())
        b = gmbua(cube, _cfg(n_jobs=3))
        assert a.selected_run == b.selected_run
        np.testing.assert_array_equal(a.representative.coefficients,
                                      b.representative.coefficients)

    def test_run_failure_wrapped(self, rng):
        cube = _toy_cube(rng)
        # pixel fraction too small for P candidates -> every run fails
        with pytest.raises(ConsensusError, match="run 0 failed"):
            gmbua(cube, _cfg(pixel_fraction=0.01))
