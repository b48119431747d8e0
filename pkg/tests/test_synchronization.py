import random

import pytest

from mgmatch.gm import Effort, GmMatching, solve_gm
from mgmatch.model import FORBIDDEN, objective, validate
from mgmatch.synchronization import (
    PairwiseMatchingSet,
    build_sync_problem,
    pair_subproblem,
    solution_pairs,
    solve_all_pairwise,
    sync_metrics,
    synchronize,
)

from conftest import part
from oracles import random_problem


def exhaustive(sub, seed=0, effort=Effort.EXHAUSTIVE):
    return solve_gm(sub, seed, Effort.EXHAUSTIVE)


class TestSolveAllPairwise:
    def test_t3_matchings(self, t3):
        result = solve_all_pairwise(t3, gm=exhaustive, seed=0)
        assert result.matchings[(0, 1)] == GmMatching([(0, 0), (1, 1)])
        assert result.matchings[(0, 2)] == GmMatching([(0, 0)])
        assert result.matchings[(1, 2)] == GmMatching([(1, 0)])

    def test_two_objects(self, t3):
        sub = t3.restrict([0, 1])
        result = solve_all_pairwise(sub, gm=exhaustive)
        assert len(result.matchings) == 1

    def test_empty_tables(self):
        from mgmatch.model import MgmProblem

        problem = MgmProblem([2, 2, 2])
        result = solve_all_pairwise(problem)
        assert all(len(m) == 0 for m in result.matchings.values())

    def test_workers_agree(self, t3):
        a = solve_all_pairwise(t3, seed=3, workers=1)
        b = solve_all_pairwise(t3, seed=3, workers=3)
        assert a.matchings == b.matchings

    def test_union_pairs(self, t3):
        result = solve_all_pairwise(t3, gm=exhaustive, seed=0)
        assert ((0, 0), (1, 0)) in result.pairs()
        assert ((1, 1), (2, 0)) in result.pairs()


class TestBuildSyncProblem:
    def test_sparse_support_matches_original(self, t3):
        matchings = solve_all_pairwise(t3, gm=exhaustive, seed=0)
        sync = build_sync_problem(t3, matchings, mode="sparse")
        for (p, q), table in sync.costs.items():
            assert set(table.linear) == set(t3.costs[(p, q)].linear)
            assert not table.quadratic
        assert sync.linear_cost(0, 1, 0, 0) == -1.0
        assert sync.linear_cost(0, 1, 0, 1) == 0.0

    def test_dense_equals_sparse_without_forbidden(self):
        rng = random.Random(5)
        problem = random_problem(rng, 3, 3, forbidden_frac=0.0, quad_frac=0.0)
        matchings = solve_all_pairwise(problem, gm=exhaustive)
        dense = build_sync_problem(problem, matchings, mode="dense")
        sparse = build_sync_problem(problem, matchings, mode="sparse")
        assert dense == sparse

    def test_soft_mode_prices_forbidden_pairs(self, t3):
        matchings = solve_all_pairwise(t3, gm=exhaustive, seed=0)
        soft = build_sync_problem(t3, matchings, mode="soft", alpha=1.0)
        # (1,0) of pair (0,1) is forbidden in t3, priced at +alpha here
        assert soft.linear_cost(0, 1, 1, 0) == 1.0
        assert soft.linear_cost(0, 1, 0, 0) == -1.0

    def test_soft_requires_alpha(self, t3):
        matchings = solve_all_pairwise(t3, gm=exhaustive, seed=0)
        with pytest.raises(ValueError):
            build_sync_problem(t3, matchings, mode="soft")
        with pytest.raises(ValueError):
            build_sync_problem(t3, matchings, mode="nonsense")


class TestSynchronize:
    def test_t3_end_to_end(self, t3):
        solution, metrics = synchronize(t3, mode="sparse", gm=exhaustive, seed=0)
        validate(t3, solution)
        assert metrics.mgm_objective is not FORBIDDEN
        assert metrics.forbidden_count == 0

    def test_sparse_mode_never_returns_forbidden_pairs(self):
        rng = random.Random(11)
        for _ in range(15):
            problem = random_problem(rng, rng.randint(3, 4), 3, forbidden_frac=0.5)
            solution, metrics = synchronize(
                problem, mode="sparse", seed=rng.randrange(100)
            )
            assert metrics.forbidden_count == 0
            assert metrics.mgm_objective is not FORBIDDEN
            for (p, i), (q, s) in solution_pairs(solution):
                assert problem.linear_cost(p, q, i, s) is not FORBIDDEN

    def test_consistent_input_recovered_exactly(self, t3):
        # hand the synchronizer an already cycle-consistent matching set
        matchings = PairwiseMatchingSet(
            3,
            {
                (0, 1): GmMatching([(0, 0)]),
                (0, 2): GmMatching([(0, 0)]),
                (1, 2): GmMatching([(0, 0)]),
            },
        )
        sync_problem = build_sync_problem(t3, matchings, mode="sparse")
        # optimum of the sync problem: the clique {0:0, 1:0, 2:0}
        target = part({0: 0, 1: 0, 2: 0})
        assert objective(sync_problem, target) == pytest.approx(-3.0)
        metrics = sync_metrics(t3, matchings, target)
        assert metrics.hamming == 0
        assert metrics.mlap_objective == -3.0

    def test_mlap_objective_matches_sync_problem_objective(self):
        rng = random.Random(13)
        for _ in range(10):
            problem = random_problem(rng, 3, 3, forbidden_frac=0.3, quad_frac=0.2)
            matchings = solve_all_pairwise(problem, gm=exhaustive, seed=1)
            sync_problem = build_sync_problem(problem, matchings, mode="sparse")
            solution, metrics = synchronize(problem, mode="sparse", seed=1)
            assert objective(sync_problem, solution) == pytest.approx(
                metrics.mlap_objective
            )

    def test_hamming_identity(self):
        rng = random.Random(17)
        for _ in range(10):
            problem = random_problem(rng, 3, 3, forbidden_frac=0.2)
            matchings = solve_all_pairwise(problem, seed=2)
            solution, metrics = synchronize(problem, mode="sparse", seed=2)
            target = matchings.pairs()
            recovered = solution_pairs(solution)
            assert metrics.hamming == len(target | recovered) - len(target & recovered)

    def test_metrics_serialization(self, t3):
        _, metrics = synchronize(t3, mode="sparse", seed=0)
        data = metrics.to_dict()
        assert set(data) == {
            "mlap_objective",
            "hamming",
            "forbidden_count",
            "mgm_objective",
        }


class TestPairSubproblem:
    def test_raw_tables(self, t3):
        sub = pair_subproblem(t3, 0, 1)
        assert sub.linear == {(0, 0): -2.0, (1, 1): -1.0, (0, 1): 1.0}
        assert sub.quadratic == {((0, 0), (1, 1)): -0.5}

    def test_swapped_orientation(self, t3):
        sub = pair_subproblem(t3, 1, 0)
        assert sub.linear == {(0, 0): -2.0, (1, 1): -1.0, (1, 0): 1.0}
