import random

import pytest

from mgmatch.gm import Effort, solve_gm
from mgmatch.local_search import (
    TraceRecorder,
    alternate,
    apply_multiswap,
    best_multiswap,
    gm_local_search,
    gm_local_search_parallel,
    single_swap,
    swap_deltas,
    swap_local_search,
)
from mgmatch.model import (
    FORBIDDEN,
    Clique,
    CliquePartition,
    MgmProblem,
    PairwiseCosts,
    objective,
)

from conftest import part
from oracles import brute_force_mgm, random_partition, random_problem


def exhaustive(sub, seed=0, effort=Effort.EXHAUSTIVE):
    return solve_gm(sub, seed, Effort.EXHAUSTIVE)


@pytest.fixture
def joint_swap_problem():
    """Two full cliques where only a joint two-object swap is profitable.

    Splitting the (0,1) or (2,3) partner pairs costs +10 per clique, so
    every single swap loses (+8 net); the crossed configurations on the
    four cross pairs gain -3 each, so swapping objects {0,1} together (or
    equivalently its complement {2,3}) wins -24.
    """
    partner = {(0, 0): 0.0, (1, 1): 0.0, (1, 0): 10.0, (0, 1): 10.0}
    cross = {(0, 0): 0.0, (1, 1): 0.0, (1, 0): -3.0, (0, 1): -3.0}
    problem = MgmProblem(
        [2, 2, 2, 2],
        {
            (0, 1): PairwiseCosts(partner),
            (2, 3): PairwiseCosts(partner),
            (0, 2): PairwiseCosts(cross),
            (0, 3): PairwiseCosts(cross),
            (1, 2): PairwiseCosts(cross),
            (1, 3): PairwiseCosts(cross),
        },
    )
    solution = part({0: 0, 1: 0, 2: 0, 3: 0}, {0: 1, 1: 1, 2: 1, 3: 1})
    return problem, solution


class TestSingleSwap:
    def test_both_cover_exchanges(self, t3):
        solution = part({0: 0, 1: 0}, {0: 1, 1: 1}, {2: 0})
        swapped = single_swap(
            solution, Clique({0: 0, 1: 0}), Clique({0: 1, 1: 1}), 0
        )
        assert swapped == part({0: 1, 1: 0}, {0: 0, 1: 1}, {2: 0})

    def test_one_covers_moves(self, t3):
        solution = part({0: 0, 1: 0}, {2: 0})
        swapped = single_swap(solution, Clique({0: 0, 1: 0}), Clique({2: 0}), 2)
        assert swapped == part({0: 0, 1: 0, 2: 0})
        assert len(swapped.cliques) == 1  # emptied clique dropped

    def test_neither_covers_is_identity(self, t3):
        solution = part({0: 0, 1: 0}, {0: 1, 1: 1})
        swapped = single_swap(
            solution, Clique({0: 0, 1: 0}), Clique({0: 1, 1: 1}), 2
        )
        assert swapped is solution

    def test_unknown_clique(self, t3):
        solution = part({0: 0, 1: 0})
        with pytest.raises(ValueError):
            single_swap(solution, Clique({0: 1}), Clique({0: 0, 1: 0}), 0)


class TestSwapDeltas:
    def test_t3_move_row(self, t3):
        solution = part({0: 0, 1: 0}, {2: 0}, {0: 1, 1: 1})
        first, second = Clique({0: 0, 1: 0}), Clique({2: 0})
        deltas = swap_deltas(t3, solution, first, second)
        assert deltas.get(2, 0) == pytest.approx(-1.0)
        assert deltas.get(2, 1) == pytest.approx(3.0)
        row = deltas.row_sum(2)
        after = single_swap(solution, first, second, 2)
        assert row == pytest.approx(objective(t3, after) - objective(t3, solution))
        assert row == pytest.approx(2.0)

    def test_disjoint_cliques_zero_matrix(self, t3):
        solution = part({0: 0}, {1: 0}, {0: 1, 1: 1}, {2: 0})
        deltas = swap_deltas(t3, solution, Clique({0: 0}), Clique({1: 0}))
        # swapping object 0 moves vertex 0 into the {1^2} clique
        # but no pair covering both objects exists afterwards except (0,1)
        assert deltas.get(2, 0) == 0.0
        assert deltas.get(2, 1) == 0.0

    def test_forbidden_swap_marked(self, t3):
        solution = part({0: 1, 1: 1}, {0: 0, 1: 0}, {2: 0})
        deltas = swap_deltas(
            t3, solution, Clique({0: 1, 1: 1}), Clique({0: 0, 1: 0})
        )
        # exchanging object 0 creates pairs (0,0)x(1,1)... vertex 1 of object 0
        # with vertex 0 of object 1, whose linear entry is absent
        assert deltas.get(0, 1) is FORBIDDEN

    def test_row_sums_match_objective_change_randomized(self):
        rng = random.Random(99)
        samples = 0
        while samples < 200:
            problem = random_problem(rng, rng.randint(3, 4), 3, forbidden_frac=0.2)
            solution = random_partition(rng, problem)
            if objective(problem, solution) is FORBIDDEN:
                continue
            cliques = list(solution.cliques)
            if len(cliques) < 2:
                continue
            first, second = rng.sample(cliques, 2)
            deltas = swap_deltas(problem, solution, first, second)
            for p in range(problem.d):
                after = single_swap(solution, first, second, p)
                change = objective(problem, after)
                row = deltas.row_sum(p)
                if change is FORBIDDEN:
                    assert row is FORBIDDEN
                else:
                    assert row == pytest.approx(
                        change - objective(problem, solution), abs=1e-9
                    )
                samples += 1


class TestBestMultiswap:
    def test_t3_no_profitable_swap(self, t3):
        solution = part({0: 0, 1: 0}, {2: 0}, {0: 1, 1: 1})
        bits, predicted = best_multiswap(
            t3, solution, Clique({0: 0, 1: 0}), Clique({2: 0}), seed=1
        )
        assert bits == (0, 0, 0)
        assert predicted == 0.0

    def test_joint_swap_found(self, joint_swap_problem):
        problem, solution = joint_swap_problem
        first, second = solution.cliques
        bits, predicted = best_multiswap(problem, solution, first, second, seed=2)
        assert predicted == pytest.approx(-24.0)
        # the complement labeling gives the same partition; accept either
        assert bits in {(1, 1, 0, 0), (0, 0, 1, 1)}
        after = apply_multiswap(solution, first, second, bits)
        assert objective(problem, after) == pytest.approx(-24.0)

    def test_single_swaps_all_lose(self, joint_swap_problem):
        problem, solution = joint_swap_problem
        first, second = solution.cliques
        base = objective(problem, solution)
        for p in range(4):
            after = single_swap(solution, first, second, p)
            assert objective(problem, after) > base

    def test_d2_matches_exhaustive(self):
        rng = random.Random(17)
        for _ in range(30):
            problem = random_problem(rng, 2, 3, forbidden_frac=0.0)
            solution = random_partition(rng, problem)
            cliques = list(solution.cliques)
            if len(cliques) < 2:
                continue
            first, second = rng.sample(cliques, 2)
            bits, predicted = best_multiswap(problem, solution, first, second, seed=0)
            base = objective(problem, solution)
            best = 0.0
            for cand in [(0, 0), (0, 1), (1, 0), (1, 1)]:
                after = apply_multiswap(solution, first, second, cand)
                value = objective(problem, after)
                if value is not FORBIDDEN:
                    best = min(best, value - base)
            assert predicted == pytest.approx(best, abs=1e-9)

    def test_predicted_never_positive(self):
        rng = random.Random(23)
        for _ in range(50):
            problem = random_problem(rng, 3, 3, forbidden_frac=0.3)
            solution = random_partition(rng, problem)
            if objective(problem, solution) is FORBIDDEN:
                continue
            cliques = list(solution.cliques)
            if len(cliques) < 2:
                continue
            first, second = rng.sample(cliques, 2)
            _, predicted = best_multiswap(problem, solution, first, second, seed=0)
            assert predicted <= 0.0


class TestGmLocalSearch:
    def test_optimum_is_fixed_point(self, t3):
        optimum = part({0: 0, 1: 0}, {0: 1, 1: 1}, {2: 0})
        result = gm_local_search(t3, optimum, gm=exhaustive, seed=0)
        assert result == optimum

    def test_reaches_optimum_from_singletons(self, t3):
        singles = CliquePartition().normalized(t3.sizes)
        result = gm_local_search(t3, singles, gm=exhaustive, seed=0)
        assert objective(t3, result) == pytest.approx(-3.5)

    def test_never_worsens(self):
        rng = random.Random(31)
        for _ in range(20):
            problem = random_problem(rng, rng.randint(3, 5), 3, forbidden_frac=0.3)
            start = random_partition(rng, problem)
            start_value = objective(problem, start)
            if start_value is FORBIDDEN:
                continue
            result = gm_local_search(problem, start, seed=rng.randrange(100))
            assert objective(problem, result) <= start_value

    def test_trace_strictly_decreasing(self, t3):
        trace = TraceRecorder()
        singles = CliquePartition().normalized(t3.sizes)
        gm_local_search(t3, singles, gm=exhaustive, seed=0, trace=trace)
        values = [value for _, _, value in trace.entries]
        assert values
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_fixed_point_soundness(self):
        # at termination, no single-object re-match (solved exactly) improves
        from mgmatch.construction import merge_object, object_clique_costs

        rng = random.Random(47)
        for _ in range(10):
            problem = random_problem(rng, 3, 3, forbidden_frac=0.3)
            start = random_partition(rng, problem)
            if objective(problem, start) is FORBIDDEN:
                continue
            result = gm_local_search(problem, start, gm=exhaustive, seed=1)
            value = objective(problem, result)
            for p in range(problem.d):
                split = CliquePartition(c.without_object(p) for c in result)
                sub = object_clique_costs(problem, p, split)
                matching = exhaustive(sub)
                candidate = merge_object(problem, p, split, matching)
                assert objective(problem, candidate) >= value - 1e-9


class TestGmLocalSearchParallel:
    def test_matches_sequential_fixed_point_on_t3(self, t3):
        singles = CliquePartition().normalized(t3.sizes)
        seq = gm_local_search(t3, singles, gm=exhaustive, seed=0)
        par = gm_local_search_parallel(t3, singles, gm=exhaustive, workers=1, seed=0)
        assert objective(t3, par) == objective(t3, seq)

    def test_optimum_unchanged(self, t3):
        optimum = part({0: 0, 1: 0}, {0: 1, 1: 1}, {2: 0})
        result = gm_local_search_parallel(t3, optimum, gm=exhaustive, seed=0)
        assert result == optimum

    def test_unprofitable_proposals_terminate_first_pass(self, t3):
        optimum = part({0: 0, 1: 0}, {0: 1, 1: 1}, {2: 0})
        trace = TraceRecorder()
        result = gm_local_search_parallel(
            t3, optimum, gm=exhaustive, seed=0, trace=trace
        )
        assert result == optimum
        assert trace.entries == []

    def test_never_worsens_with_workers(self):
        rng = random.Random(37)
        for workers in (1, 3):
            problem = random_problem(rng, 5, 3, forbidden_frac=0.3)
            start = random_partition(rng, problem)
            if objective(problem, start) is FORBIDDEN:
                continue
            result = gm_local_search_parallel(problem, start, workers=workers, seed=5)
            assert objective(problem, result) <= objective(problem, start)


class TestSwapLocalSearch:
    def test_accepts_joint_swap(self, joint_swap_problem):
        problem, solution = joint_swap_problem
        result = swap_local_search(problem, solution, seed=3)
        assert objective(problem, result) == pytest.approx(-24.0)

    def test_optimum_unchanged(self, t3):
        optimum = part({0: 0, 1: 0}, {0: 1, 1: 1}, {2: 0})
        result = swap_local_search(t3, optimum, seed=1)
        assert result == optimum

    def test_single_clique_no_pairs(self, t3):
        solution = part({0: 0, 1: 0, 2: 0})
        result = swap_local_search(t3, solution, seed=0)
        assert result == solution

    def test_never_worsens(self):
        rng = random.Random(41)
        for _ in range(15):
            problem = random_problem(rng, 4, 3, forbidden_frac=0.2)
            start = random_partition(rng, problem)
            if objective(problem, start) is FORBIDDEN:
                continue
            result = swap_local_search(problem, start, seed=7)
            assert objective(problem, result) <= objective(problem, start)


class TestAlternate:
    def test_zero_budget_returns_input(self, t3):
        singles = CliquePartition().normalized(t3.sizes)
        assert alternate(t3, singles, max_rounds=0) is singles

    def test_t3_reaches_optimum_in_one_round(self, t3):
        singles = CliquePartition().normalized(t3.sizes)
        result = alternate(t3, singles, gm=exhaustive, seed=0, max_rounds=1)
        assert objective(t3, result) == pytest.approx(-3.5)

    def test_fixed_point_terminates_quickly(self, t3):
        optimum = part({0: 0, 1: 0}, {0: 1, 1: 1}, {2: 0})
        result = alternate(t3, optimum, gm=exhaustive, seed=0)
        assert result == optimum

    def test_monotone_on_random_instances(self):
        rng = random.Random(43)
        for _ in range(10):
            problem = random_problem(rng, 4, 3, forbidden_frac=0.3)
            start = random_partition(rng, problem)
            if objective(problem, start) is FORBIDDEN:
                continue
            trace = TraceRecorder()
            result = alternate(problem, start, seed=3, trace=trace)
            values = [v for _, _, v in trace.entries]
            assert all(b < a for a, b in zip(values, values[1:]))
            assert objective(problem, result) <= objective(problem, start)

    def test_combined_beats_construction_on_hard_instance(self, joint_swap_problem):
        problem, solution = joint_swap_problem
        result = alternate(problem, solution, gm=exhaustive, seed=0)
        want, _ = brute_force_mgm(problem)
        assert objective(problem, result) == pytest.approx(want)
