"""Synchronization: projecting independent pairwise matchings onto cycle
consistency.

All object pairs are first matched independently, which in general yields
an inconsistent multi-matching E. A linear-only MGM problem is then built
whose optimum is the cycle-consistent multi-matching sharing the most
pairs with E, and solved with the regular construction plus local search
pipeline. Because that problem is linear, every GM subproblem along the
way is a LAP and is solved exactly.

Cost modes for the synchronization problem:

* sparse: entries only where the original problem allows the match (-1 on
  E, 0 otherwise). Solutions can never contain a forbidden match.
* dense: entries on the union of the original support and E, ignoring
  forbiddenness (the classic formulation); optionally the full vertex
  product via ``dense_full``.
* soft(alpha): full product; originally forbidden matches cost +alpha
  instead of being excluded.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any

from .construction import construct_sequential, derive_seed
from .gm import Effort, GmMatching, GmSubproblem, GmSolver, solve_gm
from .local_search import TraceRecorder, alternate
from .model import (
    FORBIDDEN,
    CliquePartition,
    Cost,
    MgmProblem,
    PairwiseCosts,
    objective,
)

VertexPair = tuple[tuple[int, int], tuple[int, int]]  # ((p, i), (q, s)), p < q


@dataclass
class PairwiseMatchingSet:
    """One independent matching per object pair; the union need not be
    cycle-consistent."""

    d: int
    matchings: dict[tuple[int, int], GmMatching] = field(default_factory=dict)

    def pairs(self) -> set[VertexPair]:
        """The induced multi-matching as canonical vertex pairs."""
        union: set[VertexPair] = set()
        for (p, q), matching in self.matchings.items():
            for i, s in matching:
                union.add(((p, i), (q, s)))
        return union


def pair_subproblem(problem: MgmProblem, p: int, q: int) -> GmSubproblem:
    """The raw GM instance of one object pair (left p, right q)."""
    linear = dict(problem.iter_linear_pair(p, q))
    quadratic = {
        (a, b) if a <= b else (b, a): value
        for a, b, value in problem.iter_quad_pair(p, q)
    }
    return GmSubproblem(problem.sizes[p], problem.sizes[q], linear, quadratic)


def solve_all_pairwise(
    problem: MgmProblem,
    gm: GmSolver = solve_gm,
    workers: int = 1,
    seed: int = 0,
    effort: Effort = Effort.DEFAULT,
) -> PairwiseMatchingSet:
    """Independently solve all d(d-1)/2 pairwise GM problems."""
    pairs = [(p, q) for p in range(problem.d) for q in range(p + 1, problem.d)]

    def solve_one(pq):
        p, q = pq
        sub = pair_subproblem(problem, p, q)
        return gm(sub, derive_seed(seed, p * problem.d + q), effort)

    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            matchings = list(pool.map(solve_one, pairs))
    else:
        matchings = [solve_one(pq) for pq in pairs]
    return PairwiseMatchingSet(problem.d, dict(zip(pairs, matchings)))


def build_sync_problem(
    problem: MgmProblem,
    matchings: PairwiseMatchingSet,
    mode: str = "sparse",
    alpha: float | None = None,
    dense_full: bool = False,
) -> MgmProblem:
    """Linear-only problem whose optimum recovers the consistent projection.

    Matched pairs cost -1, other candidate pairs 0. The candidate set per
    mode is described in the module docstring; zero-cost pairs never help
    the objective, so restricting dense mode to the support union does not
    change optima.
    """
    if mode not in ("dense", "sparse", "soft"):
        raise ValueError(f"unknown synchronization mode {mode!r}")
    if mode == "soft":
        if alpha is None or not alpha > 0:
            raise ValueError("soft mode needs alpha > 0")
    matched = matchings.pairs()
    costs = {}
    for p in range(problem.d):
        for q in range(p + 1, problem.d):
            table = problem.costs[(p, q)]
            linear: dict[tuple[int, int], float] = {}
            if mode == "sparse":
                support = set(table.linear)
            elif mode == "dense" and not dense_full:
                support = set(table.linear) | {
                    (i, s) for ((pp, i), (qq, s)) in matched if (pp, qq) == (p, q)
                }
            else:
                support = {
                    (i, s)
                    for i in range(problem.sizes[p])
                    for s in range(problem.sizes[q])
                }
            for i, s in support:
                if mode == "soft" and (i, s) not in table.linear:
                    linear[(i, s)] = alpha
                elif ((p, i), (q, s)) in matched:
                    linear[(i, s)] = -1.0
                else:
                    linear[(i, s)] = 0.0
            costs[(p, q)] = PairwiseCosts(linear)
    return MgmProblem(problem.sizes, costs)


@dataclass
class SyncMetrics:
    """Agreement and feasibility statistics of a synchronized solution."""

    mlap_objective: float
    hamming: int
    forbidden_count: int
    mgm_objective: Cost

    def to_dict(self) -> dict[str, Any]:
        return {
            "mlap_objective": self.mlap_objective,
            "hamming": self.hamming,
            "forbidden_count": self.forbidden_count,
            "mgm_objective": "forbidden" if self.mgm_objective is FORBIDDEN else self.mgm_objective,
        }


def solution_pairs(solution: CliquePartition) -> set[VertexPair]:
    """The multi-matching induced by a partition, as canonical vertex pairs."""
    pairs: set[VertexPair] = set()
    for clique in solution.cliques:
        for (p, i), (q, s) in combinations(clique.pairs, 2):
            pairs.add(((p, i), (q, s)))
    return pairs


def sync_metrics(
    problem: MgmProblem, matchings: PairwiseMatchingSet, solution: CliquePartition
) -> SyncMetrics:
    """Recompute all metrics independently of the optimization path."""
    target = matchings.pairs()
    recovered = solution_pairs(solution)
    shared = len(target & recovered)
    hamming = len(target) + len(recovered) - 2 * shared
    forbidden = sum(
        1
        for ((p, i), (q, s)) in recovered
        if problem.linear_cost(p, q, i, s) is FORBIDDEN
    )
    return SyncMetrics(
        mlap_objective=-float(shared),
        hamming=hamming,
        forbidden_count=forbidden,
        mgm_objective=objective(problem, solution),
    )


def synchronize(
    problem: MgmProblem,
    mode: str = "sparse",
    alpha: float | None = None,
    gm: GmSolver = solve_gm,
    seed: int = 0,
    effort: Effort = Effort.DEFAULT,
    workers: int = 1,
    ls_rounds: int | None = None,
    deadline: float | None = None,
    trace: TraceRecorder | None = None,
) -> tuple[CliquePartition, SyncMetrics]:
    """Full synchronization pipeline: pairwise solves, projection, metrics.

    The projection problem is linear-only, so the pipeline's GM subroutine
    solves every intermediate subproblem exactly as a LAP regardless of the
    solver configured for the pairwise stage.
    """
    matchings = solve_all_pairwise(
        problem, gm=gm, workers=workers, seed=seed, effort=effort
    )
    sync_problem = build_sync_problem(problem, matchings, mode=mode, alpha=alpha)
    order = list(range(problem.d))
    random.Random(derive_seed(seed, 1)).shuffle(order)
    solution = construct_sequential(
        sync_problem, order, gm=solve_gm, seed=derive_seed(seed, 2), effort=effort
    )
    if trace is not None:
        value = objective(sync_problem, solution)
        if value is not FORBIDDEN:
            trace.record("sync-construct", value)
    solution = alternate(
        sync_problem,
        solution,
        gm=solve_gm,
        order=order,
        seed=derive_seed(seed, 3),
        effort=effort,
        max_rounds=ls_rounds,
        deadline=deadline,
        workers=workers,
        trace=trace,
    )
    return solution, sync_metrics(problem, matchings, solution)
