"""Feasible solution construction.

Solutions are built by repeatedly matching two partial solutions (or one
object against a partial solution) with a pairwise GM solver and merging
matched cliques. The sequential variant walks a random object order; the
parallel variant processes a binary construction tree level by level; the
incremental variant warm-starts the chain with a stronger solver on a
prefix of the objects.

Aggregated costs: matching clique I to clique S prices every cross pair of
their members, so a single forbidden member pair forbids the whole entry.
Quadratic costs aggregate likewise over shared objects. Entries with no
contributing term stay absent, which keeps instances sparse and guarantees
the GM solver can never produce a forbidden match.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

from .gm import Effort, GmMatching, GmSubproblem, solve_gm
from .model import (
    Clique,
    CliquePartition,
    MgmProblem,
    singleton_partition,
)


class OverlapError(ValueError):
    """Two partial solutions to be merged cover a common object."""


GmSolver = Callable[[GmSubproblem, int, Effort], GmMatching]


def derive_seed(seed: int, k: int) -> int:
    """Stable per-step seed so parallel and sequential runs agree."""
    digest = hashlib.blake2b(f"{seed}:{k}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def clique_clique_costs(
    problem: MgmProblem, a: CliquePartition, b: CliquePartition
) -> GmSubproblem:
    """Matching instance between the cliques of two disjoint partial solutions.

    Left node k is a.cliques[k], right node l is b.cliques[l]. The linear
    entry (k, l) exists only when every member pair across the two cliques
    is allowed, and then carries the sum of those costs.
    """
    objects_a = a.objects()
    objects_b = b.objects()
    common = objects_a & objects_b
    if common:
        raise OverlapError(f"partial solutions share objects {sorted(common)}")
    amap = a.vertex_map()
    bmap = b.vertex_map()
    size_a = [len(c) for c in a.cliques]
    size_b = [len(c) for c in b.cliques]

    lin_sum: dict[tuple[int, int], float] = {}
    lin_cnt: dict[tuple[int, int], int] = {}
    for p in sorted(objects_a):
        for q in sorted(objects_b):
            for (i, s), value in problem.iter_linear_pair(p, q):
                ka = amap.get((p, i))
                kb = bmap.get((q, s))
                if ka is None or kb is None:
                    continue
                key = (ka, kb)
                lin_sum[key] = lin_sum.get(key, 0.0) + value
                lin_cnt[key] = lin_cnt.get(key, 0) + 1
    linear = {
        key: total
        for key, total in lin_sum.items()
        if lin_cnt[key] == size_a[key[0]] * size_b[key[1]]
    }

    quad_sum: dict = {}
    for p in sorted(objects_a):
        for q in sorted(objects_b):
            for (i, s), (j, t), value in problem.iter_quad_pair(p, q):
                ka = amap.get((p, i))
                kb = bmap.get((q, s))
                la = amap.get((p, j))
                lb = bmap.get((q, t))
                if ka is None or kb is None or la is None or lb is None:
                    continue
                x, y = (ka, kb), (la, lb)
                if x == y:
                    continue
                key = (x, y) if x <= y else (y, x)
                quad_sum[key] = quad_sum.get(key, 0.0) + value
    quadratic = {
        key: value
        for key, value in quad_sum.items()
        if key[0] in linear and key[1] in linear and key[0][0] != key[1][0] and key[0][1] != key[1][1]
    }
    return GmSubproblem(len(a.cliques), len(b.cliques), linear, quadratic)


def object_clique_costs(
    problem: MgmProblem, p: int, partial: CliquePartition
) -> GmSubproblem:
    """Matching instance between the vertices of object p and a partial solution.

    The single-object special case of clique_clique_costs via singleton
    lifting: left node i is vertex i of object p, right node l is
    partial.cliques[l].
    """
    if p in partial.objects():
        raise OverlapError(f"object {p} is already covered by the partial solution")
    lifted = singleton_partition(problem.sizes[p], p)
    return clique_clique_costs(problem, lifted, partial)


def merge(a: CliquePartition, b: CliquePartition, matching: GmMatching) -> CliquePartition:
    """Union matched cliques, carry the unmatched ones over.

    Matching pairs index into a.cliques and b.cliques. The result lists a's
    cliques first (unioned with their partner where matched), then b's
    unmatched cliques, preserving both input orders.
    """
    for ka, kb in matching:
        if not (0 <= ka < len(a.cliques)) or not (0 <= kb < len(b.cliques)):
            raise IndexError(f"matching references unknown clique pair ({ka},{kb})")
    partner = matching.left_map()
    matched_b = set(matching.right_map())
    result = []
    for idx, clique in enumerate(a.cliques):
        kb = partner.get(idx)
        result.append(clique.union(b.cliques[kb]) if kb is not None else clique)
    for idx, clique in enumerate(b.cliques):
        if idx not in matched_b:
            result.append(clique)
    return CliquePartition(result)


def merge_object(
    problem: MgmProblem, p: int, partial: CliquePartition, matching: GmMatching
) -> CliquePartition:
    """Merge object p into a partial solution; matching pairs (vertex, clique)."""
    lifted = singleton_partition(problem.sizes[p], p)
    return merge(lifted, partial, matching)


class ConstructionTree:
    """Leaf-labeled ordered binary tree steering parallel construction.

    Leaves are object indices and must form a permutation of range(d).
    Nodes are given as nested 2-tuples, e.g. ``((2, (1, 0)), 3)``.
    """

    def __init__(self, root, d: int):
        self.root = root
        self.d = d
        labels: list[int] = []

        def walk(node):
            if isinstance(node, int):
                labels.append(node)
                return
            if not (isinstance(node, tuple) and len(node) == 2):
                raise ValueError(f"malformed tree node {node!r}: need leaf int or 2-tuple")
            walk(node[0])
            walk(node[1])

        walk(root)
        if sorted(labels) != list(range(d)):
            raise ValueError(f"tree leaves {sorted(labels)} are not a permutation of range({d})")

    @classmethod
    def chain(cls, order: Sequence[int]) -> "ConstructionTree":
        """Left-deep chain equivalent to sequential construction along order.

        Each internal node matches the next object (left child) against
        everything built so far (right child).
        """
        root = order[0]
        for p in order[1:]:
            root = (p, root)
        return cls(root, len(order))

    @classmethod
    def balanced(cls, order: Sequence[int]) -> "ConstructionTree":
        def build(part):
            if len(part) == 1:
                return part[0]
            mid = (len(part) + 1) // 2
            return (build(part[:mid]), build(part[mid:]))

        return cls(build(list(order)), len(order))

    def schedule(self) -> list[list[tuple[int, tuple]]]:
        """Internal nodes grouped by height, bottom-up.

        Nodes within one level have disjoint subtrees and may be combined
        in parallel. Each entry is (sequence index, node); the sequence
        index seeds the node's GM solve. On a chain tree this numbering
        matches the step numbering of sequential construction.
        """
        by_height: dict[int, list] = {}

        def walk(node) -> int:
            if isinstance(node, int):
                return 0
            height = 1 + max(walk(node[0]), walk(node[1]))
            by_height.setdefault(height, []).append(node)
            return height

        walk(self.root)
        levels = []
        counter = 1
        for height in sorted(by_height):
            level = []
            for node in by_height[height]:
                level.append((counter, node))
                counter += 1
            levels.append(level)
        return levels


def construct_sequential(
    problem: MgmProblem,
    order: Sequence[int] | None = None,
    gm: GmSolver = solve_gm,
    seed: int = 0,
    effort: Effort = Effort.DEFAULT,
) -> CliquePartition:
    """Chain construction: start from one object, match the next one in each step."""
    order = list(order) if order is not None else list(range(problem.d))
    if sorted(order) != list(range(problem.d)):
        raise ValueError("order must be a permutation of the objects")
    acc = singleton_partition(problem.sizes[order[0]], order[0])
    for k in range(1, problem.d):
        p = order[k]
        sub = object_clique_costs(problem, p, acc)
        matching = gm(sub, derive_seed(seed, k), effort)
        acc = merge_object(problem, p, acc, matching)
    return acc


def construct_parallel(
    problem: MgmProblem,
    tree: ConstructionTree,
    gm: GmSolver = solve_gm,
    seed: int = 0,
    workers: int = 1,
    effort: Effort = Effort.DEFAULT,
) -> CliquePartition:
    """Tree construction; nodes on one level are solved concurrently.

    A chain tree with workers=1 reproduces construct_sequential exactly,
    including per-step seeds.
    """
    if tree.d != problem.d:
        raise ValueError("tree does not cover the problem's objects")
    solutions: dict[int, CliquePartition] = {}

    def solution_of(node) -> CliquePartition:
        if isinstance(node, int):
            return singleton_partition(problem.sizes[node], node)
        return solutions[id(node)]

    def combine(task) -> CliquePartition:
        seq, node = task
        a = solution_of(node[0])
        b = solution_of(node[1])
        sub = clique_clique_costs(problem, a, b)
        matching = gm(sub, derive_seed(seed, seq), effort)
        return merge(a, b, matching)

    for level in tree.schedule():
        if workers > 1 and len(level) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(combine, level))
        else:
            results = [combine(task) for task in level]
        for (_, node), result in zip(level, results):
            solutions[id(node)] = result
    return solution_of(tree.root)


def construct_incremental(
    problem: MgmProblem,
    order: Sequence[int],
    s: int,
    inner: Callable[[MgmProblem, int], CliquePartition],
    gm: GmSolver = solve_gm,
    seed: int = 0,
    effort: Effort = Effort.DEFAULT,
) -> CliquePartition:
    """Warm-start the chain: solve the first s objects with a full MGM pipeline.

    The restriction of the problem to the first s objects of the order is
    handed to ``inner`` (any solver returning a feasible partition); the
    remaining objects are then chained on as in sequential construction.
    """
    order = list(order)
    if sorted(order) != list(range(problem.d)):
        raise ValueError("order must be a permutation of the objects")
    if not (2 <= s <= problem.d):
        raise ValueError(f"warm-start size {s} outside [2, {problem.d}]")
    head = order[:s]
    restricted = problem.restrict(head)
    inner_solution = inner(restricted, derive_seed(seed, 0))
    inner_solution = inner_solution.normalized(restricted.sizes)
    acc = CliquePartition(
        Clique({head[p]: v for p, v in clique.pairs}) for clique in inner_solution
    )
    for k in range(s, problem.d):
        p = order[k]
        sub = object_clique_costs(problem, p, acc)
        matching = gm(sub, derive_seed(seed, k), effort)
        acc = merge_object(problem, p, acc, matching)
    return acc
