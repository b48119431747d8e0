import random

import pytest

from mgmatch.io import (
    DanglingReferenceError,
    DuplicateEntryError,
    ParseError,
    parse_problem,
    parse_solution,
    write_problem,
    write_solution,
)
from mgmatch.model import FORBIDDEN, MgmProblem, objective

from conftest import part
from oracles import random_partition, random_problem


class TestParseProblem:
    def test_minimal_file(self):
        problem = parse_problem("gm 0 1\np 1 1 1 0\na 0 0 0 -2.0\n")
        assert problem.d == 2
        assert problem.sizes == (1, 1)
        assert problem.linear_cost(0, 1, 0, 0) == -2.0

    def test_comments_and_blank_lines(self):
        text = "$ header\n\ngm 0 1\n# block\np 2 2 1 0\na 0 1 1 3.5e-1\n"
        problem = parse_problem(text)
        assert problem.linear_cost(0, 1, 1, 1) == pytest.approx(0.35)

    def test_bytes_input(self):
        problem = parse_problem(b"gm 0 1\np 1 1 1 0\na 0 0 0 1.0\n")
        assert problem.d == 2

    def test_unknown_tag(self):
        with pytest.raises(ParseError) as err:
            parse_problem("gm 0 1\nzz 1 2\n")
        assert err.value.line == 2

    def test_dangling_edge_reference(self):
        text = "gm 0 1\np 2 2 2 1\na 0 0 0 1.0\na 1 1 1 1.0\ne 0 5 1.0\n"
        with pytest.raises(DanglingReferenceError):
            parse_problem(text)

    def test_duplicate_assignment(self):
        text = "gm 0 1\np 1 1 2 0\na 0 0 0 1.0\na 1 0 0 2.0\n"
        with pytest.raises(DuplicateEntryError):
            parse_problem(text)

    def test_quadratic_entry(self):
        text = (
            "gm 0 1\np 2 2 2 1\na 0 0 0 -1.0\na 1 1 1 -1.0\ne 0 1 -0.5\n"
        )
        problem = parse_problem(text)
        assert problem.quad_cost(0, 1, (0, 0), (1, 1)) == -0.5

    def test_quadratic_sharing_vertex_rejected(self):
        text = "gm 0 1\np 1 2 2 1\na 0 0 0 1.0\na 1 0 1 1.0\ne 0 1 0.5\n"
        with pytest.raises(ParseError):
            parse_problem(text)

    def test_assignment_outside_declared_sizes(self):
        with pytest.raises(ParseError):
            parse_problem("gm 0 1\np 1 1 1 0\na 0 1 0 1.0\n")

    def test_assignment_before_size_line(self):
        with pytest.raises(ParseError):
            parse_problem("gm 0 1\na 0 0 0 1.0\n")

    def test_non_finite_costs_rejected(self):
        for bad in ("nan", "inf", "-inf"):
            with pytest.raises(ParseError):
                parse_problem(f"gm 0 1\np 1 1 1 0\na 0 0 0 {bad}\n")

    def test_missing_pairs_get_empty_tables(self):
        # objects 0..2 but only the (0,2) block present
        problem = parse_problem("gm 0 2\np 1 1 1 0\na 0 0 0 -1.0\n")
        assert problem.d == 3
        assert problem.linear_cost(0, 1, 0, 0) is FORBIDDEN


class TestWriteProblem:
    def test_roundtrip_t3(self, t3):
        assert parse_problem(write_problem(t3)) == t3

    def test_empty_problem_block(self):
        problem = MgmProblem([1, 1])
        text = write_problem(problem)
        assert "gm 0 1" in text
        assert "\na " not in text
        assert parse_problem(text) == problem

    def test_edge_lines_reference_earlier_ids(self, t3):
        lines = write_problem(t3).splitlines()
        declared = set()
        for line in lines:
            fields = line.split()
            if fields[0] == "gm":
                declared = set()
            elif fields[0] == "a":
                declared.add(int(fields[1]))
            elif fields[0] == "e":
                assert int(fields[1]) in declared and int(fields[2]) in declared

    def test_roundtrip_random_instances(self):
        rng = random.Random(5)
        for _ in range(25):
            problem = random_problem(rng, rng.randint(2, 5), 4)
            assert parse_problem(write_problem(problem)) == problem

    def test_deterministic_output(self, t3):
        assert write_problem(t3) == write_problem(t3)


class TestSolutionDocuments:
    def test_roundtrip(self, t3):
        solution = part({0: 0, 1: 0}, {2: 0})
        text = write_solution(solution, {"objective": -2.0, "solver": "x", "seed": 1})
        doc = parse_solution(text)
        assert doc.partition == solution
        assert doc.metadata["seed"] == 1

    def test_empty_partition(self):
        from mgmatch.model import CliquePartition

        text = write_solution(CliquePartition())
        doc = parse_solution(text)
        assert len(doc.partition.cliques) == 0

    def test_objective_mismatch_warns(self, t3):
        solution = part({0: 0, 1: 0})
        text = write_solution(solution, {"objective": -99.0})
        doc = parse_solution(text, problem=t3)
        assert doc.warnings

    def test_objective_match_no_warning(self, t3):
        solution = part({0: 0, 1: 0})
        value = objective(t3, solution)
        text = write_solution(solution, {"objective": value})
        doc = parse_solution(text, problem=t3)
        assert not doc.warnings
        assert doc.objective == value

    def test_forbidden_objective_roundtrip(self, t3):
        solution = part({0: 1, 1: 0})
        text = write_solution(solution, {"objective": FORBIDDEN})
        doc = parse_solution(text, problem=t3)
        assert doc.objective is FORBIDDEN
        assert not doc.warnings

    def test_malformed_document(self):
        with pytest.raises(ParseError):
            parse_solution("not json at all")
        with pytest.raises(ParseError):
            parse_solution('{"format": "something-else"}')

    def test_roundtrip_random_partitions(self):
        rng = random.Random(9)
        for _ in range(25):
            problem = random_problem(rng, rng.randint(2, 4), 3)
            solution = random_partition(rng, problem)
            doc = parse_solution(write_solution(solution))
            assert doc.partition == solution

    def test_clique_order_is_deterministic(self):
        a = part({1: 0}, {0: 0, 2: 0})
        b = part({0: 0, 2: 0}, {1: 0})
        assert write_solution(a) == write_solution(b)

    def test_golden_document(self):
        text = write_solution(part({1: 0}, {0: 0, 2: 0}), {"objective": -1.5, "seed": 3})
        assert text == (
            '{\n'
            '  "cliques": [\n'
            '    [\n'
            '      [\n'
            '        0,\n'
            '        0\n'
            '      ],\n'
            '      [\n'
            '        2,\n'
            '        0\n'
            '      ]\n'
            '    ],\n'
            '    [\n'
            '      [\n'
            '        1,\n'
            '        0\n'
            '      ]\n'
            '    ]\n'
            '  ],\n'
            '  "format": "mgm-solution",\n'
            '  "metadata": {\n'
            '    "objective": -1.5,\n'
            '    "seed": 3\n'
            '  },\n'
            '  "version": 1\n'
            '}\n'
        )


class TestFloatFidelity:
    def test_problem_roundtrip_preserves_floats_exactly(self):
        rng = random.Random(77)
        from mgmatch.model import MgmProblem, PairwiseCosts

        linear = {
            (i, s): rng.uniform(-1e3, 1e3) * (10.0 ** rng.randint(-6, 6))
            for i in range(3)
            for s in range(3)
        }
        quadratic = {((0, 0), (1, 1)): 0.1 + 0.2, ((0, 1), (1, 0)): -1e-12}
        problem = MgmProblem([3, 3], {(0, 1): PairwiseCosts(linear, quadratic)})
        parsed = parse_problem(write_problem(problem))
        assert parsed.costs[(0, 1)].linear == linear  # bit-exact
        assert parsed.costs[(0, 1)].quadratic == quadratic
