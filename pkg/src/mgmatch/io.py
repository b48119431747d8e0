"""Problem and solution serialization.

Problems use the line-oriented dd multi-matching format:

    gm <p> <q>            # block header, 0-based object ids, p < q
    p <n1> <n2> <A> <E>   # side sizes and entry counts for this block
    a <id> <i> <s> <cost> # allowed assignment: vertex i of p to vertex s of q
    e <id1> <id2> <cost>  # quadratic cost between two declared assignments

Lines starting with '$' or '#' and blank lines are comments. Absent
assignments are forbidden; absent quadratic entries cost zero.

Solutions use a small JSON document (schema version 1) listing cliques in
a deterministic order plus free-form metadata; see write_solution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Any, Union

from .model import (
    FORBIDDEN,
    Clique,
    CliquePartition,
    Cost,
    MgmProblem,
    PairwiseCosts,
    objective,
)

SOLUTION_FORMAT = "mgm-solution"
SOLUTION_VERSION = 1

TextSource = Union[str, bytes, IO]


class ParseError(ValueError):
    """Malformed input; carries the 1-based line number where parsing failed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DanglingReferenceError(ParseError):
    """An 'e' line references an assignment id that was never declared."""


class DuplicateEntryError(ParseError):
    """The same assignment or quadratic entry is declared twice."""


def _as_text(source: TextSource) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_problem(source: TextSource) -> MgmProblem:
    """Parse a dd-format problem; see the module docstring for the grammar."""
    text = _as_text(source)
    blocks: dict[tuple[int, int], dict] = {}
    current: dict | None = None
    max_object = -1
    sizes: dict[int, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("$") or line.startswith("#"):
            continue
        fields = line.split()
        tag = fields[0]
        if tag == "gm":
            if len(fields) != 3:
                raise ParseError(lineno, "expected 'gm <p> <q>'")
            p, q = _ints(fields[1:3], lineno)
            if not 0 <= p < q:
                raise ParseError(lineno, f"need 0 <= p < q, got ({p},{q})")
            if (p, q) in blocks:
                raise DuplicateEntryError(lineno, f"duplicate block for pair ({p},{q})")
            current = {"pair": (p, q), "n": None, "linear": {}, "quad": {}, "ids": {}}
            blocks[(p, q)] = current
            max_object = max(max_object, q)
        elif tag == "p":
            if current is None:
                raise ParseError(lineno, "'p' line outside a gm block")
            if len(fields) != 5:
                raise ParseError(lineno, "expected 'p <n1> <n2> <A> <E>'")
            n1, n2, _, _ = _ints(fields[1:5], lineno)
            current["n"] = (n1, n2)
            p, q = current["pair"]
            sizes[p] = max(sizes.get(p, 0), n1)
            sizes[q] = max(sizes.get(q, 0), n2)
        elif tag == "a":
            if current is None:
                raise ParseError(lineno, "'a' line outside a gm block")
            if len(fields) != 5:
                raise ParseError(lineno, "expected 'a <id> <i> <s> <cost>'")
            aid, i, s = _ints(fields[1:4], lineno)
            cost = _real(fields[4], lineno)
            if current["n"] is None:
                raise ParseError(lineno, "'a' line before the block's 'p' line")
            n1, n2 = current["n"]
            if not (0 <= i < n1 and 0 <= s < n2):
                raise ParseError(lineno, f"assignment ({i},{s}) outside declared sizes {current['n']}")
            if aid in current["ids"]:
                raise DuplicateEntryError(lineno, f"assignment id {aid} declared twice")
            if (i, s) in current["linear"]:
                raise DuplicateEntryError(lineno, f"duplicate assignment ({i},{s})")
            current["ids"][aid] = (i, s)
            current["linear"][(i, s)] = cost
        elif tag == "e":
            if current is None:
                raise ParseError(lineno, "'e' line outside a gm block")
            if len(fields) != 4:
                raise ParseError(lineno, "expected 'e <id1> <id2> <cost>'")
            id1, id2 = _ints(fields[1:3], lineno)
            cost = _real(fields[3], lineno)
            for aid in (id1, id2):
                if aid not in current["ids"]:
                    raise DanglingReferenceError(lineno, f"assignment id {aid} not declared")
            a1 = current["ids"][id1]
            a2 = current["ids"][id2]
            if a1[0] == a2[0] or a1[1] == a2[1]:
                raise ParseError(lineno, f"quadratic entry {a1},{a2} shares a vertex")
            key = (a1, a2) if a1 <= a2 else (a2, a1)
            if key in current["quad"]:
                raise DuplicateEntryError(lineno, f"duplicate quadratic entry {key}")
            current["quad"][key] = cost
        else:
            raise ParseError(lineno, f"unknown line tag {tag!r}")

    if max_object < 1:
        raise ParseError(1, "no 'gm' blocks found")
    d = max_object + 1
    size_list = [sizes.get(p, 0) for p in range(d)]
    costs = {
        pair: PairwiseCosts(block["linear"], block["quad"])
        for pair, block in blocks.items()
    }
    return MgmProblem(size_list, costs)


def _ints(fields, lineno):
    try:
        return tuple(int(f) for f in fields)
    except ValueError:
        raise ParseError(lineno, f"expected integers, got {fields!r}") from None


def _real(field, lineno):
    try:
        value = float(field)
    except ValueError:
        raise ParseError(lineno, f"expected a real number, got {field!r}") from None
    if not math.isfinite(value):
        raise ParseError(lineno, f"costs must be finite, got {field!r}")
    return value


def write_problem(problem: MgmProblem) -> str:
    """Serialize a problem so that parse_problem returns an equal one.

    Assignment ids are assigned in lexicographic (i, s) order, so output is
    deterministic and every 'e' line references earlier 'a' lines.
    """
    lines = []
    for p in range(problem.d):
        for q in range(p + 1, problem.d):
            table = problem.costs[(p, q)]
            lines.append(f"gm {p} {q}")
            lines.append(
                f"p {problem.sizes[p]} {problem.sizes[q]} "
                f"{len(table.linear)} {len(table.quadratic)}"
            )
            ids = {}
            for aid, (i, s) in enumerate(sorted(table.linear)):
                ids[(i, s)] = aid
                lines.append(f"a {aid} {i} {s} {table.linear[(i, s)]!r}")
            for key in sorted(table.quadratic):
                (a1, a2) = key
                lines.append(f"e {ids[a1]} {ids[a2]} {table.quadratic[key]!r}")
    return "\n".join(lines) + "\n"


@dataclass
class SolutionDocument:
    """A parsed solution file: the partition plus whatever metadata it carried."""

    partition: CliquePartition
    metadata: dict[str, Any] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def objective(self) -> Cost | None:
        return _cost_from_json(self.metadata.get("objective"))


def _cost_to_json(value):
    if value is FORBIDDEN:
        return "forbidden"
    return value


def _cost_from_json(value):
    if value == "forbidden":
        return FORBIDDEN
    return value


def write_solution(solution: CliquePartition, metadata: dict[str, Any] | None = None) -> str:
    """Serialize a partition with metadata; deterministic up to the metadata.

    Cliques are listed sorted by their smallest (object, vertex) member and
    each clique's members are sorted, so identical solutions always produce
    identical documents.
    """
    cliques = sorted(solution.cliques, key=lambda c: c.pairs[0])
    meta = dict(metadata or {})
    if "objective" in meta:
        meta["objective"] = _cost_to_json(meta["objective"])
    doc = {
        "format": SOLUTION_FORMAT,
        "version": SOLUTION_VERSION,
        "cliques": [[[p, v] for p, v in clique.pairs] for clique in cliques],
        "metadata": meta,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_solution(source: TextSource, problem: MgmProblem | None = None) -> SolutionDocument:
    """Parse a solution document; with a problem, cross-check its objective.

    A stored objective differing from the recomputed one by more than 1e-9
    is surfaced as a warning on the returned document, not an error.
    """
    text = _as_text(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != SOLUTION_FORMAT:
        raise ParseError(1, "not an mgm-solution document")
    if doc.get("version") != SOLUTION_VERSION:
        raise ParseError(1, f"unsupported document version {doc.get('version')!r}")
    try:
        cliques = [
            Clique({int(p): int(v) for p, v in members}) for members in doc["cliques"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(1, f"malformed clique list: {exc}") from None
    document = SolutionDocument(
        partition=CliquePartition(cliques),
        metadata=dict(doc.get("metadata") or {}),
    )
    if problem is not None and "objective" in document.metadata:
        stored = _cost_from_json(document.metadata["objective"])
        actual = objective(problem, document.partition)
        if stored is FORBIDDEN or actual is FORBIDDEN:
            if stored is not actual:
                document.warnings.append(
                    f"stored objective {stored!r} does not match recomputed {actual!r}"
                )
        elif stored is None or abs(stored - actual) > 1e-9:
            document.warnings.append(
                f"stored objective {stored!r} does not match recomputed {actual!r}"
            )
    return document
