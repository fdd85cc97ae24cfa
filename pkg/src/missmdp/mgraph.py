"""Missingness graphs: S-nodes (state features) and R-nodes (indicators).

Z-nodes are deterministic functions of S and R and are not represented.
The text format uses 1-based feature numbers; the API is 0-based.

    n 2
    always 2
    edge S2 R1
    edge R1 R2
    selfcensor 1
"""
from __future__ import annotations

import graphlib
import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import ROW_TOL, MissingnessTable


class MGraphError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class MGraph:
    n: int
    always: frozenset[int] = frozenset()
    s_edges: frozenset[tuple[int, int]] = frozenset()  # (j, i): S_j -> R_i
    r_edges: frozenset[tuple[int, int]] = frozenset()  # (j, i): R_j -> R_i
    self_censor: frozenset[int] = frozenset()

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise MGraphError("graph needs n >= 1")
        def check(i):
            if not 0 <= i < self.n:
                raise MGraphError(f"feature index {i + 1} out of range 1..{self.n}")
        for i in self.always | self.self_censor:
            check(i)
        for j, i in self.s_edges | self.r_edges:
            check(j)
            check(i)
        for j, i in self.s_edges:
            if i in self.always:
                raise MGraphError(f"feature {i + 1} is always observed and has no R-node")
            if j == i and i not in self.self_censor:
                raise MGraphError(f"edge S{i + 1} -> R{i + 1} needs 'selfcensor {i + 1}'")
        for j, i in self.r_edges:
            if i in self.always or j in self.always:
                raise MGraphError(f"edge R{j + 1} -> R{i + 1} touches an always-observed feature")
            if i == j:
                raise MGraphError(f"cycle R{i + 1} -> R{i + 1}")
        sorter = graphlib.TopologicalSorter({i: set() for i in range(self.n)})
        for j, i in self.r_edges:
            sorter.add(i, j)
        try:
            sorter.prepare()
        except graphlib.CycleError as exc:
            cycle = " -> ".join(f"R{k + 1}" for k in exc.args[1])
            raise MGraphError(f"cycle {cycle}") from None

    @property
    def indicators(self) -> list[int]:
        return [i for i in range(self.n) if i not in self.always]

    def indicator_parents(self, i: int) -> frozenset[int]:
        return frozenset(j for j, k in self.r_edges if k == i)

    def state_ancestors(self, i: int) -> frozenset[int]:
        """S-nodes with a directed path into ``R_i`` (through R->R edges)."""
        seen, stack, out = set(), [i], set()
        while stack:
            k = stack.pop()
            if k in seen:
                continue
            seen.add(k)
            out |= {j for j, t in self.s_edges if t == k}
            stack.extend(self.indicator_parents(k))
        return frozenset(out)

    @classmethod
    def complete(cls, n: int) -> "MGraph":
        """Every S->R edge (self-censoring allowed) and a full R->R order."""
        return cls(
            n,
            s_edges=frozenset((j, i) for i in range(n) for j in range(n)),
            r_edges=frozenset((j, i) for i in range(n) for j in range(i)),
            self_censor=frozenset(range(n)),
        )


_LINE = re.compile(r"^(\w+)\s*(.*)$")
_NODE = re.compile(r"^([SR])(\d+)$")


def parse_mgraph(text: str) -> MGraph:
    n = None
    always, s_edges, r_edges, selfc = set(), set(), set(), set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        key, rest = m.group(1), m.group(2).split()
        try:
            if key == "n":
                if n is not None or len(rest) != 1:
                    raise MGraphError("expected a single 'n <count>' declaration", lineno)
                n = int(rest[0])
            elif key in ("always", "selfcensor"):
                if len(rest) != 1:
                    raise MGraphError(f"expected '{key} <i>'", lineno)
                (always if key == "always" else selfc).add(int(rest[0]) - 1)
            elif key == "edge":
                if len(rest) != 2:
                    raise MGraphError("expected 'edge <S|R><j> R<i>'", lineno)
                src, dst = _NODE.match(rest[0]), _NODE.match(rest[1])
                if not src or not dst or dst.group(1) != "R":
                    raise MGraphError(f"bad edge {rest[0]} -> {rest[1]}", lineno)
                j, i = int(src.group(2)) - 1, int(dst.group(2)) - 1
                (s_edges if src.group(1) == "S" else r_edges).add((j, i))
            else:
                raise MGraphError(f"unknown declaration {key!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, MGraphError):
                raise
            raise MGraphError(f"bad integer in {line!r}", lineno) from None
    if n is None:
        raise MGraphError("missing 'n <count>' declaration")
    return MGraph(n, frozenset(always), frozenset(s_edges), frozenset(r_edges), frozenset(selfc))


def render_mgraph(g: MGraph) -> str:
    lines = [f"n {g.n}"]
    lines += [f"always {i + 1}" for i in sorted(g.always)]
    lines += [f"selfcensor {i + 1}" for i in sorted(g.self_censor)]
    lines += [f"edge S{j + 1} R{i + 1}" for j, i in sorted(g.s_edges)]
    lines += [f"edge R{j + 1} R{i + 1}" for j, i in sorted(g.r_edges)]
    return "\n".join(lines) + "\n"


def parents_of_indicator(g: MGraph, i: int) -> frozenset[int]:
    if not 0 <= i < g.n:
        raise MGraphError(f"feature index {i + 1} out of range 1..{g.n}")
    if i in g.always:
        raise MGraphError(f"feature {i + 1} is always observed and has no R-node")
    return frozenset(j for j, k in g.s_edges if k == i)


class LearnerAssumptions(NamedTuple):
    indicators_independent: bool
    self_censoring: frozenset[int]
    simple_mar: bool


def implied_learner_assumptions(g: MGraph) -> LearnerAssumptions:
    return LearnerAssumptions(
        indicators_independent=not g.r_edges,
        self_censoring=frozenset(i for j, i in g.s_edges if i == j),
        simple_mar=all(parents_of_indicator(g, i) <= g.always for i in g.indicators),
    )


def consistent_with(M: MissingnessTable, g: MGraph, tol: float = ROW_TOL) -> bool:
    """Check the parent-set and indicator-independence constraints of ``g`` on ``M``."""
    fs = M.features
    if fs.n != g.n:
        return False
    miss = M.missing_probability()
    S = fs.state_matrix
    for i in range(fs.n):
        if i in g.always:
            if np.any(miss[:, i] > tol):
                return False
            continue
        anc = sorted(g.state_ancestors(i))
        if not anc:
            if np.ptp(miss[:, i]) > tol:
                return False
            continue
        _, inverse = np.unique(S[:, anc], axis=0, return_inverse=True)
        inverse = inverse.ravel()
        lo = np.full(inverse.max() + 1, np.inf)
        hi = np.full(inverse.max() + 1, -np.inf)
        np.minimum.at(lo, inverse, miss[:, i])
        np.maximum.at(hi, inverse, miss[:, i])
        if np.any(hi - lo > tol):
            return False
    if not g.r_edges:
        R = fs.indicator_matrix
        # product of per-feature marginals, for every (s, r)
        p_obs = 1.0 - miss
        prod = np.ones_like(M.probs)
        for i in range(fs.n):
            prod *= np.where(R[:, i][None, :] == 1, p_obs[:, i : i + 1], miss[:, i : i + 1])
        if np.any(np.abs(prod - M.probs) > tol):
            return False
    return True
