"""Mixed graphs (path diagrams) with directed and bidirected edges.

Vertex order is declaration order and fixes every matrix index used elsewhere
in the package: ``B[v, u]`` is the coefficient of ``u -> v`` and
``Omega[u, v]`` is the error covariance attached to ``u <-> v``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

__all__ = [
    "GraphError",
    "GraphParseError",
    "MixedGraph",
    "parse_graph",
    "read_graph",
]

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_EDGE = re.compile(r"^\s*(\S+)\s*(<->|->)\s*(\S+)\s*$")


class GraphError(ValueError):
    """Invalid graph structure or unknown vertex."""


class GraphParseError(GraphError):
    """Syntax error in a graph file; carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass(frozen=True)
class MixedGraph:
    """Immutable mixed graph ``G = (V, E->, E<->)``.

    ``directed`` holds ``(u, v)`` pairs meaning ``u -> v``.  ``bidirected``
    holds each edge once as ``(u, v)`` with ``u`` declared before ``v``.
    A pair may carry both edge types.
    """

    vertices: tuple[str, ...]
    directed: frozenset[tuple[str, str]] = frozenset()
    bidirected: frozenset[tuple[str, str]] = frozenset()
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __init__(
        self,
        vertices: Iterable[str],
        directed: Iterable[tuple[str, str]] = (),
        bidirected: Iterable[tuple[str, str]] = (),
    ):
        verts = tuple(vertices)
        index = {}
        for k, v in enumerate(verts):
            if v in index:
                raise GraphError(f"duplicate vertex {v!r}")
            index[v] = k

        def check(u, v):
            for x in (u, v):
                if x not in index:
                    raise GraphError(f"unknown vertex {x!r}")
            if u == v:
                raise GraphError(f"self-loop at {u!r}")

        dset = set()
        for u, v in directed:
            check(u, v)
            dset.add((u, v))
        bset = set()
        for u, v in bidirected:
            check(u, v)
            if index[u] > index[v]:
                u, v = v, u
            bset.add((u, v))
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "directed", frozenset(dset))
        object.__setattr__(self, "bidirected", frozenset(bset))
        object.__setattr__(self, "_index", index)

    @property
    def m(self) -> int:
        return len(self.vertices)

    def index(self, v: str) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise GraphError(f"unknown vertex {v!r}") from None

    def parents(self, v: str) -> set[str]:
        self.index(v)
        return {a for a, b in self.directed if b == v}

    def siblings(self, v: str) -> set[str]:
        self.index(v)
        out = set()
        for a, b in self.bidirected:
            if a == v:
                out.add(b)
            elif b == v:
                out.add(a)
        return out

    # ---- index views used by the numerical modules -------------------

    def directed_index(self) -> list[tuple[int, int]]:
        """Free entries of ``B`` as ``(row, col) = (head, tail)``, row-major."""
        return sorted((self._index[v], self._index[u]) for u, v in self.directed)

    def bidirected_index(self) -> list[tuple[int, int]]:
        """Bidirected edges as index pairs ``(i, j)`` with ``i < j``, lexicographic."""
        return sorted((self._index[u], self._index[v]) for u, v in self.bidirected)

    def nonedge_index(self) -> list[tuple[int, int]]:
        """Pairs ``i < j`` with no bidirected edge, lexicographic."""
        bi = set(self.bidirected_index())
        m = self.m
        return [(i, j) for i in range(m) for j in range(i + 1, m) if (i, j) not in bi]

    def omega_free_index(self) -> list[tuple[int, int]]:
        """Free entries of ``Omega`` (diagonal and bidirected), ``i <= j`` lexicographic."""
        bi = set(self.bidirected_index())
        m = self.m
        return [(i, j) for i in range(m) for j in range(i, m) if i == j or (i, j) in bi]

    def parent_index(self) -> list[list[int]]:
        pa = [[] for _ in range(self.m)]
        for v, u in self.directed_index():
            pa[v].append(u)
        return pa

    # ---- counts ------------------------------------------------------

    def dof_counts(self) -> tuple[int, int]:
        """Return ``(q, d)``: naive constraint count and free parameter count."""
        m = self.m
        q = m + m * (m + 1) // 2
        d = len(self.directed) + len(self.bidirected) + m
        return q, d

    def n_profile_constraints(self) -> int:
        m = self.m
        return m + m * (m - 1) // 2 - len(self.bidirected)

    def is_acyclic(self) -> bool:
        children = {v: [] for v in self.vertices}
        indeg = {v: 0 for v in self.vertices}
        for u, v in self.directed:
            children[u].append(v)
            indeg[v] += 1
        stack = [v for v in self.vertices if indeg[v] == 0]
        seen = 0
        while stack:
            u = stack.pop()
            seen += 1
            for w in children[u]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    stack.append(w)
        return seen == self.m

    def is_subgraph_of(self, other: "MixedGraph") -> bool:
        return (
            set(self.vertices) == set(other.vertices)
            and self.directed <= other.directed
            and {frozenset(e) for e in self.bidirected}
            <= {frozenset(e) for e in other.bidirected}
        )

    def relabel_order(self, order: Iterable[str]) -> "MixedGraph":
        """Same graph with vertices declared in ``order``."""
        order = tuple(order)
        if sorted(order) != sorted(self.vertices):
            raise GraphError("new order must be a permutation of the vertices")
        return MixedGraph(order, self.directed, self.bidirected)

    def serialize(self) -> str:
        lines = ["nodes: " + " ".join(self.vertices)]
        idx = self._index
        for u, v in sorted(self.directed, key=lambda e: (idx[e[0]], idx[e[1]])):
            lines.append(f"{u} -> {v}")
        for u, v in sorted(self.bidirected, key=lambda e: (idx[e[0]], idx[e[1]])):
            lines.append(f"{u} <-> {v}")
        return "\n".join(lines) + "\n"


def parse_graph(text: str) -> MixedGraph:
    """Parse the line-oriented graph format.

    The first non-comment line is ``nodes: A B C``; each further line is
    ``U -> V`` or ``U <-> V``.  ``#`` starts a comment.
    """
    vertices = None
    directed: list[tuple[str, str]] = []
    bidirected: list[tuple[str, str]] = []
    known: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        col = len(line) - len(line.lstrip()) + 1
        if vertices is None:
            head, sep, rest = line.partition(":")
            if not sep or head.strip() != "nodes":
                raise GraphParseError("expected 'nodes: <name> ...'", lineno, col)
            vertices = []
            offset = len(head) + 1
            for tok in re.finditer(r"\S+", rest):
                name = tok.group()
                tcol = offset + tok.start() + 1
                if not _NAME.fullmatch(name):
                    raise GraphParseError(f"invalid vertex name {name!r}", lineno, tcol)
                if name in known:
                    raise GraphParseError(f"duplicate vertex {name!r}", lineno, tcol)
                known.add(name)
                vertices.append(name)
            if not vertices:
                raise GraphParseError("no vertices declared", lineno, col)
            continue
        match = _EDGE.match(line)
        if match is None:
            raise GraphParseError("expected 'U -> V' or 'U <-> V'", lineno, col)
        u, arrow, v = match.groups()
        for name, grp in ((u, 1), (v, 3)):
            if name not in known:
                kind = "unknown vertex" if _NAME.fullmatch(name) else "invalid vertex name"
                raise GraphParseError(f"{kind} {name!r}", lineno, match.start(grp) + 1)
        if u == v:
            raise GraphParseError(f"self-loop at {u!r}", lineno, match.start(1) + 1)
        (directed if arrow == "->" else bidirected).append((u, v))
    if vertices is None:
        raise GraphParseError("missing 'nodes:' line", 1, 1)
    return MixedGraph(vertices, directed, bidirected)


def read_graph(path) -> MixedGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())
