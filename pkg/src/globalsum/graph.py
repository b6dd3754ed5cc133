"""Network graphs: family constructors, structural metrics and file I/O.

Vertices are ``0..n-1``. An edge ``(u, v)`` means ``u`` can send one scalar
to ``v`` per round. The adjacency matrix follows the receiver-row
convention ``A[v, u] = 1`` iff ``(u, v)`` is an edge, so that one round of
linear mixing is literally ``A @ x``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Graph",
    "GraphMetrics",
    "Distance2Table",
    "CayleySpec",
    "GraphError",
    "GraphFormatError",
    "build_family",
    "parse_family",
    "cartesian_product",
    "metrics",
    "distance_matrix",
    "distance2_table",
    "circulant_connection_set",
    "save_graph",
    "load_graph",
]


class GraphError(ValueError):
    """Invalid graph or invalid family parameters."""


class GraphFormatError(GraphError):
    """Malformed graph file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=True)
class Graph:
    n: int
    edges: frozenset
    directed: bool = False

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise GraphError(f"vertex count must be a positive integer, got {self.n!r}")
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop ({u}, {v}) not allowed")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphError(f"edge ({u}, {v}) references a vertex outside 0..{self.n - 1}")
        if not self.directed:
            missing = [(u, v) for u, v in edges if (v, u) not in edges]
            if missing:
                raise GraphError(f"undirected graph is missing reverse of edge {missing[0]}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], directed: bool = False) -> Graph:
        """Build a graph; for undirected graphs each pair may be listed once."""
        edges = set(edges)
        if not directed:
            edges |= {(v, u) for u, v in edges}
        return cls(n, frozenset(edges), directed)

    @cached_property
    def edge_list(self) -> tuple[tuple[int, int], ...]:
        """Edges in the canonical (sorted) order used by every per-edge array."""
        return tuple(sorted(self.edges))

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: i for i, e in enumerate(self.edge_list)}

    @cached_property
    def sources(self) -> np.ndarray:
        return np.array([u for u, _ in self.edge_list], dtype=np.intp)

    @cached_property
    def targets(self) -> np.ndarray:
        return np.array([v for _, v in self.edge_list], dtype=np.intp)

    @cached_property
    def out_neighbors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edge_list:
            out[u].append(v)
        return tuple(tuple(x) for x in out)

    @cached_property
    def in_neighbors(self) -> tuple[tuple[int, ...], ...]:
        inn: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edge_list:
            inn[v].append(u)
        return tuple(tuple(sorted(x)) for x in inn)

    def adjacency(self) -> np.ndarray:
        """Receiver-row adjacency: ``A[v, u] = 1`` iff ``u -> v`` is an edge."""
        a = np.zeros((self.n, self.n))
        if self.edges:
            a[self.targets, self.sources] = 1.0
        return a

    @property
    def is_symmetric(self) -> bool:
        return all((v, u) in self.edges for u, v in self.edges)

    @property
    def degree(self) -> int | None:
        """Common in/out degree, or ``None`` if the graph is irregular."""
        outs = {len(x) for x in self.out_neighbors}
        ins = {len(x) for x in self.in_neighbors}
        if len(outs) == 1 and outs == ins:
            return outs.pop()
        return None

    def relabel(self, perm: Sequence[int]) -> Graph:
        """Return the graph with vertex ``i`` renamed ``perm[i]``."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.n)):
            raise GraphError("relabeling must be a permutation of the vertices")
        return Graph(self.n, frozenset((perm[u], perm[v]) for u, v in self.edges), self.directed)


@dataclass(frozen=True)
class GraphMetrics:
    """Degree and distance summary.

    ``degree`` is ``None`` for irregular graphs. A graph that is not strongly
    connected has ``connected=False`` and ``diameter=None``.
    """

    n: int
    degree: int | None
    connected: bool
    diameter: int | None
    eccentricity: tuple[int, ...] | None

    @property
    def regular(self) -> bool:
        return self.degree is not None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "degree": self.degree if self.regular else "irregular",
            "diameter": self.diameter if self.connected else "disconnected",
        }


@dataclass(frozen=True)
class Distance2Table:
    """Ordered pairs ``(j, k)`` at distance exactly two, with their 2-path counts."""

    pairs: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        return pair in self.pairs

    def __getitem__(self, pair) -> int:
        return self.pairs[pair]


@dataclass(frozen=True)
class CayleySpec:
    """Parameters of one of the supported graph families.

    ``kind`` is one of ``cycle``, ``complete``, ``hypercube``, ``petersen``,
    ``circulant`` or ``product``. ``size`` is ``n`` (or the dimension for
    hypercubes), ``connection`` the connection set of a circulant and
    ``factors`` the two child specs of a product.
    """

    kind: str
    size: int | None = None
    connection: tuple[int, ...] = ()
    factors: tuple[CayleySpec, ...] = ()
    directed: bool = False

    def __str__(self) -> str:
        if self.kind == "petersen":
            return "petersen"
        if self.kind == "circulant":
            conn = ",".join(str(s) for s in self.connection)
            return f"circulant({self.size};{conn})"
        if self.kind == "product":
            return f"{self.factors[0]}x{self.factors[1]}"
        return f"{self.kind}({self.size})"

    @property
    def generators(self) -> tuple:
        """The connection (generating) set of the underlying Cayley graph."""
        if self.kind == "cycle":
            return tuple(sorted({1 % self.size, (-1) % self.size}))
        if self.kind == "complete":
            return tuple(range(1, self.size))
        if self.kind == "circulant":
            conn = set(self.connection)
            if not self.directed:
                conn |= {self.size - s for s in conn}
            return tuple(sorted(conn))
        if self.kind == "hypercube":
            return tuple(1 << i for i in range(self.size))
        if self.kind == "petersen":
            # Kneser K(5,2) is vertex-transitive but not a Cayley graph.
            return ()
        left, right = (f.generators for f in self.factors)
        return tuple(("L", s) for s in left) + tuple(("R", s) for s in right)

    @property
    def degree(self) -> int:
        if self.kind == "petersen":
            return 3
        if self.kind == "product":
            return self.factors[0].degree + self.factors[1].degree
        return len(self.generators)


FAMILY_ARITY = {"cycle": 1, "complete": 1, "hypercube": 1, "petersen": 0, "circulant": 2, "product": 2}


def parse_family(tokens: str | Sequence[str]) -> CayleySpec:
    """Parse tokens such as ``product cycle 5 complete 2`` or ``circulant 9 1,2``."""
    if isinstance(tokens, str):
        tokens = tokens.split()
    tokens = list(tokens)
    spec, rest = _parse_tokens(tokens)
    if rest:
        raise GraphError(f"unexpected trailing tokens: {' '.join(rest)}")
    return spec


def _parse_tokens(tokens: list[str]) -> tuple[CayleySpec, list[str]]:
    if not tokens:
        raise GraphError("empty family specification")
    kind, rest = tokens[0].lower(), tokens[1:]
    directed = False
    if kind.startswith("directed-"):
        kind, directed = kind[len("directed-"):], True
    if kind not in FAMILY_ARITY:
        raise GraphError(f"unknown family {tokens[0]!r}; expected one of {sorted(FAMILY_ARITY)}")
    if kind == "petersen":
        return CayleySpec("petersen"), rest
    if kind == "product":
        left, rest = _parse_tokens(rest)
        right, rest = _parse_tokens(rest)
        return CayleySpec("product", factors=(left, right)), rest
    try:
        size = int(rest[0])
    except (IndexError, ValueError):
        raise GraphError(f"{kind} needs an integer size") from None
    if kind == "circulant":
        try:
            conn = tuple(int(s) for s in rest[1].split(",") if s)
        except (IndexError, ValueError):
            raise GraphError("circulant needs a comma-separated connection set, e.g. 1,2") from None
        return CayleySpec("circulant", size, conn, directed=directed), rest[2:]
    return CayleySpec(kind, size), rest[1:]


def build_family(spec: CayleySpec) -> Graph:
    """Instantiate a family member as a :class:`Graph`."""
    kind = spec.kind
    if kind in ("cycle", "complete", "circulant"):
        n = spec.size
        if n is None or n < 2:
            raise GraphError(f"{kind} needs n >= 2, got {n}")
        if kind == "cycle":
            conn = {1, n - 1}
        elif kind == "complete":
            conn = set(range(1, n))
        else:
            conn = set(spec.connection)
            if not conn:
                raise GraphError("circulant connection set is empty")
            bad = [s for s in conn if not 1 <= s <= n - 1]
            if bad:
                raise GraphError(f"circulant connection elements must lie in 1..{n - 1}, got {bad}")
            if not spec.directed:
                # C_n(1, 2) conventionally means the connection set {+-1, +-2}.
                conn |= {n - s for s in conn}
        edges = frozenset((v, (v + s) % n) for v in range(n) for s in conn)
        directed = kind == "circulant" and spec.directed and any((n - s) % n not in conn for s in conn)
        return Graph(n, edges, directed)
    if kind == "hypercube":
        dim = spec.size
        if dim is None or dim < 1:
            raise GraphError(f"hypercube dimension must be >= 1, got {dim}")
        n = 1 << dim
        return Graph(n, frozenset((v, v ^ (1 << i)) for v in range(n) for i in range(dim)))
    if kind == "petersen":
        verts = list(itertools.combinations(range(5), 2))
        edges = frozenset(
            (i, j) for i, a in enumerate(verts) for j, b in enumerate(verts) if not set(a) & set(b)
        )
        return Graph(10, edges)
    if kind == "product":
        if len(spec.factors) != 2:
            raise GraphError("product needs exactly two factor specs")
        return cartesian_product(build_family(spec.factors[0]), build_family(spec.factors[1]))
    raise GraphError(f"unknown family {kind!r}")


def cartesian_product(g1: Graph, g2: Graph) -> Graph:
    """Cartesian product; vertex ``(a, b)`` is numbered ``a * g2.n + b``."""
    n2 = g2.n
    edges = {(a * n2 + b, c * n2 + b) for a, c in g1.edges for b in range(n2)}
    edges |= {(a * n2 + b, a * n2 + c) for b, c in g2.edges for a in range(g1.n)}
    return Graph(g1.n * n2, frozenset(edges), g1.directed or g2.directed)


def distance_matrix(g: Graph) -> np.ndarray:
    """``dist[u, v]`` = directed hop distance from ``u`` to ``v``; -1 if unreachable.

    Breadth-first search from every source at once, one boolean frontier
    expansion per level.
    """
    adj = np.zeros((g.n, g.n), dtype=np.int64)
    if g.edges:
        adj[g.sources, g.targets] = 1
    dist = np.full((g.n, g.n), -1, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    frontier = np.eye(g.n, dtype=np.int64)
    level = 0
    while frontier.any():
        level += 1
        frontier = ((frontier @ adj) > 0) & (dist < 0)
        dist[frontier] = level
        frontier = frontier.astype(np.int64)
    return dist


def metrics(g: Graph) -> GraphMetrics:
    dist = distance_matrix(g)
    degree = g.degree
    if (dist < 0).any():
        return GraphMetrics(g.n, degree, False, None, None)
    ecc = tuple(int(e) for e in dist.max(axis=1))
    return GraphMetrics(g.n, degree, True, max(ecc), ecc)


def distance2_table(g: Graph) -> Distance2Table:
    """2-path counts ``n(j, k)`` for every ordered pair at distance exactly 2."""
    a = np.zeros((g.n, g.n), dtype=np.int64)
    for u, v in g.edges:
        a[u, v] = 1
    walks = a @ a
    pairs = {}
    for j, k in zip(*np.nonzero(walks)):
        j, k = int(j), int(k)
        if j != k and not a[j, k]:
            pairs[(j, k)] = int(walks[j, k])
    return Distance2Table(pairs)


def circulant_connection_set(g: Graph) -> tuple[int, ...] | None:
    """Connection set ``S`` if ``g`` is circulant under its labeling, else ``None``."""
    conn = sorted(v for v in g.out_neighbors[0])
    conn_set = set(conn)
    for u, v in g.edges:
        if (v - u) % g.n not in conn_set:
            return None
    if len(g.edges) != g.n * len(conn):
        return None
    return tuple(conn)


def save_graph(g: Graph, path: str | Path, fmt: str | None = None) -> None:
    """Write ``g`` as text (``n <count> directed <0|1>`` + ``u v`` lines) or JSON."""
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix == ".json" else "text"
    path.write_text(dumps_graph(g, fmt))


def dumps_graph(g: Graph, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps({"n": g.n, "directed": g.directed, "edges": [list(e) for e in g.edge_list]}) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown graph format {fmt!r}")
    lines = [f"n {g.n} directed {int(g.directed)}"]
    lines += [f"{u} {v}" for u, v in g.edge_list]
    return "\n".join(lines) + "\n"


def load_graph(path: str | Path) -> Graph:
    return loads_graph(Path(path).read_text())


def loads_graph(text: str) -> Graph:
    if text.lstrip().startswith("{"):
        return _loads_json(text)
    n = directed = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 4 or parts[0] != "n" or parts[2] != "directed":
                raise GraphFormatError("expected header 'n <count> directed <0|1>'", lineno)
            try:
                n = int(parts[1])
            except ValueError:
                raise GraphFormatError(f"vertex count {parts[1]!r} is not an integer", lineno) from None
            if n < 1:
                raise GraphFormatError("vertex count must be positive", lineno)
            if parts[3] not in ("0", "1"):
                raise GraphFormatError(f"directed flag must be 0 or 1, got {parts[3]!r}", lineno)
            directed = parts[3] == "1"
            continue
        if len(parts) != 2:
            raise GraphFormatError(f"expected 'u v', got {line!r}", lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"non-integer vertex in {line!r}", lineno) from None
        problem = _edge_problem(u, v, n)
        if problem:
            raise GraphFormatError(problem, lineno)
        edges.append((u, v))
    if n is None:
        raise GraphFormatError("missing header line")
    return Graph.from_edges(n, edges, directed)


def _edge_problem(u: int, v: int, n: int) -> str | None:
    if u == v:
        return f"self-loop ({u}, {v}) not allowed"
    for x in (u, v):
        if not 0 <= x < n:
            return f"vertex {x} out of range 0..{n - 1}"
    return None


def _loads_json(text: str) -> Graph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    for key in ("n", "directed", "edges"):
        if key not in doc:
            raise GraphFormatError(f"JSON graph is missing field {key!r}")
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise GraphFormatError(f"field 'n' must be a positive integer, got {n!r}")
    edges = []
    for i, e in enumerate(doc["edges"]):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e)):
            raise GraphFormatError(f"edges[{i}] must be a pair of integers, got {e!r}")
        problem = _edge_problem(e[0], e[1], n)
        if problem:
            raise GraphFormatError(f"edges[{i}]: {problem}")
        edges.append(tuple(e))
    return Graph.from_edges(n, edges, bool(doc["directed"]))
