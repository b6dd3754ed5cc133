"""Constructive global-sum protocols.

All builders return objects accepted by :mod:`globalsum.engine`: the
eigenvalue schedule is a linear :class:`Schedule`; everything else is a
:class:`Protocol` with emit/absorb/finalize round functions.
"""

from __future__ import annotations

import logging
from collections import deque
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .engine import Protocol, Schedule, StepMatrix, run_protocol
from .graph import (
    CayleySpec,
    Graph,
    build_family,
    cartesian_product,
    distance2_table,
    metrics,
)
from .spectral import (
    SpectrumError,
    Spectrum,
    adjacency_spectrum,
    chebyshev_polynomial,
    hoffman_factors,
    offdiagonal_norm,
)

__all__ = [
    "ProtocolPreconditionError",
    "hoffman_protocol",
    "linear_protocol",
    "hoffman_linear_protocol",
    "tree_protocol",
    "diameter2_protocol",
    "product_protocol",
    "approx_mean_protocol",
    "candidate_protocols",
    "best_protocol",
    "best_family_protocol",
]

log = logging.getLogger(__name__)


class ProtocolPreconditionError(ValueError):
    def __init__(self, message: str, **details):
        self.details = details
        super().__init__(message)


def _items(out) -> Iterable[tuple[int, float]]:
    if out is None:
        return ()
    return out.items() if isinstance(out, Mapping) else out


def _require_connected_regular(g: Graph):
    info = metrics(g)
    if not info.regular:
        raise ProtocolPreconditionError("graph is not regular")
    if not info.connected:
        raise ProtocolPreconditionError("graph is not strongly connected", diameter=None)
    return info


def hoffman_protocol(g: Graph, spec: Spectrum | None = None, order: Sequence[int] | None = None) -> Schedule:
    """One round ``A - lambda I`` per non-principal distinct eigenvalue, then rescale.

    ``order`` optionally permutes the factors; the factors commute, so the
    result does not depend on it.
    """
    _require_connected_regular(g)
    spec = adjacency_spectrum(g) if spec is None else spec
    if spec.n != g.n or spec.d != g.degree:
        raise ValueError("spectrum does not belong to this graph")
    lambdas, scale = hoffman_factors(spec)
    if order is not None:
        if sorted(order) != list(range(len(lambdas))):
            raise ValueError("order must be a permutation of the factor indices")
        lambdas = [lambdas[i] for i in order]
    return Schedule(g, tuple(StepMatrix.affine(g, -lam) for lam in lambdas), scale)


def linear_protocol(schedule: Schedule, name: str = "linear", theorem: str = "linear schedule") -> Protocol:
    """Wrap a schedule as a message-passing protocol (sender applies edge weights)."""
    g = schedule.graph
    out_weights = []
    for step in schedule.steps:
        per_vertex: list[list[tuple[int, float]]] = [[] for _ in range(g.n)]
        for (u, v), w in zip(g.edge_list, step.weights):
            per_vertex[u].append((v, float(w)))
        out_weights.append(per_vertex)
    scale = 1.0 if schedule.scale is None else schedule.scale

    def emit(r, v, state):
        return {dst: w * state for dst, w in out_weights[r][v]}

    def absorb(r, v, state, received):
        return schedule.steps[r].diag[v] * state + sum(received.values())

    return Protocol(
        name=name,
        graph=g,
        rounds=len(schedule),
        init=lambda v, x: x,
        emit=emit,
        absorb=absorb,
        finalize=lambda v, state: scale * state,
        theorem=theorem,
        schedule=schedule,
    )


def hoffman_linear_protocol(g: Graph, spec: Spectrum | None = None) -> Protocol:
    return linear_protocol(hoffman_protocol(g, spec), "hoffman", "distinct-eigenvalue schedule")


def _bfs_tree(neighbors, root: int, n: int) -> tuple[list[int], list[int | None]]:
    depth = [-1] * n
    parent: list[int | None] = [None] * n
    depth[root] = 0
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for w in sorted(neighbors[u]):
            if depth[w] < 0:
                depth[w] = depth[u] + 1
                parent[w] = u
                queue.append(w)
    return depth, parent


def tree_protocol(g: Graph, root: int = 0) -> Protocol:
    """Gather along a BFS in-tree to ``root`` adding at branch points, then broadcast.

    Uses (max distance to root) + (max distance from root) rounds, which is
    ``2 * ecc(root)`` on undirected graphs.
    """
    if not 0 <= root < g.n:
        raise ValueError(f"root {root} out of range")
    # In-tree: distances *to* the root, found by BFS over reversed edges.
    gather_depth, gather_parent = _bfs_tree(g.in_neighbors, root, g.n)
    bcast_depth, bcast_parent = _bfs_tree(g.out_neighbors, root, g.n)
    if min(gather_depth) < 0 or min(bcast_depth) < 0:
        raise ProtocolPreconditionError("some vertices cannot reach or be reached from the root")
    height, reach = max(gather_depth), max(bcast_depth)
    children: list[list[int]] = [[] for _ in range(g.n)]
    for v, par in enumerate(bcast_parent):
        if par is not None:
            children[par].append(v)

    def init(v, x):
        total = x if (v == root and height == 0) else None
        return (x, total)

    def emit(r, v, state):
        acc, total = state
        if r < height:
            if v != root and gather_depth[v] == height - r:
                return {gather_parent[v]: acc}
            return None
        if bcast_depth[v] == r - height and children[v]:
            return {c: total for c in children[v]}
        return None

    def absorb(r, v, state, received):
        acc, total = state
        if r < height:
            acc = acc + sum(received.values())
            if v == root and r == height - 1:
                total = acc
            return (acc, total)
        if received:
            total = received[bcast_parent[v]]
        return (acc, total)

    return Protocol(
        name="tree",
        graph=g,
        rounds=height + reach,
        init=init,
        emit=emit,
        absorb=absorb,
        finalize=lambda v, state: state[1],
        theorem="gather-broadcast spanning tree",
        notes={"root": root, "gather_rounds": height, "broadcast_rounds": reach},
    )


def diameter2_protocol(g: Graph) -> Protocol:
    """Exact two-round global sum on graphs of diameter at most 2.

    Round 1 every vertex sends its value to all out-neighbours. Round 2
    vertex ``i`` sends to out-neighbour ``k`` the sum of ``x_j / n(j, k)``
    over its in-neighbours ``j`` at distance 2 from ``k``, where ``n(j, k)``
    counts 2-paths. Summed over all middle vertices ``i`` each such ``x_j``
    arrives at ``k`` exactly once.
    """
    info = metrics(g)
    if not info.connected:
        raise ProtocolPreconditionError("graph is disconnected", diameter=None)
    if info.diameter > 2:
        raise ProtocolPreconditionError(
            f"diameter {info.diameter} > 2; the two-round protocol does not apply",
            diameter=info.diameter,
        )
    table = distance2_table(g)
    # relay[i][k] = [(j, 1/n(j,k)), ...] for the 2-paths j -> i -> k
    relay: list[dict[int, list[tuple[int, float]]]] = []
    for i in range(g.n):
        per_target = {}
        for k in g.out_neighbors[i]:
            terms = [(j, 1.0 / table[(j, k)]) for j in g.in_neighbors[i] if (j, k) in table]
            if terms:
                per_target[k] = terms
        relay.append(per_target)

    def init(v, x):
        return (x, {}, 0.0)

    def emit(r, v, state):
        x, heard, _ = state
        if r == 0:
            return {k: x for k in g.out_neighbors[v]}
        return {k: sum(heard[j] * w for j, w in terms) for k, terms in relay[v].items()}

    def absorb(r, v, state, received):
        x, heard, relayed = state
        if r == 0:
            return (x, dict(received), relayed)
        return (x, heard, sum(received.values()))

    def finalize(v, state):
        x, heard, relayed = state
        return x + sum(heard.values()) + relayed

    return Protocol(
        name="diam2",
        graph=g,
        rounds=2,
        init=init,
        emit=emit,
        absorb=absorb,
        finalize=finalize,
        theorem="distance-2 path counting",
        notes={"distance2_pairs": len(table)},
    )


def _check_exact(p: Protocol, seed: int = 0) -> None:
    if p.target != "sum":
        raise ProtocolPreconditionError(f"factor protocol {p.name!r} does not target the sum")
    x = np.random.default_rng(seed).uniform(0.5, 1.5, p.graph.n)
    result = run_protocol(p.graph, p, x)
    if not result.exact(1e-9):
        raise ProtocolPreconditionError(
            f"factor protocol {p.name!r} does not finalize to the global sum "
            f"(relative error {result.max_rel_error:.3g})"
        )


def product_protocol(p1: Protocol | Schedule, p2: Protocol | Schedule, check: bool = True) -> Protocol:
    """Run ``p1`` on every first-factor fiber, then ``p2`` on every second-factor fiber.

    Vertex ``(a, b)`` of the product is numbered ``a * n2 + b``, matching
    :func:`globalsum.graph.cartesian_product`.
    """
    p1 = linear_protocol(p1) if isinstance(p1, Schedule) else p1
    p2 = linear_protocol(p2) if isinstance(p2, Schedule) else p2
    if check:
        _check_exact(p1)
        _check_exact(p2)
    g = cartesian_product(p1.graph, p2.graph)
    n2 = p2.graph.n
    r1 = p1.rounds

    def hand_over(a, b, inner):
        return p2.init(b, float(p1.finalize(a, inner)))

    def init(v, x):
        a, b = divmod(v, n2)
        inner = p1.init(a, x)
        return hand_over(a, b, inner) if r1 == 0 else inner

    def emit(r, v, state):
        a, b = divmod(v, n2)
        if r < r1:
            return [(c * n2 + b, val) for c, val in _items(p1.emit(r, a, state))]
        return [(a * n2 + c, val) for c, val in _items(p2.emit(r - r1, b, state))]

    def absorb(r, v, state, received):
        a, b = divmod(v, n2)
        if r < r1:
            inner = p1.absorb(r, a, state, {u // n2: val for u, val in received.items()})
            return hand_over(a, b, inner) if r == r1 - 1 else inner
        return p2.absorb(r - r1, b, state, {u % n2: val for u, val in received.items()})

    return Protocol(
        name=f"product({p1.name},{p2.name})",
        graph=g,
        rounds=r1 + p2.rounds,
        init=init,
        emit=emit,
        absorb=absorb,
        finalize=lambda v, state: p2.finalize(v % n2, state),
        theorem="Cartesian product composition",
        notes={"factors": (p1.descriptor(), p2.descriptor())},
    )


def approx_mean_protocol(g: Graph, spec: Spectrum | None = None, m: int = 1) -> Protocol:
    """``y = p_m(A - dI) x`` in ``m`` rounds via the Chebyshev three-term recurrence.

    Each round is one multiplication by ``A - dI``; the previous iterate stays
    in local memory. The protocol's ``certificate`` bounds
    ``||y - mean(x) 1|| / ||x||``; it is ``certified`` when below ``1/(n-1)``.
    """
    info = _require_connected_regular(g)
    spec = adjacency_spectrum(g) if spec is None else spec
    d = info.degree
    poly = chebyshev_polynomial(spec, m)
    if m == 0:
        eps = 1.0
        log.warning("approximate mean with m=0 returns the input itself; no guarantee")
    else:
        eps = offdiagonal_norm(poly, spec)
    certified = bool(m > 0 and eps < 1.0 / (g.n - 1))
    steps = poly.steps

    def emit(r, v, state):
        return {u: state[1] for u in g.out_neighbors[v]}

    def absorb(r, v, state, received):
        prev, cur = state
        alpha, beta, gamma = steps[r]
        shifted = sum(received.values()) - d * cur
        return (cur, alpha * shifted + beta * cur + gamma * prev)

    return Protocol(
        name="approx",
        graph=g,
        rounds=m,
        init=lambda v, x: (0.0, x),
        emit=emit,
        absorb=absorb,
        finalize=lambda v, state: state[1],
        theorem="Chebyshev approximate mean",
        target="mean",
        certificate=eps,
        certified=certified,
        notes={"polynomial": poly},
    )


def candidate_protocols(g: Graph, family: CayleySpec | None = None) -> list[Protocol]:
    """Every implemented exact protocol applicable to ``g``, in tie-break order."""
    info = metrics(g)
    out = []
    if info.regular and info.connected:
        try:
            out.append(hoffman_linear_protocol(g))
        except SpectrumError as exc:
            log.info("no eigenvalue schedule for this graph: %s", exc)
    if info.connected and info.diameter <= 2:
        out.append(diameter2_protocol(g))
    if family is not None and family.kind == "product":
        left, right = family.factors
        out.append(product_protocol(best_family_protocol(left), best_family_protocol(right)))
    if info.connected:
        out.append(tree_protocol(g, 0))
    return out


def best_protocol(g: Graph, family: CayleySpec | None = None) -> Protocol:
    """The applicable exact protocol with the fewest rounds (first one on ties)."""
    cands = candidate_protocols(g, family)
    if not cands:
        raise ProtocolPreconditionError("no exact protocol applies (graph disconnected?)")
    return min(cands, key=lambda p: p.rounds)


@lru_cache(maxsize=256)
def best_family_protocol(family: CayleySpec) -> Protocol:
    return best_protocol(build_family(family), family)
