"""Round-by-round execution of communication protocols.

Every round each directed edge carries at most one real scalar. Linear
schedules run through a vectorised path whose message buffer is a single
array with one slot per edge; general protocols run through
:class:`MessageBuffer`, which rejects any second scalar on an edge, any
non-scalar payload and any message on a non-edge.

A round is a two-phase barrier: every vertex emits from its pre-round
state, then every vertex absorbs. Received messages are handed over in
ascending sender order so floating-point reductions are reproducible.
"""

from __future__ import annotations

import copy
import math
import numbers
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .graph import Graph

__all__ = [
    "EngineError",
    "SupportViolation",
    "NonEdgeError",
    "BandwidthError",
    "NonFiniteStateError",
    "SupportReport",
    "StepMatrix",
    "Schedule",
    "Protocol",
    "ProtocolResult",
    "MessageBuffer",
    "validate_step",
    "run_linear_schedule",
    "run_protocol",
    "TripletFormatError",
    "parse_triplet_blocks",
    "schedule_from_triplets",
    "make_input",
    "load_input",
]


class EngineError(RuntimeError):
    pass


class SupportViolation(EngineError, ValueError):
    def __init__(self, report: SupportReport):
        self.report = report
        shown = ", ".join(f"({u}, {v})" for u, v in report.violations[:8])
        more = "" if len(report.violations) <= 8 else f" and {len(report.violations) - 8} more"
        super().__init__(f"weights outside adjacency+diagonal support at {shown}{more}")


class NonEdgeError(EngineError):
    def __init__(self, round_index: int, edge: tuple[int, int]):
        self.round = round_index
        self.edge = edge
        super().__init__(f"round {round_index}: message on non-edge {edge[0]} -> {edge[1]}")


class BandwidthError(EngineError):
    def __init__(self, round_index: int, edge: tuple[int, int], reason: str):
        self.round = round_index
        self.edge = edge
        super().__init__(f"round {round_index}: edge {edge[0]} -> {edge[1]}: {reason}")


class NonFiniteStateError(EngineError, FloatingPointError):
    def __init__(self, round_index: int):
        self.round = round_index
        super().__init__(f"non-finite value produced in round {round_index}")


@dataclass(frozen=True)
class SupportReport:
    """``violations`` are matrix positions ``(row, col)``: a weight on a message col -> row."""

    ok: bool
    violations: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True, eq=False)
class StepMatrix:
    """One round of linear mixing ``x <- W x`` supported on edges plus diagonal.

    ``weights[i]`` multiplies the message on ``graph.edge_list[i]``; ``diag[v]``
    is the weight of vertex ``v``'s own retained value.
    """

    graph: Graph
    diag: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float).reshape(-1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if diag.shape != (self.graph.n,):
            raise ValueError(f"expected {self.graph.n} diagonal weights, got {diag.size}")
        if weights.shape != (len(self.graph.edge_list),):
            raise ValueError(f"expected {len(self.graph.edge_list)} edge weights, got {weights.size}")
        diag.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def affine(cls, g: Graph, diagonal: float, edge: float = 1.0) -> StepMatrix:
        """``edge * A + diagonal * I``; e.g. ``A - lambda I`` is ``affine(g, -lambda)``."""
        return cls(g, np.full(g.n, float(diagonal)), np.full(len(g.edge_list), float(edge)))

    @classmethod
    def identity(cls, g: Graph) -> StepMatrix:
        return cls.affine(g, 1.0, 0.0)

    @classmethod
    def from_dense(cls, g: Graph, w) -> StepMatrix:
        w = np.asarray(w, dtype=float)
        report = validate_step(g, w)
        if not report.ok:
            raise SupportViolation(report)
        return cls(g, np.diag(w).copy(), w[g.targets, g.sources])

    def to_dense(self) -> np.ndarray:
        w = np.diag(self.diag)
        if self.graph.edge_list:
            w[self.graph.targets, self.graph.sources] = self.weights
        return w

    def scaled(self, c: float) -> StepMatrix:
        return StepMatrix(self.graph, self.diag * c, self.weights * c)

    def triplets(self) -> list[tuple[int, int, float]]:
        """``(row, col, weight)`` entries, diagonal included, in row-major order."""
        out = [(v, v, float(self.diag[v])) for v in range(self.graph.n)]
        out += [(v, u, float(w)) for (u, v), w in zip(self.graph.edge_list, self.weights)]
        return sorted(out, key=lambda t: (t[0], t[1]))


def validate_step(g: Graph, w) -> SupportReport:
    """Check that every nonzero weight of ``w`` lies on an edge of ``g`` or the diagonal."""
    if isinstance(w, StepMatrix):
        if w.graph == g:
            return SupportReport(True)
        w = w.to_dense()
    w = np.asarray(w)
    if w.shape != (g.n, g.n):
        raise ValueError(f"step matrix has shape {w.shape}, graph needs {(g.n, g.n)}")
    allowed = g.adjacency().astype(bool) | np.eye(g.n, dtype=bool)
    bad = np.argwhere((w != 0) & ~allowed)
    violations = tuple((int(r), int(c)) for r, c in bad)
    return SupportReport(not violations, violations)


@dataclass(frozen=True, eq=False)
class Schedule:
    """Ordered step matrices on one graph, with an optional final scaling."""

    graph: Graph
    steps: tuple[StepMatrix, ...] = ()
    scale: float | None = None

    def __post_init__(self):
        steps = tuple(self.steps)
        for t, step in enumerate(steps):
            if step.graph != self.graph:
                raise ValueError(f"step {t} is defined on a different graph")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    def matrix(self) -> np.ndarray:
        """The overall linear map ``scale * W_m ... W_1``."""
        out = np.eye(self.graph.n)
        for step in self.steps:
            out = step.to_dense() @ out
        return out * (1.0 if self.scale is None else self.scale)

    def to_triplets(self) -> str:
        lines = []
        if self.scale is not None:
            lines.append(f"scale {self.scale!r}")
        for t, step in enumerate(self.steps):
            lines.append(f"step {t}")
            lines += [f"{i} {j} {w!r}" for i, j, w in step.triplets()]
        return "\n".join(lines) + "\n"


@dataclass
class ProtocolResult:
    """Outcome of one protocol run.

    ``values`` are the per-vertex estimates of the global sum. Mean-targeting
    protocols additionally fill ``mean_values`` (and ``values = n * mean``).
    """

    values: np.ndarray
    rounds: int
    truth: float
    mean: float
    max_abs_error: float
    max_rel_error: float
    name: str = ""
    trace: list | None = None
    mean_values: np.ndarray | None = None
    certificate: float | None = None
    certified: bool | None = None

    def exact(self, rel_tol: float = 1e-9) -> bool:
        return self.max_rel_error <= rel_tol

    def to_json(self) -> dict:
        doc = {
            "rounds": self.rounds,
            "values": [float(v) for v in self.values],
            "sum": float(self.truth),
            "max_rel_error": float(self.max_rel_error),
            "max_abs_error": float(self.max_abs_error),
            "mean": float(self.mean),
        }
        if self.name:
            doc = {"protocol": self.name, **doc}
        if self.mean_values is not None:
            doc["mean_values"] = [float(v) for v in self.mean_values]
        if self.certificate is not None:
            doc["certificate"] = float(self.certificate)
            doc["certified"] = bool(self.certified)
        return doc


def _result(values, x, rounds, **extra) -> ProtocolResult:
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    truth = float(np.sum(x))
    abs_err = float(np.max(np.abs(values - truth))) if values.size else 0.0
    scale = abs(truth) or float(np.sum(np.abs(x))) or 1.0
    return ProtocolResult(values, rounds, truth, truth / x.size, abs_err, abs_err / scale, **extra)


def _as_input(g: Graph, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n,):
        raise ValueError(f"input vector has shape {x.shape}, graph has {g.n} vertices")
    return x


def run_linear_schedule(g: Graph, sched: Schedule, x, trace: bool = False) -> ProtocolResult:
    """Run ``state_k = W_k state_{k-1}`` from ``state_0 = x``; then apply the scaling."""
    x = _as_input(g, x)
    for t, step in enumerate(sched.steps):
        report = validate_step(g, step)
        if not report.ok:
            raise SupportViolation(report)
    state = x.copy()
    states = [state.copy()] if trace else None
    src, dst = g.sources, g.targets
    for k, step in enumerate(sched.steps, start=1):
        # The message buffer: exactly one slot per directed edge.
        with np.errstate(over="ignore", invalid="ignore"):
            messages = step.weights * state[src]
            state = step.diag * state + np.bincount(dst, weights=messages, minlength=g.n)
        if not np.all(np.isfinite(state)):
            raise NonFiniteStateError(k)
        if trace:
            states.append(state.copy())
    values = state if sched.scale is None else state * sched.scale
    return _result(values, x, len(sched.steps), trace=states)


@dataclass(frozen=True, eq=False)
class Protocol:
    """An executable round plan.

    ``init(v, x_v) -> state``; ``emit(r, v, state)`` returns ``{target: scalar}``
    or ``(target, scalar)`` pairs; ``absorb(r, v, state, received) -> state``
    where ``received`` maps sender to scalar; ``finalize(v, state) -> float``.
    ``target`` is ``"sum"`` or ``"mean"``.
    """

    name: str
    graph: Graph
    rounds: int
    init: Callable[[int, float], Any]
    emit: Callable[[int, int, Any], Mapping[int, float] | Iterable[tuple[int, float]]]
    absorb: Callable[[int, int, Any, Mapping[int, float]], Any]
    finalize: Callable[[int, Any], float]
    theorem: str = ""
    target: str = "sum"
    schedule: Schedule | None = None
    certificate: float | None = None
    certified: bool | None = None
    notes: dict = field(default_factory=dict)

    def descriptor(self) -> dict:
        return {"name": self.name, "rounds": self.rounds, "theorem": self.theorem}


class MessageBuffer:
    """Per-round message slots, one scalar per directed edge."""

    def __init__(self, g: Graph, round_index: int):
        self.graph = g
        self.round = round_index
        self.slots = np.zeros(len(g.edge_list))
        self.filled = np.zeros(len(g.edge_list), dtype=bool)

    def post(self, src: int, dst: int, value) -> None:
        edge = (int(src), int(dst))
        idx = self.graph.edge_index.get(edge)
        if idx is None:
            raise NonEdgeError(self.round, edge)
        if self.filled[idx]:
            raise BandwidthError(self.round, edge, "a second scalar in the same round")
        if type(value) is not float:
            if isinstance(value, np.ndarray) and value.ndim == 0:
                value = value.item()
            if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Real):
                raise BandwidthError(self.round, edge, f"payload {type(value).__name__} is not a single real scalar")
            value = float(value)
        if not math.isfinite(value):
            raise NonFiniteStateError(self.round)
        self.slots[idx] = value
        self.filled[idx] = True

    def received(self, v: int) -> dict[int, float]:
        out = {}
        for u in self.graph.in_neighbors[v]:
            idx = self.graph.edge_index[(u, v)]
            if self.filled[idx]:
                out[u] = float(self.slots[idx])
        return out


def run_protocol(g: Graph, p: Protocol, x, trace: bool = False) -> ProtocolResult:
    """Execute ``p`` on ``g`` for exactly ``p.rounds`` rounds."""
    if p.graph != g:
        raise ValueError(f"protocol {p.name!r} was built for a different graph")
    x = _as_input(g, x)
    states = [p.init(v, float(x[v])) for v in range(g.n)]
    history = [copy.deepcopy(states)] if trace else None
    for r in range(p.rounds):
        buf = MessageBuffer(g, r)
        for v in range(g.n):
            out = p.emit(r, v, states[v])
            if out is None:
                continue
            items = out.items() if isinstance(out, Mapping) else out
            for dst, value in items:
                buf.post(v, dst, value)
        states = [p.absorb(r, v, states[v], buf.received(v)) for v in range(g.n)]
        if trace:
            history.append(copy.deepcopy(states))
    out = np.array([p.finalize(v, states[v]) for v in range(g.n)], dtype=float)
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError(p.rounds)
    extra = dict(name=p.name, trace=history, certificate=p.certificate, certified=p.certified)
    if p.target == "mean":
        return _result(out * g.n, x, p.rounds, mean_values=out, **extra)
    return _result(out, x, p.rounds, **extra)


class TripletFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_triplet_blocks(text: str, n: int) -> tuple[dict, float | None, list[np.ndarray]]:
    """Parse ``step t`` blocks of ``i j w`` lines into dense matrices.

    An optional header line ``<kind> key=value ...`` and an optional
    ``scale <s>`` line may precede the first block.
    """
    header: dict = {}
    scale = None
    blocks: list[np.ndarray] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "step":
            if len(parts) != 2 or parts[1] != str(len(blocks)):
                raise TripletFormatError(f"expected 'step {len(blocks)}'", lineno)
            blocks.append(np.zeros((n, n)))
            continue
        if parts[0] == "scale" and not blocks:
            try:
                scale = float(parts[1])
            except (IndexError, ValueError):
                raise TripletFormatError("scale needs one real value", lineno) from None
            continue
        if not blocks and "=" in line:
            header["kind"] = parts[0]
            for item in parts[1:]:
                key, _, value = item.partition("=")
                header[key] = value
            continue
        if not blocks:
            raise TripletFormatError("triplet before the first 'step' line", lineno)
        if len(parts) != 3:
            raise TripletFormatError(f"expected 'i j w', got {line!r}", lineno)
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise TripletFormatError(f"malformed triplet {line!r}", lineno) from None
        if not (0 <= i < n and 0 <= j < n):
            raise TripletFormatError(f"index ({i}, {j}) out of range for n={n}", lineno)
        blocks[-1][i, j] = w
    return header, scale, blocks


def schedule_from_triplets(g: Graph, text: str) -> Schedule:
    """Inverse of :meth:`Schedule.to_triplets`; weights off the support are rejected."""
    _, scale, blocks = parse_triplet_blocks(text, g.n)
    return Schedule(g, tuple(StepMatrix.from_dense(g, b) for b in blocks), scale)


def make_input(spec: str | Sequence[str], n: int) -> np.ndarray:
    """Input vector from ``ones``, ``unit k``, ``uniform seed`` or ``file path``."""
    tokens = spec.replace(":", " ").split() if isinstance(spec, str) else list(spec)
    if not tokens:
        raise ValueError("empty input specification")
    kind = tokens[0].lower()
    if kind == "ones" and len(tokens) == 1:
        return np.ones(n)
    if kind == "unit" and len(tokens) == 2:
        k = int(tokens[1])
        if not 0 <= k < n:
            raise ValueError(f"unit index {k} out of range 0..{n - 1}")
        x = np.zeros(n)
        x[k] = 1.0
        return x
    if kind == "uniform" and len(tokens) == 2:
        return np.random.default_rng(int(tokens[1])).uniform(0.0, 1.0, n)
    if kind == "file" and len(tokens) >= 2:
        x = load_input(" ".join(tokens[1:]) if isinstance(spec, str) else tokens[1])
        if x.size != n:
            raise ValueError(f"input file has {x.size} values, graph has {n} vertices")
        return x
    raise ValueError(f"unrecognised input specification {spec!r}")


def load_input(path: str | Path) -> np.ndarray:
    values = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a real number: {line!r}") from None
    return np.array(values)
