"""Factorizing the all-ones matrix into support-restricted step matrices.

A factorization ``W_1, ..., W_m`` is read in application order: the
product checked against ``J`` is ``W_m ... W_1``, i.e. exactly the map a
schedule of those steps applies to the input vector.

Circulant steps are summarised by a weight vector ``w`` indexed by
``Z_n`` with ``w[s]`` the weight on every message ``v -> v + s`` (``w[0]``
is the retained diagonal). Its transform is
``fourier[j] = sum_s w[s] exp(-2 pi i j s / n)``, the eigenvalue of the step
on the Fourier vector ``f_j[v] = exp(2 pi i j v / n) / sqrt(n)`` and
``sqrt(n)`` times the inner product ``(w, f_j)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import StepMatrix, SupportViolation, parse_triplet_blocks, validate_step
from .graph import Graph, GraphError, circulant_connection_set
from .protocols import hoffman_protocol
from .spectral import Spectrum

__all__ = [
    "Factorization",
    "VerifyReport",
    "CirculantVector",
    "FourierCoverReport",
    "SearchResult",
    "SymmetrizeReport",
    "verify_factorization",
    "eigen_factorization",
    "circulant_reduce",
    "fourier_cover_check",
    "reachability_lower_bound",
    "walk_feasible",
    "search_factorization",
    "cayley_symmetrize",
    "dumps_factorization",
    "loads_factorization",
]

log = logging.getLogger(__name__)

RIDGE = 1e-12


def _dense_steps(g: Graph, ws) -> list[np.ndarray]:
    mats = []
    for w in ws:
        report = validate_step(g, w)
        if not report.ok:
            raise SupportViolation(report)
        mats.append(w.to_dense() if isinstance(w, StepMatrix) else np.asarray(w, dtype=float))
    return mats


def _product(mats: Sequence[np.ndarray], n: int) -> np.ndarray:
    out = np.eye(n)
    for w in mats:
        out = w @ out
    return out


def _residual(mats: Sequence[np.ndarray], n: int) -> float:
    return float(np.linalg.norm(_product(mats, n) - np.ones((n, n))))


@dataclass(frozen=True, eq=False)
class Factorization:
    graph: Graph
    steps: tuple[StepMatrix, ...]
    residual: float

    @classmethod
    def from_steps(cls, g: Graph, steps) -> Factorization:
        steps = tuple(s if isinstance(s, StepMatrix) else StepMatrix.from_dense(g, s) for s in steps)
        return cls(g, steps, _residual([s.to_dense() for s in steps], g.n))

    @property
    def m(self) -> int:
        return len(self.steps)

    def matrices(self) -> list[np.ndarray]:
        return [s.to_dense() for s in self.steps]


@dataclass(frozen=True)
class VerifyReport:
    residual: float
    passed: bool
    threshold: float

    def to_json(self) -> dict:
        return {"residual": self.residual, "passed": self.passed, "threshold": self.threshold}


def verify_factorization(g: Graph, ws, tol: float = 1e-8) -> VerifyReport:
    """Frobenius residual of ``W_m ... W_1 - J``; passes when ``<= tol * n``.

    Support violations are rejected before any multiplication.
    """
    mats = _dense_steps(g, ws.steps if isinstance(ws, Factorization) else ws)
    residual = _residual(mats, g.n)
    threshold = tol * g.n
    return VerifyReport(residual, residual <= threshold, threshold)


def eigen_factorization(g: Graph, spec: Spectrum | None = None) -> Factorization:
    """The distinct-eigenvalue factors, with the first absorbing ``n / prod(d - lambda)``."""
    sched = hoffman_protocol(g, spec)
    steps = list(sched.steps)
    if steps:
        steps[0] = steps[0].scaled(sched.scale)
    return Factorization.from_steps(g, steps)


@dataclass(frozen=True, eq=False)
class CirculantVector:
    n: int
    weights: np.ndarray
    fourier: np.ndarray

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(s) for s in np.flatnonzero(self.weights))


def _fourier(weights: np.ndarray) -> np.ndarray:
    # numpy's forward FFT is sum_s w[s] exp(-2 pi i j s / n): the stated convention.
    return np.fft.fft(weights)


def circulant_vector(n: int, weights) -> CirculantVector:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"circulant weight vector must have length {n}")
    return CirculantVector(n, w, _fourier(w))


def circulant_reduce(n: int, conn: Sequence[int], ws, atol: float = 1e-12) -> list[CirculantVector]:
    """Weight vectors of circulant steps supported on ``{0} | conn``.

    Raises ``ValueError`` naming the first pair of rows that are not cyclic
    shifts of each other, or the first weight outside the support.
    """
    support = {0} | {int(s) % n for s in conn}
    out = []
    for t, w in enumerate(ws):
        mat = w.to_dense() if isinstance(w, StepMatrix) else np.asarray(w, dtype=float)
        if mat.shape != (n, n):
            raise ValueError(f"step {t} has shape {mat.shape}, expected {(n, n)}")
        # shifts[v, s] = weight on the message v -> v + s
        cols = np.arange(n)[:, None]
        shifts = mat[(cols + np.arange(n)[None, :]) % n, cols]
        first = shifts[0]
        bad = np.argwhere(np.abs(shifts - first) > atol)
        if bad.size:
            v, s = (int(i) for i in bad[0])
            raise ValueError(
                f"step {t} is not circulant: rows {s} and {(v + s) % n} disagree "
                f"on the weight for offset {s}"
            )
        off = [s for s in np.flatnonzero(first) if int(s) not in support]
        if off:
            raise ValueError(f"step {t} has weight on offset {int(off[0])} outside support {sorted(support)}")
        out.append(circulant_vector(n, first))
    return out


@dataclass(frozen=True)
class FourierCoverReport:
    """Per nonzero frequency ``j``: the step with the smallest ``|fourier|`` and its size."""

    n: int
    best_step: tuple[int, ...]
    best_abs: tuple[float, ...]
    covered: tuple[bool, ...]
    dc_product: complex
    tol: float

    @property
    def passed(self) -> bool:
        return all(self.covered) and abs(self.dc_product - self.n) <= self.tol * self.n

    def uncovered(self) -> list[int]:
        return [j for j, ok in enumerate(self.covered, start=1) if not ok]

    def to_json(self) -> dict:
        rows = [
            {"j": j, "step": k, "abs": a, "covered": c}
            for j, (k, a, c) in enumerate(zip(self.best_step, self.best_abs, self.covered), start=1)
        ]
        return {
            "n": self.n,
            "tol": self.tol,
            "dc_product": [self.dc_product.real, self.dc_product.imag],
            "passed": self.passed,
            "rows": rows,
        }


def fourier_cover_check(vs: Sequence[CirculantVector], tol: float = 1e-8) -> FourierCoverReport:
    """Check that every nonzero frequency is annihilated by some step and ``prod fourier[0] = n``."""
    if not vs:
        raise ValueError("no circulant vectors: the DC product is undefined")
    n = vs[0].n
    if any(v.n != n for v in vs):
        raise ValueError("circulant vectors have different lengths")
    mags = np.abs(np.array([v.fourier for v in vs]))
    best = mags[:, 1:].argmin(axis=0) if n > 1 else np.array([], dtype=int)
    best_abs = mags[best, np.arange(1, n)] if n > 1 else np.array([])
    dc = complex(np.prod([v.fourier[0] for v in vs]))
    return FourierCoverReport(
        n,
        tuple(int(k) for k in best),
        tuple(float(a) for a in best_abs),
        tuple(bool(a <= tol) for a in best_abs),
        dc,
        tol,
    )


def reachability_lower_bound(g: Graph) -> int | None:
    """Smallest ``m`` with ``(A + I)^m`` entrywise positive (equals the diameter).

    A product of ``m`` support-restricted steps can only be nonzero at
    ``(u, v)`` if a walk of length at most ``m`` leads from ``v`` to ``u``, so no
    factorization of ``J`` is shorter. ``None`` for disconnected graphs.
    """
    step = (g.adjacency() + np.eye(g.n)) > 0
    reach = np.eye(g.n, dtype=bool)
    for m in range(g.n):
        if reach.all():
            return m
        reach = (step.astype(np.int64) @ reach.astype(np.int64)) > 0
    return None


def walk_feasible(g: Graph, m: int) -> bool:
    lower = reachability_lower_bound(g)
    return lower is not None and m >= lower


@dataclass
class SearchResult:
    """Best-effort outcome of :func:`search_factorization` (experimental).

    ``status`` is ``found``, ``not found within budget`` or a rejection
    reason; nonexistence is never claimed.
    """

    status: str
    m: int
    lower_bound: int | None
    factorization: Factorization | None = None
    residual: float = float("inf")
    history: list[list[float]] = field(default_factory=list)
    best_restart: int | None = None
    unknowns: int = 0
    equations: int = 0
    jacobian_rank: int | None = None

    @property
    def found(self) -> bool:
        return self.status == "found"

    @property
    def rejected(self) -> bool:
        return self.status.startswith("rejected")

    def to_json(self) -> dict:
        return {
            "experimental": True,
            "status": self.status,
            "m": self.m,
            "lower_bound": self.lower_bound,
            "residual": self.residual,
            "best_restart": self.best_restart,
            "unknowns": self.unknowns,
            "equations": self.equations,
            "jacobian_rank": self.jacobian_rank,
            "history_lengths": [len(h) for h in self.history],
        }


def _mask(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    rows = np.concatenate([np.arange(g.n), g.targets]).astype(np.intp)
    cols = np.concatenate([np.arange(g.n), g.sources]).astype(np.intp)
    return rows, cols


def _design(left: np.ndarray, right: np.ndarray, rows, cols) -> np.ndarray:
    """Columns ``vec(L e_r e_c^T R)`` for each free entry ``(r, c)``."""
    n = left.shape[0]
    return np.einsum("pe,eq->pqe", left[:, rows], right[cols, :]).reshape(n * n, len(rows))


def _jacobian_rank(mats, rows, cols, n) -> int:
    blocks = []
    for t in range(len(mats)):
        blocks.append(_design(_product(mats[t + 1:], n), _product(mats[:t], n), rows, cols))
    return int(np.linalg.matrix_rank(np.hstack(blocks)))


def _als_restart(g, mats, rows, cols, sweeps, stop_at):
    n = g.n
    target = np.ones(n * n)
    size = len(rows)
    aug_rhs = np.concatenate([target, np.zeros(size)])
    ridge = np.sqrt(RIDGE) * np.eye(size)
    history = [_residual(mats, n)]
    for _ in range(sweeps):
        if history[-1] <= stop_at:
            break
        for t in range(len(mats)):
            left = _product(mats[t + 1:], n)
            right = _product(mats[:t], n)
            design = np.vstack([_design(left, right, rows, cols), ridge])
            coef, *_ = np.linalg.lstsq(design, aug_rhs, rcond=None)
            trial = np.zeros((n, n))
            trial[rows, cols] = coef
            old = mats[t]
            mats[t] = trial
            if _residual(mats, n) > _residual(mats[:t] + [old] + mats[t + 1:], n):
                mats[t] = old
        history.append(_residual(mats, n))
        recent = history[-26:]
        if len(recent) == 26 and recent[0] - recent[-1] <= 1e-10 * recent[0]:
            break
    return mats, history


def search_factorization(
    g: Graph,
    m: int,
    budget: int,
    seed: int = 0,
    restarts: int = 4,
    warm_start: Factorization | Sequence | None = None,
    tol: float = 1e-8,
    rank: bool = True,
) -> SearchResult:
    """Alternating least squares for ``W_m ... W_1 = J`` with random restarts.

    ``budget`` caps the total number of sweeps (one sweep updates every
    factor once) and is split evenly across restarts. Graphs whose walk
    lower bound exceeds ``m`` are rejected without searching.
    """
    if budget < 1:
        raise ValueError("search budget must be at least one sweep")
    if m < 1:
        raise ValueError("factorization length must be at least 1")
    lower = reachability_lower_bound(g)
    rows, cols = _mask(g)
    result = SearchResult("", m, lower, unknowns=m * len(rows), equations=g.n * g.n)
    if lower is None:
        result.status = "rejected: graph is not strongly connected"
        return result
    if m < lower:
        result.status = f"rejected: m={m} is below the walk lower bound {lower}"
        return result

    stop_at = tol * g.n
    restarts = max(1, restarts)
    sweeps = max(1, budget // restarts)
    best = None
    for r in range(restarts):
        if r == 0 and warm_start is not None:
            steps = warm_start.steps if isinstance(warm_start, Factorization) else warm_start
            mats = _dense_steps(g, steps)
            if len(mats) != m:
                raise ValueError(f"warm start has {len(mats)} factors, expected {m}")
        else:
            rng = np.random.default_rng([seed, r])
            mats = []
            for _ in range(m):
                w = np.zeros((g.n, g.n))
                w[rows, cols] = rng.standard_normal(len(rows)) / np.sqrt(len(rows) / g.n)
                mats.append(w)
        mats, history = _als_restart(g, mats, rows, cols, sweeps, stop_at)
        result.history.append(history)
        key = (history[-1], r)
        if best is None or key < best[0]:
            best = (key, mats)
        log.debug("restart %d: residual %.3e after %d sweeps", r, history[-1], len(history) - 1)
        if history[-1] <= stop_at:
            break

    (residual, idx), mats = best
    result.factorization = Factorization.from_steps(g, mats)
    result.residual = residual
    result.best_restart = idx
    result.status = "found" if residual <= stop_at else "not found within budget"
    if rank and result.unknowns * result.equations <= 4_000_000:
        result.jacobian_rank = _jacobian_rank(mats, rows, cols, g.n)
    return result


@dataclass(frozen=True)
class SymmetrizeReport:
    factorization: Factorization
    residual_before: float
    residual_after: float


def cayley_symmetrize(g: Graph, f: Factorization) -> SymmetrizeReport:
    """Average each step's weights over generator orbits, making it circulant."""
    conn = circulant_connection_set(g)
    if conn is None:
        raise GraphError("graph is not circulant under its labeling")
    n = g.n
    idx = np.arange(n)
    steps = []
    for mat in f.matrices():
        w = np.array([mat[(idx + s) % n, idx].mean() for s in range(n)])
        steps.append(np.array([[w[(u - v) % n] for v in range(n)] for u in range(n)]))
    after = Factorization.from_steps(g, steps)
    return SymmetrizeReport(after, f.residual, after.residual)


def dumps_factorization(f: Factorization) -> str:
    lines = [f"factorization n={f.graph.n} m={f.m} residual={f.residual!r}"]
    for t, step in enumerate(f.steps):
        lines.append(f"step {t}")
        lines += [f"{i} {j} {w!r}" for i, j, w in step.triplets()]
    return "\n".join(lines) + "\n"


def loads_factorization(g: Graph, text: str) -> Factorization:
    """Parse a factorization file; the stored residual is recomputed, not trusted."""
    header, _, blocks = parse_triplet_blocks(text, g.n)
    if header.get("kind") != "factorization":
        raise ValueError("missing 'factorization n=... m=... residual=...' header")
    if int(header.get("n", -1)) != g.n:
        raise ValueError(f"factorization is for n={header.get('n')}, graph has n={g.n}")
    if int(header.get("m", -1)) != len(blocks):
        raise ValueError(f"header declares m={header.get('m')} but file has {len(blocks)} steps")
    return Factorization.from_steps(g, blocks)


def save_factorization(f: Factorization, path: str | Path) -> None:
    Path(path).write_text(dumps_factorization(f))


def load_factorization(g: Graph, path: str | Path) -> Factorization:
    return loads_factorization(g, Path(path).read_text())
