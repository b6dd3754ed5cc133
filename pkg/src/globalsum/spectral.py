"""Adjacency spectra, Hoffman step factors and residual polynomials."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numpy.polynomial import Polynomial as _NpPoly

from .graph import Graph, circulant_connection_set

__all__ = [
    "Spectrum",
    "Polynomial",
    "HoffmanFactors",
    "DiameterBound",
    "SpectrumError",
    "UnsupportedSpectrum",
    "default_tol",
    "adjacency_spectrum",
    "circulant_spectrum",
    "hoffman_factors",
    "leja_order",
    "chebyshev_polynomial",
    "offdiagonal_norm",
    "diameter_bound",
]

log = logging.getLogger(__name__)


class SpectrumError(ValueError):
    pass


class UnsupportedSpectrum(SpectrumError):
    pass


def default_tol(d: float) -> float:
    return 1e-8 * max(1.0, float(d))


@dataclass(frozen=True)
class Spectrum:
    """Distinct eigenvalues with multiplicities, sorted descending.

    ``near_gaps`` lists gaps between neighbouring clusters that are within
    ten times ``tol``; a non-empty list means the distinct count is fragile.
    """

    entries: tuple
    n: int
    d: int
    tol: float
    is_complex: bool = False
    near_gaps: tuple = ()

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.entries])

    @property
    def multiplicities(self) -> tuple[int, ...]:
        return tuple(k for _, k in self.entries)

    @property
    def distinct_count(self) -> int:
        return len(self.entries)

    @property
    def m(self) -> int:
        return len(self.entries) - 1

    def to_json(self) -> dict:
        if self.is_complex:
            entries = [[[float(v.real), float(v.imag)], k] for v, k in self.entries]
        else:
            entries = [[float(v), k] for v, k in self.entries]
        return {"entries": entries, "m": self.m, "tol": self.tol}


def _cluster(values: np.ndarray, tol: float) -> tuple[list, list]:
    """Single-linkage clustering of sorted-descending real values."""
    values = np.sort(np.asarray(values, dtype=float))[::-1]
    groups: list[list[float]] = [[values[0]]]
    near = []
    for prev, cur in zip(values[:-1], values[1:]):
        gap = prev - cur
        if gap <= tol:
            groups[-1].append(cur)
        else:
            if gap <= 10 * tol:
                near.append(float(gap))
            groups.append([cur])
    return [(float(np.mean(g)), len(g)) for g in groups], near


def _cluster_complex(values: np.ndarray, tol: float) -> tuple[list, list]:
    order = sorted(values, key=lambda z: (-round(z.real / tol), -z.imag))
    groups: list[list[complex]] = []
    for z in order:
        for g in groups:
            if abs(z - g[0]) <= tol:
                g.append(z)
                break
        else:
            groups.append([z])
    reps = [(complex(np.mean(g)), len(g)) for g in groups]
    reps.sort(key=lambda e: (-e[0].real, -e[0].imag))
    near = []
    for i, (a, _) in enumerate(reps):
        for b, _ in reps[i + 1:]:
            if tol < abs(a - b) <= 10 * tol:
                near.append(float(abs(a - b)))
    return reps, near


def _make_spectrum(eigs: np.ndarray, n: int, d: int, tol: float, is_complex: bool) -> Spectrum:
    if tol <= 0:
        raise ValueError(f"clustering tolerance must be positive, got {tol}")
    log.debug("clustering %d eigenvalues with tol=%g", len(eigs), tol)
    if is_complex:
        entries, near = _cluster_complex(eigs, tol)
    else:
        entries, near = _cluster(eigs, tol)
        if abs(entries[0][0] - d) > tol:
            raise SpectrumError(f"largest eigenvalue {entries[0][0]} differs from degree {d}")
        # The all-ones vector is an exact eigenvector of a regular graph.
        entries[0] = (float(d), entries[0][1])
    if near:
        log.warning("eigenvalue gaps %s lie within 10x tol=%g; distinct count may be fragile", near, tol)
    return Spectrum(tuple(entries), n, d, tol, is_complex, tuple(near))


def adjacency_spectrum(g: Graph, tol: float | None = None) -> Spectrum:
    """Distinct adjacency eigenvalues of a regular graph.

    Symmetric graphs use a dense symmetric eigensolve. Directed graphs are
    accepted only when circulant under their labeling, via the closed form.
    """
    d = g.degree
    if d is None:
        raise SpectrumError("graph is not regular")
    tol = default_tol(d) if tol is None else tol
    if g.is_symmetric:
        eigs = np.linalg.eigvalsh(g.adjacency())
        return _make_spectrum(eigs, g.n, d, tol, False)
    conn = circulant_connection_set(g)
    if conn is None:
        raise UnsupportedSpectrum("unsupported: symmetric spectra only (directed graph is not circulant)")
    return circulant_spectrum(g.n, conn, tol)


def circulant_eigenvalues(n: int, conn: Sequence[int]) -> np.ndarray:
    """``lambda_j = sum_s omega^(j s)`` for ``j = 0..n-1``, ``omega = exp(2 pi i / n)``."""
    j = np.arange(n)[:, None]
    s = np.asarray(sorted(set(conn)), dtype=np.int64)[None, :]
    phase = 2 * np.pi * ((j * s) % n) / n
    return np.exp(1j * phase).sum(axis=1)


def circulant_spectrum(n: int, conn: Sequence[int], tol: float | None = None) -> Spectrum:
    conn = sorted(set(int(s) for s in conn))
    if not conn or any(not 1 <= s <= n - 1 for s in conn):
        raise SpectrumError(f"connection set must be a nonempty subset of 1..{n - 1}, got {conn}")
    d = len(conn)
    tol = default_tol(d) if tol is None else tol
    eigs = circulant_eigenvalues(n, conn)
    symmetric = all((n - s) % n in conn for s in conn)
    if symmetric:
        return _make_spectrum(eigs.real, n, d, tol, False)
    return _make_spectrum(eigs, n, d, tol, True)


class HoffmanFactors(NamedTuple):
    lambdas: tuple[float, ...]
    scale: float


def _require_connected(spec: Spectrum) -> None:
    if spec.is_complex:
        raise UnsupportedSpectrum("unsupported: real (symmetric) spectra only")
    if spec.entries[0][1] != 1:
        raise SpectrumError(
            f"eigenvalue {spec.d} has multiplicity {spec.entries[0][1]}; graph is disconnected"
        )


def leja_order(lambdas: Sequence[float], d: float) -> list[float]:
    """Greedy ordering that annihilates the currently most amplified component first.

    After factors ``t_1..t_k`` the component along eigenvalue ``mu`` has been
    scaled by ``prod |mu - lambda_t| / |d - lambda_t|`` relative to the
    surviving constant component; picking the largest of these next keeps
    every intermediate ratio bounded, which the descending order does not
    (long cycles lose all accuracy).
    """
    remaining = list(lambdas)
    growth = [1.0] * len(remaining)
    out = []
    while remaining:
        i = max(range(len(remaining)), key=lambda k: (growth[k], abs(d - remaining[k])))
        lam = remaining.pop(i)
        growth.pop(i)
        out.append(lam)
        growth = [g * abs(mu - lam) / abs(d - lam) for g, mu in zip(growth, remaining)]
    return out


def hoffman_factors(spec: Spectrum, order: str = "leja") -> HoffmanFactors:
    """Non-principal distinct eigenvalues and the factor turning ``mu`` into the sum.

    After applying every ``A - lambda I`` each vertex holds
    ``mean(x) * prod(d - lambda)``; multiplying by ``scale`` gives the sum.
    ``order`` is ``"leja"`` (numerically stable, default) or ``"descending"``.
    """
    _require_connected(spec)
    lambdas = [float(v) for v, _ in spec.entries[1:]]
    denom = 1.0
    for lam in lambdas:
        gap = spec.d - lam
        if abs(gap) <= spec.tol:
            raise SpectrumError(f"eigenvalue {lam} coincides with the degree {spec.d}")
        denom *= gap
    if order == "leja":
        lambdas = leja_order(lambdas, spec.d)
    elif order != "descending":
        raise ValueError(f"unknown factor order {order!r}")
    return HoffmanFactors(tuple(lambdas), spec.n / denom)


@dataclass(frozen=True)
class Polynomial:
    """A polynomial in monomial coefficients ``coeffs[0] + coeffs[1] x + ...``.

    Chebyshev residual polynomials also carry ``steps``: one ``(alpha, beta,
    gamma)`` triple per degree with ``u[k+1] = alpha*B u[k] + beta*u[k] +
    gamma*u[k-1]`` and ``u[0] = 1``. Evaluation prefers the recurrence.
    """

    coeffs: tuple[float, ...]
    steps: tuple[tuple[float, float, float], ...] | None = None
    interval: tuple[float, float] | None = None

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        return self.evaluate(z)

    def evaluate(self, z):
        """Evaluate at a scalar, an array of scalars, or a square matrix."""
        z = np.asarray(z)
        matrix = z.ndim == 2
        one = np.eye(z.shape[0]) if matrix else np.ones_like(z, dtype=np.result_type(z, float))
        mul = (lambda a, b: a @ b) if matrix else (lambda a, b: a * b)
        if self.steps is not None:
            prev, cur = np.zeros_like(one), one
            for alpha, beta, gamma in self.steps:
                prev, cur = cur, alpha * mul(z, cur) + beta * cur + gamma * prev
            return cur
        acc = self.coeffs[-1] * one
        for c in reversed(self.coeffs[:-1]):
            acc = mul(z, acc) + c * one
        return acc

    def to_json(self) -> dict:
        return {"coeffs": [float(c) for c in self.coeffs]}


def _chebyshev_steps(a: float, b: float, m: int, tol: float) -> list[tuple[float, float, float]]:
    if b - a <= tol:
        # Single cluster: the limit of the Chebyshev family is (1 - x/c)^m.
        c = 0.5 * (a + b)
        return [(-1.0 / c, 1.0, 0.0)] * m
    width = b - a
    sigma = -(a + b) / width
    steps = []
    # ratio[k] = T_{k-1}(sigma) / T_k(sigma); kept as ratios to avoid overflow.
    ratio = 1.0 / sigma
    if m >= 1:
        steps.append((2.0 / (width * sigma), -(a + b) / (width * sigma), 0.0))
    for _ in range(1, m):
        nxt = 1.0 / (2.0 * sigma - ratio)
        steps.append((4.0 * nxt / width, -2.0 * (a + b) * nxt / width, -ratio * nxt))
        ratio = nxt
    return steps


def chebyshev_polynomial(spec: Spectrum, m: int) -> Polynomial:
    """Scaled, shifted Chebyshev polynomial of degree ``m`` with ``p(0) = 1``.

    The interval is the non-principal part of the spectrum of ``A - d I``,
    ``[lambda_min - d, lambda_2 - d]``; ``p(x) = T_m(t(x)) / T_m(t(0))`` with
    ``t`` the affine map of that interval onto ``[-1, 1]``.
    """
    if m < 0:
        raise ValueError(f"degree must be nonnegative, got {m}")
    _require_connected(spec)
    if spec.distinct_count < 2:
        raise SpectrumError("spectrum has a single distinct eigenvalue")
    rest = [v for v, _ in spec.entries[1:]]
    a, b = min(rest) - spec.d, max(rest) - spec.d
    if b >= 0:
        raise SpectrumError(f"eigenvalue {max(rest)} puts 0 inside the shifted interval [{a}, {b}]")
    steps = _chebyshev_steps(a, b, m, spec.tol)
    prev, cur = _NpPoly([0.0]), _NpPoly([1.0])
    x = _NpPoly([0.0, 1.0])
    for alpha, beta, gamma in steps:
        prev, cur = cur, alpha * x * cur + beta * cur + gamma * prev
    coeffs = list(cur.coef) + [0.0] * (m + 1 - len(cur.coef))
    coeffs[0] = 1.0
    return Polynomial(tuple(float(c) for c in coeffs), tuple(steps), (a, b))


def offdiagonal_norm(p: Polynomial, spec: Spectrum) -> float:
    """``|| p(A - dI) - J/n ||_2`` computed on the non-principal eigenvalues."""
    if abs(p.coeffs[0] - 1.0) > 0:
        raise ValueError("polynomial must satisfy p(0) = 1")
    rest = spec.values[1:] - spec.d
    if rest.size == 0:
        return 0.0
    return float(np.max(np.abs(p.evaluate(rest))))


class DiameterBound(NamedTuple):
    m: int
    certificate: float
    threshold: float


def diameter_bound(spec: Spectrum, max_degree: int | None = None) -> DiameterBound:
    """Smallest Chebyshev degree whose off-principal norm is below ``1/(n-1)``."""
    if spec.n == 1:
        return DiameterBound(0, 0.0, float("inf"))
    threshold = 1.0 / (spec.n - 1)
    cap = max_degree if max_degree is not None else 4 * spec.n + 10
    for m in range(cap + 1):
        eps = offdiagonal_norm(chebyshev_polynomial(spec, m), spec)
        if eps < threshold:
            return DiameterBound(m, eps, threshold)
    raise SpectrumError(f"no degree <= {cap} met the bound {threshold}")
