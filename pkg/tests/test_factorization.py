from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from globalsum.engine import StepMatrix, SupportViolation
from globalsum.factorization import (
    Factorization,
    cayley_symmetrize,
    circulant_reduce,
    circulant_vector,
    dumps_factorization,
    eigen_factorization,
    fourier_cover_check,
    loads_factorization,
    reachability_lower_bound,
    search_factorization,
    verify_factorization,
    walk_feasible,
)
from globalsum.graph import CayleySpec, Graph, GraphError, build_family, metrics
from globalsum.spectral import circulant_spectrum

GOLDEN = 2 * math.cos(2 * math.pi / 5)


def family(kind, size=None):
    return build_family(CayleySpec(kind, size))


@st.composite
def small_graphs(draw, max_n=12):
    n = draw(st.integers(2, max_n))
    directed = draw(st.booleans())
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return Graph.from_edges(n, edges, directed=directed)


class TestVerify:
    def test_complete4(self):
        g = family("complete", 4)
        report = verify_factorization(g, [StepMatrix.affine(g, 1.0)])
        assert report.residual == 0.0 and report.passed

    def test_petersen(self, petersen):
        a = petersen.adjacency()
        report = verify_factorization(petersen, [a - np.eye(10), a + 2 * np.eye(10)])
        assert report.residual < 1e-9 and report.passed

    def test_single_cycle5_factor_fails(self):
        g = family("cycle", 5)
        report = verify_factorization(g, [StepMatrix.affine(g, -GOLDEN)])
        assert report.residual > 1 and not report.passed

    def test_support_checked_first(self):
        g = family("cycle", 5)
        with pytest.raises(SupportViolation):
            verify_factorization(g, [np.ones((5, 5))])

    def test_threshold_scales_with_n(self):
        g = family("cycle", 6)
        assert verify_factorization(g, eigen_factorization(g), tol=1e-3).threshold == pytest.approx(6e-3)


class TestEigenFactorization:
    def test_petersen(self, petersen):
        f = eigen_factorization(petersen)
        assert f.m == 2 and f.residual < 1e-9

    def test_cycle6(self):
        g = family("cycle", 6)
        f = eigen_factorization(g)
        assert f.m == 3 and f.residual < 1e-9
        # Unscaled factors are A - lambda I for lambda in {1, -1, -2} in some order.
        lambdas = sorted(-float(s.diag[0] / s.weights[0]) for s in f.steps)
        assert np.allclose(lambdas, [-2, -1, 1])
        assert np.allclose(oracles.matrix_product(f.matrices()), np.ones((6, 6)))

    @pytest.mark.parametrize("n", [2, 3, 8, 17])
    def test_complete(self, n):
        f = eigen_factorization(family("complete", n))
        assert f.m == 1 and f.residual == pytest.approx(0.0, abs=1e-12)


class TestCirculant:
    def test_c5_hoffman(self):
        g = family("cycle", 5)
        vs = circulant_reduce(5, (1, 4), eigen_factorization(g).steps)
        assert len(vs) == 2
        report = fourier_cover_check(vs)
        assert report.passed and report.uncovered() == []
        # Each factor kills one conjugate pair of frequencies.
        assert report.best_step[0] == report.best_step[3] != report.best_step[1] == report.best_step[2]

    def test_c4(self):
        g = family("cycle", 4)
        steps = [StepMatrix.affine(g, 0.0), StepMatrix.affine(g, 2.0).scaled(4 / (2 * 4))]
        report = fourier_cover_check(circulant_reduce(4, (1, 3), steps))
        assert report.passed and report.dc_product == pytest.approx(4)
        assert verify_factorization(g, steps).passed

    def test_identity_fails(self):
        g = family("cycle", 7)
        vs = circulant_reduce(7, (1, 6), [StepMatrix.identity(g)])
        report = fourier_cover_check(vs)
        assert report.uncovered() == list(range(1, 7))

    def test_all_ones_weight(self):
        v = circulant_vector(5, [1, 1, 0, 0, 1])
        report = fourier_cover_check([v])
        expected = [abs(1 + 2 * math.cos(2 * math.pi * j / 5)) for j in range(1, 5)]
        assert np.allclose(report.best_abs, expected)
        assert report.uncovered() == [1, 2, 3, 4]

    def test_errors(self):
        with pytest.raises(ValueError):
            fourier_cover_check([])
        with pytest.raises(ValueError):
            fourier_cover_check([circulant_vector(5, [1, 1, 0, 0, 1]), circulant_vector(4, [1, 1, 0, 1])])

    def test_noncirculant_names_rows(self):
        g = family("cycle", 5)
        w = StepMatrix.affine(g, 1.0).to_dense()
        w[3, 2] = 7.0
        with pytest.raises(ValueError, match=r"rows \d+ and \d+"):
            circulant_reduce(5, (1, 4), [w])

    def test_offsupport_rejected(self):
        w = np.eye(5) + np.roll(np.eye(5), 2, axis=0)
        with pytest.raises(ValueError):
            circulant_reduce(5, (1, 4), [w])

    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=16))
    def test_fourier_convention_direct_sum(self, weights):
        v = circulant_vector(len(weights), weights)
        assert np.allclose(v.fourier, oracles.fourier_direct(weights), atol=1e-9)

    @given(st.integers(3, 32).flatmap(lambda n: st.tuples(st.just(n), st.sets(st.integers(1, n - 1), min_size=1))))
    def test_fourier_pinned_by_spectrum(self, args):
        n, base = args
        conn = tuple(sorted(base | {n - s for s in base}))
        weights = np.zeros(n)
        weights[list(conn)] = 1
        spec = circulant_spectrum(n, conn)
        fourier = circulant_vector(n, weights).fourier
        assert np.allclose(fourier.imag, 0, atol=1e-9)
        assert np.allclose(sorted(fourier.real, reverse=True), np.repeat(spec.values, spec.multiplicities), atol=1e-9)

    @settings(max_examples=25)
    @given(st.integers(3, 16).flatmap(lambda n: st.tuples(st.just(n), st.sets(st.integers(1, n - 1), min_size=1))), st.data())
    def test_verify_iff_cover_random_circulant_schedules(self, args, data):
        n, base = args
        conn = tuple(sorted(base | {n - s for s in base}))
        g = build_family(CayleySpec("circulant", n, conn))
        steps = []
        for _ in range(data.draw(st.integers(1, 4))):
            w = np.zeros(n)
            for s in (0,) + conn:
                w[s] = data.draw(st.floats(-2, 2))
            dense = np.array([[w[(u - v) % n] for v in range(n)] for u in range(n)])
            steps.append(dense)
        cover = fourier_cover_check(circulant_reduce(n, conn, steps))
        assert verify_factorization(g, steps).passed == cover.passed


class TestWalkBound:
    @pytest.mark.parametrize("kind,size", [("cycle", 9), ("hypercube", 3), ("petersen", None), ("complete", 5)])
    def test_equals_diameter(self, kind, size):
        g = family(kind, size)
        assert reachability_lower_bound(g) == metrics(g).diameter

    @given(small_graphs())
    def test_boolean_power_oracle(self, g):
        assert reachability_lower_bound(g) == oracles.reachability_min_power(g.adjacency().tolist())

    def test_cycle6_m2_rejected(self):
        res = search_factorization(family("cycle", 6), 2, 10000, 0)
        assert res.rejected and "walk lower bound 3" in res.status
        assert res.factorization is None and res.history == []
        assert not walk_feasible(family("cycle", 6), 2) and walk_feasible(family("cycle", 6), 3)

    def test_disconnected_rejected(self):
        res = search_factorization(Graph.from_edges(4, [(0, 1), (2, 3)]), 3, 10)
        assert res.rejected and reachability_lower_bound(Graph.from_edges(4, [(0, 1), (2, 3)])) is None


class TestSearch:
    def test_petersen_m2(self, petersen):
        res = search_factorization(petersen, 2, 2000, seed=0)
        assert res.found and res.residual < 1e-6
        assert verify_factorization(petersen, res.factorization).passed
        assert res.to_json()["experimental"] is True
        assert res.jacobian_rank is not None and res.jacobian_rank <= res.unknowns

    def test_warm_start(self):
        for g in (family("cycle", 6), family("hypercube", 3)):
            f = eigen_factorization(g)
            res = search_factorization(g, f.m, 10, warm_start=f)
            assert res.residual < 1e-9 and res.history[0] == [res.residual]

    def test_warm_start_length_checked(self):
        g = family("cycle", 6)
        with pytest.raises(ValueError):
            search_factorization(g, 4, 10, warm_start=eigen_factorization(g))

    @pytest.mark.parametrize("kind,size,m", [("cycle", 5, 2), ("cycle", 7, 3), ("hypercube", 2, 2), ("complete", 4, 1)])
    def test_monotone_history_and_determinism(self, kind, size, m):
        g = family(kind, size)
        a = search_factorization(g, m, 60, seed=3, restarts=3)
        b = search_factorization(g, m, 60, seed=3, restarts=3)
        for hist in a.history:
            assert all(later <= earlier for earlier, later in zip(hist, hist[1:]))
        assert a.history == b.history and a.residual == b.residual

    def test_bad_arguments(self):
        g = family("cycle", 5)
        with pytest.raises(ValueError):
            search_factorization(g, 2, 0)
        with pytest.raises(ValueError):
            search_factorization(g, 0, 10)

    def test_budget_exhausted_reported(self):
        res = search_factorization(family("cycle", 8), 4, 2, seed=1, restarts=2)
        assert res.status in ("found", "not found within budget")
        assert res.factorization is not None


class TestSymmetrize:
    def test_fixed_point(self):
        g = family("cycle", 5)
        f = eigen_factorization(g)
        report = cayley_symmetrize(g, f)
        assert np.allclose(np.array(report.factorization.matrices()), np.array(f.matrices()))
        assert report.residual_after == pytest.approx(report.residual_before, abs=1e-12)

    def test_perturbed_restored(self, rng):
        g = family("cycle", 5)
        f = eigen_factorization(g)
        noisy = [m + 1e-3 * rng.standard_normal((5, 5)) * (m != 0) for m in f.matrices()]
        report = cayley_symmetrize(g, Factorization.from_steps(g, noisy))
        vs = circulant_reduce(5, (1, 4), report.factorization.steps)
        assert len(vs) == 2
        assert report.residual_after <= report.residual_before

    def test_petersen_refused(self, petersen):
        with pytest.raises(GraphError):
            cayley_symmetrize(petersen, eigen_factorization(petersen))


class TestFiles:
    def test_roundtrip_recomputes_residual(self):
        g = family("cycle", 6)
        f = eigen_factorization(g)
        text = dumps_factorization(f)
        back = loads_factorization(g, text)
        assert back.m == 3 and back.residual == f.residual
        tampered = text.replace("residual=", "residual=0.0 # ", 1)
        assert loads_factorization(g, tampered).residual == f.residual

    def test_header_checks(self):
        g = family("cycle", 6)
        text = dumps_factorization(eigen_factorization(g))
        with pytest.raises(ValueError):
            loads_factorization(family("cycle", 5), text)
        with pytest.raises(ValueError):
            loads_factorization(g, text.replace("m=3", "m=2"))
        with pytest.raises(ValueError):
            loads_factorization(g, "step 0\n0 0 1.0\n")
