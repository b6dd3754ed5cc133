from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from globalsum.engine import run_linear_schedule, run_protocol
from globalsum.graph import CayleySpec, Graph, build_family, cartesian_product, metrics, parse_family
from globalsum.protocols import (
    ProtocolPreconditionError,
    approx_mean_protocol,
    best_protocol,
    candidate_protocols,
    diameter2_protocol,
    hoffman_linear_protocol,
    hoffman_protocol,
    product_protocol,
    tree_protocol,
)
from globalsum.spectral import adjacency_spectrum, chebyshev_polynomial


def named_up_to(max_n):
    out = [CayleySpec("cycle", n) for n in range(3, max_n + 1)]
    out += [CayleySpec("complete", n) for n in range(2, max_n + 1)]
    out += [CayleySpec("hypercube", k) for k in range(1, 7) if 1 << k <= max_n]
    return out + [CayleySpec("petersen")]


def small_products(max_n=64):
    base = [CayleySpec("cycle", n) for n in (3, 4, 5, 6, 8)]
    base += [CayleySpec("complete", n) for n in (2, 3, 4)]
    base += [CayleySpec("hypercube", 2), CayleySpec("petersen")]
    sizes = {f: build_family(f).n for f in base}
    return [
        CayleySpec("product", factors=(a, b))
        for i, a in enumerate(base)
        for b in base[i:]
        if sizes[a] * sizes[b] <= max_n
    ]


def inputs(n, count=100, seed=0):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(count, n))


def assert_sums(g, run, count=100):
    for x in inputs(g.n, count):
        res = run(x)
        assert np.max(np.abs(res.values - x.sum())) <= 1e-9 * max(abs(x.sum()), np.abs(x).sum())


class TestHoffman:
    def test_petersen_seed42(self, petersen):
        x = np.random.default_rng(42).uniform(size=10)
        res = run_linear_schedule(petersen, hoffman_protocol(petersen), x)
        assert res.rounds == 2 == metrics(petersen).diameter
        assert res.max_rel_error <= 1e-9

    def test_hypercube3_unit(self):
        g = build_family(CayleySpec("hypercube", 3))
        sched = hoffman_protocol(g)
        assert len(sched) == 3
        assert np.allclose(run_linear_schedule(g, sched, np.eye(8)[5]).values, 1)
        a = g.adjacency()
        prod = (a - np.eye(8)) @ (a + np.eye(8)) @ (a + 3 * np.eye(8))
        assert np.allclose(prod / prod[0, 0], np.ones((8, 8)))

    def test_cycle6(self):
        g = build_family(CayleySpec("cycle", 6))
        assert len(hoffman_protocol(g)) == 3
        assert_sums(g, lambda x: run_linear_schedule(g, hoffman_protocol(g), x), 10)

    @pytest.mark.parametrize("spec", named_up_to(64), ids=str)
    def test_exact_on_named_families(self, spec):
        g = build_family(spec)
        sched = hoffman_protocol(g)
        assert len(sched) == metrics(g).diameter
        assert_sums(g, lambda x: run_linear_schedule(g, sched, x))

    def test_explicit_order(self, petersen, rng):
        x = rng.uniform(size=10)
        a = run_linear_schedule(petersen, hoffman_protocol(petersen, order=[1, 0]), x).values
        b = run_linear_schedule(petersen, hoffman_protocol(petersen, order=[0, 1]), x).values
        assert np.allclose(a, b, rtol=1e-12)
        with pytest.raises(ValueError):
            hoffman_protocol(petersen, order=[0, 0])

    def test_preconditions(self):
        with pytest.raises(ProtocolPreconditionError):
            hoffman_protocol(Graph.from_edges(4, [(0, 1), (2, 3)]))
        with pytest.raises(ProtocolPreconditionError):
            hoffman_protocol(Graph.from_edges(3, [(0, 1), (1, 2)]))


class TestTree:
    def test_examples(self):
        g = build_family(CayleySpec("cycle", 5))
        assert tree_protocol(g, 0).rounds == 4
        for n in (2, 5, 9):
            k = build_family(CayleySpec("complete", n))
            assert all(tree_protocol(k, r).rounds == 2 for r in range(n))
        prism = build_family(CayleySpec("product", factors=(CayleySpec("cycle", 5), CayleySpec("complete", 2))))
        assert {tree_protocol(prism, r).rounds for r in range(10)} == {6}

    @pytest.mark.parametrize("spec", named_up_to(64), ids=str)
    def test_exact_on_named_families(self, spec):
        g = build_family(spec)
        p = tree_protocol(g, 0)
        info = metrics(g)
        assert p.rounds == 2 * info.eccentricity[0] <= 2 * info.diameter
        assert_sums(g, lambda x: run_protocol(g, p, x))

    def test_directed_cycle(self):
        g = build_family(parse_family("directed-circulant 6 1"))
        p = tree_protocol(g, 2)
        assert p.rounds == 10
        assert_sums(g, lambda x: run_protocol(g, p, x), 5)


class TestDiameter2:
    def test_petersen_1_to_10(self, petersen):
        res = run_protocol(petersen, diameter2_protocol(petersen), np.arange(1, 11))
        assert res.rounds == 2 and np.allclose(res.values, 55)

    def test_cycle5_hand_oracle(self):
        g = build_family(CayleySpec("cycle", 5))
        x = np.array([1.0, 2, 3, 4, 5])
        res = run_protocol(g, diameter2_protocol(g), x, trace=True)
        own, heard, relayed = res.trace[2][0]
        far = [j for j in range(5) if oracles.bfs_distances(5, g.edges)[j][0] == 2]
        assert far == [2, 3]
        assert relayed == x[far].sum() == 7.0
        assert own + sum(heard.values()) == 1 + 2 + 5
        assert res.values[0] == 15.0

    def test_complete4_degenerate(self):
        g = build_family(CayleySpec("complete", 4))
        p = diameter2_protocol(g)
        assert p.rounds == 2 and p.notes["distance2_pairs"] == 0
        assert np.allclose(run_protocol(g, p, [1, 2, 3, 4]).values, 10)

    def test_refuses_diameter3(self):
        prism = build_family(CayleySpec("product", factors=(CayleySpec("cycle", 5), CayleySpec("complete", 2))))
        with pytest.raises(ProtocolPreconditionError) as info:
            diameter2_protocol(prism)
        assert info.value.details["diameter"] == 3

    @pytest.mark.parametrize("spec", [s for s in named_up_to(64) if metrics(build_family(s)).diameter <= 2], ids=str)
    def test_exact_on_diameter2_families(self, spec):
        g = build_family(spec)
        p = diameter2_protocol(g)
        assert_sums(g, lambda x: run_protocol(g, p, x))

    @given(st.integers(4, 11), st.data())
    def test_random_diameter2_graphs(self, n, data):
        # A hub adjacent to all makes the diameter at most 2; extra edges are arbitrary.
        pairs = [(u, v) for u in range(1, n) for v in range(u + 1, n)]
        extra = data.draw(st.lists(st.sampled_from(pairs), unique=True))
        g = Graph.from_edges(n, [(0, v) for v in range(1, n)] + extra)
        x = data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n))
        res = run_protocol(g, diameter2_protocol(g), x)
        assert np.allclose(res.values, sum(x), atol=1e-9 * (1 + sum(map(abs, x))))


class TestProduct:
    def test_prism(self):
        c5, k2 = build_family(CayleySpec("cycle", 5)), build_family(CayleySpec("complete", 2))
        p = product_protocol(hoffman_protocol(c5), hoffman_protocol(k2))
        g = cartesian_product(c5, k2)
        assert p.rounds == 3 == metrics(g).diameter
        assert_sums(g, lambda x: run_protocol(g, p, x))

    def test_k2_squared(self):
        k2 = build_family(CayleySpec("complete", 2))
        p = product_protocol(hoffman_protocol(k2), hoffman_protocol(k2))
        assert p.rounds == 2 == metrics(p.graph).diameter
        assert_sums(p.graph, lambda x: run_protocol(p.graph, p, x), 10)

    def test_tree_times_tree(self):
        c4, k3 = build_family(CayleySpec("cycle", 4)), build_family(CayleySpec("complete", 3))
        t1, t2 = tree_protocol(c4, 1), tree_protocol(k3, 2)
        p = product_protocol(t1, t2)
        assert p.rounds == t1.rounds + t2.rounds
        assert_sums(p.graph, lambda x: run_protocol(p.graph, p, x), 20)

    def test_order_irrelevant(self):
        c5, k3 = build_family(CayleySpec("cycle", 5)), build_family(CayleySpec("complete", 3))
        for p in (product_protocol(hoffman_linear_protocol(c5), diameter2_protocol(k3)),
                  product_protocol(diameter2_protocol(k3), hoffman_linear_protocol(c5))):
            assert p.rounds == 4
            assert_sums(p.graph, lambda x: run_protocol(p.graph, p, x), 20)

    @pytest.mark.parametrize("spec", small_products(), ids=str)
    def test_best_factor_protocols_exact(self, spec):
        g = build_family(spec)
        p = product_protocol(*(best_protocol(build_family(f), f) for f in spec.factors))
        assert p.rounds == metrics(g).diameter
        assert_sums(g, lambda x: run_protocol(g, p, x))

    def test_rejects_inexact_factor(self, petersen):
        approx = approx_mean_protocol(petersen, m=2)
        with pytest.raises(ProtocolPreconditionError):
            product_protocol(approx, tree_protocol(petersen))


class TestApproxMean:
    def test_complete4_exact(self):
        g = build_family(CayleySpec("complete", 4))
        p = approx_mean_protocol(g, m=1)
        res = run_protocol(g, p, [1, 2, 3, 4])
        assert p.certificate == pytest.approx(0, abs=1e-15) and p.certified
        assert np.allclose(res.mean_values, 2.5) and np.allclose(res.values, 10)

    def test_petersen_seed7(self, petersen):
        x = np.random.default_rng(7).uniform(size=10)
        p = approx_mean_protocol(petersen, m=2)
        res = run_protocol(petersen, p, x)
        assert p.certificate == pytest.approx(9 / 89) and p.certified
        assert np.linalg.norm(res.mean_values - x.mean()) <= 9 / 89 * np.linalg.norm(x)

    def test_petersen_m1_uncertified(self, petersen):
        p = approx_mean_protocol(petersen, m=1)
        assert p.certificate == pytest.approx(3 / 7) and not p.certified

    def test_m0_identity(self, petersen, rng):
        x = rng.uniform(size=10)
        p = approx_mean_protocol(petersen, m=0)
        assert p.certificate == 1.0 and not p.certified
        assert np.array_equal(run_protocol(petersen, p, x).mean_values, x)

    @pytest.mark.parametrize("spec", [CayleySpec("cycle", 9), CayleySpec("hypercube", 4), CayleySpec("petersen"), CayleySpec("complete", 6)], ids=str)
    @pytest.mark.parametrize("m", [1, 2, 3, 5])
    def test_bound_and_tightness(self, spec, m):
        g = build_family(spec)
        spec_ = adjacency_spectrum(g)
        p = approx_mean_protocol(g, spec_, m)
        for x in inputs(g.n, 30, seed=m):
            y = run_protocol(g, p, x).mean_values
            assert np.linalg.norm(y - x.mean()) <= p.certificate * np.linalg.norm(x) * (1 + 1e-9) + 1e-12
        # Worst eigenvalue eigenvector attains the bound.
        poly = chebyshev_polynomial(spec_, m)
        vals, vecs = np.linalg.eigh(g.adjacency())
        k = int(np.argmax(np.where(np.abs(vals - g.degree) > 1e-6, np.abs(poly.evaluate(vals - g.degree)), -1)))
        x = vecs[:, k]
        y = run_protocol(g, p, x).mean_values
        assert np.linalg.norm(y - x.mean()) == pytest.approx(p.certificate * np.linalg.norm(x), rel=1e-6, abs=1e-12)


class TestEquivarianceAndLinearity:
    @given(st.sampled_from(["cycle 7", "petersen", "hypercube 3", "complete 5"]), st.randoms(use_true_random=False), st.data())
    def test_permutation_equivariance(self, name, rnd, data):
        g = build_family(parse_family(name))
        perm = list(range(g.n))
        rnd.shuffle(perm)
        h = g.relabel(perm)
        x = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=g.n, max_size=g.n)))
        hx = np.empty(g.n)
        hx[perm] = x
        builders = [
            lambda G, root: approx_mean_protocol(G, m=2),
            lambda G, root: hoffman_linear_protocol(G),
            lambda G, root: tree_protocol(G, root),
        ]
        if metrics(g).diameter <= 2:
            builders.append(lambda G, root: diameter2_protocol(G))
        for build in builders:
            out_g = run_protocol(g, build(g, 0), x)
            out_h = run_protocol(h, build(h, perm[0]), hx)
            scale = 1 + np.abs(x).sum()
            assert np.allclose(out_h.values[perm], out_g.values, atol=1e-9 * scale)

    @given(st.sampled_from(["cycle 8", "petersen", "hypercube 4"]), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**16))
    def test_linearity(self, name, alpha, beta, seed):
        g = build_family(parse_family(name))
        x, z = np.random.default_rng(seed).uniform(-1, 1, size=(2, g.n))
        for p in (hoffman_linear_protocol(g), approx_mean_protocol(g, m=2)):
            run = lambda v: run_protocol(g, p, v).values
            lhs = run(alpha * x + beta * z)
            assert np.allclose(lhs, alpha * run(x) + beta * run(z), atol=1e-9 * (1 + abs(alpha) + abs(beta)) * g.n)


class TestSelection:
    @pytest.mark.parametrize("spec", named_up_to(16) + small_products(), ids=str)
    def test_best_protocol_is_sum_optimal(self, spec):
        g = build_family(spec)
        assert best_protocol(g, spec).rounds == metrics(g).diameter

    def test_candidate_order(self, petersen):
        names = [p.name for p in candidate_protocols(petersen)]
        assert names == ["hoffman", "diam2", "tree"]
        assert best_protocol(petersen).name == "hoffman"
