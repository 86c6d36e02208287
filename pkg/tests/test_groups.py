from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metricforge import groups as gr
from metricforge.errors import ValidationError

F = Fraction


def klein_four():
    T = [[a ^ b for b in range(4)] for a in range(4)]
    D = [[F(0) if a == b else F(1, 2) if (a ^ b) == 1 else F(1) for b in range(4)] for a in range(4)]
    return gr.FiniteGroup(T, D, name="V4")


def s3():
    perms = [(0, 1, 2), (1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0), (2, 0, 1)]
    idx = {p: i for i, p in enumerate(perms)}
    T = [[idx[tuple(p[q[i]] for i in range(3))] for q in perms] for p in perms]
    # word length in transpositions: bi-invariant, so left-invariant too
    length = [0, 1, 1, 1, 2, 2]
    D = [[F(length[T[inv][y]], 2) for y in range(6)]
         for inv in [next(j for j in range(6) if T[x][j] == 0) for x in range(6)]]
    return gr.FiniteGroup(T, D, name="S3")


class TestModels:
    def test_cyclic(self):
        G = gr.cyclic_group(4)
        assert [G.length(g) for g in G.elements()] == [0, F(1, 2), 1, F(1, 2)]
        assert G.inv(1) == 3 and G.identity == 0

    def test_nonabelian(self):
        G = s3()
        assert G.n == 6
        assert all(G.op(x, G.inv(x)) == G.identity for x in G.elements())

    def test_rejects_non_associative(self):
        T = [[0, 1, 2], [1, 0, 0], [2, 2, 0]]
        with pytest.raises(ValidationError):
            gr.FiniteGroup(T, [[0, 1, 1], [1, 0, 1], [1, 1, 0]])

    def test_rejects_missing_identity(self):
        with pytest.raises(ValidationError, match="identity"):
            gr.FiniteGroup([[0, 0], [0, 0]], [[0, 1], [1, 0]])

    def test_rejects_non_invariant_metric(self):
        T = [[(a + b) % 4 for b in range(4)] for a in range(4)]
        D = [[0, 1, 2, 1], [1, 0, 1, 1], [2, 1, 0, 1], [1, 1, 1, 0]]
        with pytest.raises(ValidationError, match="left-invariant"):
            gr.FiniteGroup(T, D)

    def test_large_group_sampled(self):
        G = gr.cyclic_group(80)
        assert G.n == 80

    def test_circle(self):
        C = gr.CircleGroup(8)
        assert C.op(F(3, 4), F(1, 2)) == F(1, 4)
        assert C.length(F(3, 4)) == F(1, 4)
        assert C.index(F(5, 8)) == 5
        with pytest.raises(ValidationError):
            C.index(F(1, 3))

    def test_model_from_dict(self):
        assert gr.model_from_dict({"kind": "circle", "denominator_cap": 16}).cap == 16
        assert gr.model_from_dict({"kind": "cyclic", "order": 6}).n == 6
        with pytest.raises(ValidationError):
            gr.model_from_dict({"kind": "lie"})


class TestBumpFamily:
    def test_z4_frozen(self):
        G = gr.cyclic_group(4)
        fam = gr.build_bump_family(G, 1)
        assert fam.radii == (1, F(1, 4))
        # clamp((d - 1/4) / (3/4)) on d = 0, 1/2, 1, 1/2
        assert fam.values(0) == [0, F(1, 3), 1, F(1, 3)]

    def test_z4_truncates(self):
        fam = gr.build_bump_family(gr.cyclic_group(4), 6)
        assert fam.truncated and fam.radii == (1, F(1, 4), F(1, 8))
        assert fam.values(1) == [0, 1, 1, 1]

    def test_circle_first_level(self):
        C = gr.CircleGroup(16)
        fam = gr.build_bump_family(C, 3)
        r1 = fam.radii[1]
        assert r1 == F(1, 2)
        for x in C.dense_sample():
            want = min(max((C.length(x) - r1) / (1 - r1), F(0)), F(1))
            assert fam.bump(0, x) == want == fam.bump(0, C.inv(x))

    @pytest.mark.parametrize("G", [gr.cyclic_group(4), gr.cyclic_group(9), klein_four(), s3(),
                                   gr.CircleGroup(32)], ids=lambda G: G.name)
    def test_conditions_and_identity(self, G):
        fam = gr.build_bump_family(G, 5)
        assert fam.check() == []
        assert all(fam.bump(n, G.identity) == 0 for n in range(fam.levels))
        assert all(fam.radii[n] <= F(1, 2 ** n) for n in range(fam.levels + 1))

    def test_trivial_group(self):
        G = gr.cyclic_group(1)
        fam = gr.build_bump_family(G, 3)
        assert fam.check() == []

    def test_unbounded_metric(self):
        T = [[0, 1], [1, 0]]
        with pytest.raises(ValidationError, match="bounded_transform"):
            gr.build_bump_family(gr.FiniteGroup(T, [[0, 3], [3, 0]]), 2)


class TestWapSum:
    def test_z4_level_one(self):
        G = gr.cyclic_group(4)
        h = gr.wap_sum(G, gr.build_bump_family(G, 1))
        assert (h(0, 1), h(0, 2), h(1, 3), h(2, 2)) == (F(1, 6), F(1, 2), F(1, 2), 0)
        assert h.tail_bound == F(1, 2)

    def test_exact_tail_when_truncated(self):
        G = gr.cyclic_group(4)
        fam = gr.build_bump_family(G, 6)
        h = gr.wap_sum(G, fam)
        assert h.tail_bound == 0
        # levels beyond the truncation add 1/4 off the identity
        assert h(0, 2) == F(1, 2) + F(1, 4) + F(1, 4)

    @pytest.mark.parametrize("G", [gr.cyclic_group(6), s3(), klein_four()], ids=lambda G: G.name)
    def test_left_invariant_exactly(self, G):
        h = gr.wap_sum(G, gr.build_bump_family(G, 4))
        for g, x, y in product(G.elements(), repeat=3):
            assert h(G.op(g, x), G.op(g, y)) == h(x, y)

    @given(st.integers(2, 12), st.integers(1, 6))
    def test_distance_bounds(self, n, levels):
        G = gr.cyclic_group(n)
        h = gr.wap_sum(G, gr.build_bump_family(G, levels))
        assert gr.distance_bound_failures(G, h) == []
        assert all(h.length(g) <= 1 for g in G.elements())

    def test_circle_bounds(self):
        C = gr.CircleGroup(32)
        h = gr.wap_sum(C, gr.build_bump_family(C, 7))
        assert gr.distance_bound_failures(C, h, C.dense_sample()) == []

    def test_needs_enough_levels(self):
        C = gr.CircleGroup(64)
        with pytest.raises(ValidationError, match="levels"):
            gr.wap_sum(C, gr.build_bump_family(C, 3)).dissimilarity()

    def test_foreign_family(self):
        with pytest.raises(ValidationError):
            gr.wap_sum(gr.cyclic_group(4), gr.build_bump_family(gr.cyclic_group(4), 1))


class TestEndToEnd:
    def test_z4(self):
        d1, cert = gr.end_to_end(gr.cyclic_group(4), 4)
        assert cert.ok
        assert cert.invariance_residual == 0.0
        assert d1.values[0, 1] == d1.values[1, 2] == d1.values[2, 3] == d1.values[3, 0]

    def test_circle(self):
        d1, cert = gr.end_to_end(gr.CircleGroup(64), 8)
        assert cert.ok and d1.n == 64

    def test_nonabelian(self):
        _, cert = gr.end_to_end(s3(), 5)
        assert cert.ok

    def test_trivial(self):
        d1, cert = gr.end_to_end(gr.cyclic_group(1), 3)
        assert d1.values.tolist() == [[0.0]] and cert.ok

    def test_moduli_against_base(self):
        G = gr.cyclic_group(8)
        d1, cert = gr.end_to_end(G, 5)
        base = np.array([[float(G.length(G.op(G.inv(x), y))) for y in range(8)] for x in range(8)])
        assert cert.moduli_fwd.holds(base, d1.values)
        assert cert.moduli_bwd.holds(d1.values, base)
        assert cert.moduli_fwd.pairs and cert.moduli_bwd.pairs

    def test_certificate_deterministic(self):
        a = gr.end_to_end(gr.cyclic_group(6), 5, seed=3)[1].to_dict()
        b = gr.end_to_end(gr.cyclic_group(6), 5, seed=3)[1].to_dict()
        assert a == b
