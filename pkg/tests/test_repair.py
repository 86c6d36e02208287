import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metricforge.errors import InvariantError, ValidationError
from metricforge.repair import (certify_equivalence, choose_depth, repair,
                                shortest_path_closure)
from metricforge.space import FiniteDissimilarity, check_triangle, random_premetric

import brute
from test_space import PATH3, SQUARED3, premetrics


def two_point(c):
    return FiniteDissimilarity([[0, c], [c, 0]])


class TestChooseDepth:
    @pytest.mark.parametrize("h_min, depth", [(0.3, 4), (0.001, 10), (1.0, 4), (2.0, 4)])
    def test_examples(self, h_min, depth):
        assert choose_depth(two_point(h_min)) == depth

    def test_too_small(self):
        with pytest.raises(ValidationError, match="rescale"):
            choose_depth(two_point(1e-9))

    def test_single_point(self):
        assert choose_depth(FiniteDissimilarity([[0]])) == 4

    def test_cap(self):
        assert choose_depth(two_point(1e-9), cap=12) == 12
        assert choose_depth(two_point(0.3), cap=12) == 4
        assert choose_depth(two_point(2.0 ** -10), cap=8) == 8


class TestRepair:
    def test_squared_points_frozen(self):
        res = repair(FiniteDissimilarity(SQUARED3))
        assert res.certificate.depth == 4
        assert res.certificate.epsilon == 0.125
        assert res.d1.values.tolist() == [
            [0.0, 1.0625, 1.125],
            [1.0625, 0.0, 1.0625],
            [1.125, 1.0625, 0.0],
        ]
        d = res.d1.values
        assert d[0, 2] <= d[0, 1] + d[1, 2]

    def test_metric_without_lift(self):
        res = repair(FiniteDissimilarity(PATH3), lift=False)
        assert check_triangle(res.d1).violation_count == 0
        assert res.certificate.mode == "none"

    def test_two_points(self):
        res = repair(two_point(0.7))
        f, eps = res.f, res.certificate.epsilon
        assert res.d1.values[0, 1] == f(0.7) + eps

    def test_closure_mode(self, rng):
        h = random_premetric(12, rng)
        res = repair(h, lift=False, closure=True)
        assert res.certificate.mode == "closure"
        assert check_triangle(res.d1).violation_count == 0

    def test_lift_and_closure_exclusive(self):
        with pytest.raises(ValidationError):
            repair(FiniteDissimilarity(PATH3), lift=True, closure=True)

    def test_prescale(self):
        h = FiniteDissimilarity(np.array(SQUARED3) * 1000.0)
        res = repair(h, prescale=True)
        assert check_triangle(res.d1).violation_count == 0

    def test_diagonal(self, rng):
        h = random_premetric(8, rng)
        d = repair(h).d1.values
        off = ~np.eye(8, dtype=bool)
        assert np.all(np.diag(d) == 0) and np.all(d[off] > 0)

    @given(premetrics(max_n=7), st.sampled_from([None, 4, 6]))
    def test_always_a_metric(self, h, depth):
        res = repair(h, depth=depth)
        best, _, count = brute.triangle(res.d1.values.tolist())
        assert count == 0 and best == 0.0

    @given(premetrics(max_n=7))
    def test_pre_lift_deficiency_bound(self, h):
        res = repair(h)
        assert res.certificate.pre_lift_deficiency <= 2.0 ** -res.certificate.depth

    @given(premetrics(max_n=6))
    def test_rank_order_preserved(self, h):
        d = repair(h).d1.values
        H = h.values
        # f is weakly increasing, so no pair is strictly reversed
        assert not np.any((H[:, :, None, None] < H[None, None, :, :])
                          & (d[:, :, None, None] > d[None, None, :, :]))


class TestCertificate:
    def test_moduli_hold_on_example(self):
        h = FiniteDissimilarity(SQUARED3)
        res = repair(h)
        fwd, bwd = res.certificate.moduli_fwd, res.certificate.moduli_bwd
        assert fwd.holds(h.values, res.d1.values)
        assert bwd.holds(res.d1.values, h.values)

    def test_smallest_dyadic_bound(self, rng):
        h = random_premetric(10, rng)
        res = repair(h)
        r_min = res.f.radii.radii[1]
        small = (h.values <= r_min) & ~np.eye(10, dtype=bool)
        eps = res.certificate.epsilon
        assert np.all(res.d1.values[small] <= res.f.step + eps)

    def test_refuted_modulus_raises(self):
        h = FiniteDissimilarity(SQUARED3)
        res = repair(h)
        fake = FiniteDissimilarity(np.where(np.eye(3), 0.0, 1e-3))
        with pytest.raises(InvariantError):
            certify_equivalence(h, fake, res.f, res.certificate.epsilon)

    def test_to_dict_keys(self):
        cert = repair(FiniteDissimilarity(SQUARED3)).certificate.to_dict()
        assert list(cert)[:6] == ["epsilon", "depth", "moduli_fwd", "moduli_bwd",
                                  "pre_lift_deficiency", "witness"]


def test_shortest_path_closure():
    d = shortest_path_closure(np.array(SQUARED3, dtype=float))
    assert d[0, 2] == 2.0
