from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metricforge.correction import (CorrectionFn, DyadicRadii, _violations_in_rows, build_radii,
                                    check_radii, eval_correction, verify_correction)
from metricforge.deficiency import TableOracle, TDTable, compute_td, oracle_from_token
from metricforge.errors import ConstructionError, ValidationError
from metricforge.space import random_premetric

import brute
from test_space import premetrics

TOKENS = ["plus", "max", "sqplus"]


class TestHandValues:
    def test_plus_depth_one(self):
        r = build_radii(oracle_from_token("plus"), 1)
        assert r.radii.tolist() == [0.0, 0.25, 1.0]

    def test_plus_depth_two(self):
        r = build_radii(oracle_from_token("plus"), 2)
        assert r[Fraction(1)] == 1.0
        assert r[Fraction(1, 2)] == 0.25
        assert r[Fraction(3, 4)] == 0.5
        assert r[Fraction(1, 4)] == 0.0625

    @pytest.mark.parametrize("token", TOKENS)
    def test_half_condition(self, token):
        g = oracle_from_token(token)
        r = build_radii(g, 6)
        half = r[Fraction(1, 2)]
        assert g(half, half) < r[Fraction(1)] == 1.0

    def test_eval(self):
        f = CorrectionFn(build_radii(oracle_from_token("plus"), 2))
        assert eval_correction(f, 0.0) == 0.0
        assert eval_correction(f, 2.0) == 1.0
        assert eval_correction(f, 0.3) == 0.5
        with pytest.raises(ValidationError):
            eval_correction(f, -1e-9)


class TestInvariants:
    @pytest.mark.parametrize("token", TOKENS)
    @pytest.mark.parametrize("depth", [1, 3, 6, 8])
    def test_analytic(self, token, depth):
        g = oracle_from_token(token)
        assert check_radii(build_radii(g, depth), g) == []

    @given(premetrics(max_n=7), st.integers(1, 7))
    def test_tables(self, h, depth):
        g = TableOracle(compute_td(h))
        r = build_radii(g, depth)
        assert check_radii(r, g) == []
        assert brute.radii_pair_failures(g, r.radii) == set()

    @given(premetrics(max_n=6), st.lists(st.floats(0.01, 1.0), min_size=15, max_size=15))
    def test_step_reduction_sees_every_failing_row(self, h, raw):
        # arbitrary increasing radii at depth 4, most of which violate (b)
        g = TableOracle(compute_td(h))
        r = [0.0] + sorted(set(raw))
        r = (r + [1.0] * 16)[:16] + [1.0]
        r = np.maximum.accumulate(np.array(r))
        got = {a for a, _ in _violations_in_rows(g, r, 1, range(1, 16))}
        assert got == brute.radii_pair_failures(g, r)

    def test_truncation_keeps_invariants(self):
        g = oracle_from_token("plus")
        r = build_radii(g, 6)
        small = r.truncate(3)
        assert small.depth == 3
        assert check_radii(small, g) == []
        assert small[Fraction(3, 8)] == r[Fraction(3, 8)]

    def test_check_radii_reports(self):
        g = oracle_from_token("plus")
        bad = DyadicRadii(1, [0.0, 0.6, 1.0])
        out = check_radii(bad, g)
        assert any(s.startswith("(a)") for s in out)
        assert any("g(r_1/2, r_1/2)" in s for s in out)

    def test_round_trip(self):
        r = build_radii(oracle_from_token("sqplus"), 5)
        again = DyadicRadii.from_dict(r.to_dict())
        assert np.array_equal(again.radii, r.radii)
        assert r.to_dict()["radii"][0] == [1, 5, r.radii[1]]

    def test_depth_limits(self):
        with pytest.raises(ValidationError):
            build_radii(oracle_from_token("plus"), 21)

    def test_slack_floor(self):
        # a jump right after zero squeezes every sup to 2**-30
        eps = 2.0 ** -30
        g = TableOracle(TDTable([0.0, eps], [[0.0, eps], [eps, 1.0]]))
        with pytest.raises(ConstructionError, match="fell below"):
            build_radii(g, 8, slack_floor=2.0 ** -35)

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        g = TableOracle(compute_td(random_premetric(15, rng)))
        a = build_radii(g, 8)
        b = build_radii(g, 8)
        assert a.radii.tobytes() == b.radii.tobytes()


class TestCorrectionFunction:
    @given(st.lists(st.floats(0, 3), min_size=1, max_size=20))
    def test_matches_linear_scan(self, ts):
        r = build_radii(oracle_from_token("plus"), 5)
        f = CorrectionFn(r)
        got = f(np.array(ts))
        want = [brute.correction(r.radii, t) for t in ts]
        assert got.tolist() == want

    @given(st.floats(0, 3), st.floats(0, 3))
    def test_monotone(self, a, b):
        f = CorrectionFn(build_radii(oracle_from_token("max"), 6))
        lo, hi = sorted((a, b))
        assert f(lo) <= f(hi)

    def test_zero_exactly_at_small_arguments(self):
        r = build_radii(oracle_from_token("plus"), 4)
        f = CorrectionFn(r)
        r_min = r.radii[1]
        assert f(r_min) == 0.0
        assert f(np.nextafter(r_min, 2)) == 1 / 16

    def test_upper(self):
        f = CorrectionFn(build_radii(oracle_from_token("plus"), 2))
        assert f.upper(0.3) == 0.75
        assert f.upper(5.0) == 1.0


class TestVerify:
    @pytest.mark.parametrize("token", TOKENS)
    @pytest.mark.parametrize("depth", [2, 4, 8])
    def test_bound(self, token, depth):
        g = oracle_from_token(token)
        f = CorrectionFn(build_radii(g, depth))
        rep = verify_correction(f, g, np.linspace(0, 1, 64))
        assert rep.ok
        assert rep.worst_excess <= 2.0 ** -(depth - 1)

    def test_sqrt_is_exact_for_sqplus(self):
        g = oracle_from_token("sqplus")
        u = np.linspace(0, 1, 64)
        excess = np.sqrt(g.grid(u, u)) - np.sqrt(u)[:, None] - np.sqrt(u)[None, :]
        assert excess.max() <= 1e-15

    def test_zero_row(self):
        g = oracle_from_token("plus")
        f = CorrectionFn(build_radii(g, 6))
        v = np.linspace(0, 1, 50)
        assert np.all(f(g(np.zeros_like(v), v)) <= f(v))

    @given(premetrics(max_n=6), st.integers(2, 6))
    def test_tables_bound(self, h, depth):
        g = TableOracle(compute_td(h))
        f = CorrectionFn(build_radii(g, depth))
        grid = np.concatenate((g.td.breakpoints, np.linspace(0, 1, 16)))
        assert verify_correction(f, g, grid).worst_excess <= 2.0 ** -(depth - 1)
