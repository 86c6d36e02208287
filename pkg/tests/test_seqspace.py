from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from metricforge import seqspace as ss
from metricforge.errors import ValidationError

import brute

fractions = st.fractions(min_value=-4, max_value=4, max_denominator=8)


@st.composite
def families(draw):
    runs = []
    for _ in range(draw(st.integers(0, 3))):
        a0, a1 = draw(st.integers(0, 5)), draw(st.integers(0, 2))
        length0, length1 = draw(st.integers(-1, 4)), draw(st.integers(0, 2))
        runs.append(ss.Run((a0, a1), (a0 + length0, a1 + length1), draw(fractions)))
    return ss.VectorFamily(tuple(runs))


class TestNorms:
    def test_sup_witness_values(self):
        s, t = ss.partial_sum(1), ss.partial_sum(Fraction(1, 2))
        assert ss.norm_of_difference(s, 3, t, 5, None) == 0.5
        assert ss.norm_of_difference(s, 3, t, 3, None) == 0.5
        assert ss.norm_of_difference(s, 5, t, 3, None) == 1.0

    def test_disjoint_l2(self):
        s, t = ss.basis(2, 0), ss.basis(2, 1)
        assert ss.norm_of_difference(s, 7, t, 7, 2.0) == 2.0 ** 0.5

    def test_constant(self):
        s = ss.constant({0: 1, 3: "1/2"})
        assert ss.norm(s, 100, None) == 1.0
        assert ss.norm(s, 0, 1.0) == 1.5

    def test_empty(self):
        assert ss.norm(ss.VectorFamily(()), 4, 2.0) == 0.0

    def test_negative_coordinate(self):
        fam = ss.VectorFamily((ss.Run((0, -1), (0, 0), Fraction(1)),))
        with pytest.raises(ValidationError):
            ss.norm(fam, 3, None)

    @given(families(), families(), st.integers(0, 6), st.integers(0, 6),
           st.sampled_from([None, 1.0, 2.0, 3.0]))
    def test_matches_dense(self, s, t, n, m, p):
        dense = brute.subtract(s.vector(n), t.vector(m))
        got = ss.norm_of_difference(s, n, t, m, p)
        want = brute.dense_norm(dense, p)
        if p is None:
            assert got == want
        else:
            assert got == pytest.approx(want, rel=1e-12, abs=1e-15)

    @given(families(), families(), st.integers(0, 6), st.integers(0, 6))
    def test_symmetric(self, s, t, n, m):
        assert ss.norm_of_difference(s, n, t, m, None) == ss.norm_of_difference(t, m, s, n, None)


class TestFromDict:
    @pytest.mark.parametrize("data", [
        {"kind": "partial_sum", "coef": "1/2"},
        {"kind": "basis", "stride": 2, "offset": 1},
        {"kind": "constant", "coords": {"0": "1", "2": "-3/4"}},
        {"kind": "runs", "runs": [{"start": [0, 1], "end": [2, 1], "value": "2"}]},
    ])
    def test_kinds(self, data):
        fam = ss.family_from_dict(data)
        again = ss.family_from_dict(fam.to_dict())
        for n in range(4):
            assert fam.vector(n) == again.vector(n)

    def test_unknown(self):
        with pytest.raises(ValidationError):
            ss.family_from_dict({"kind": "wavelet"})
