"""Triangle-deficiency functions: exact tables, analytic oracles, axiom checks.

An oracle ``g`` is a symmetric, weakly increasing function on pairs of
non-negative reals with ``g(0, v) <= v``.  Besides evaluation, every oracle
answers two questions used by the radii construction:

* ``less(u, v, t)``: is ``g(u, v) < t``?  Exact for tables and for the
  ``plus``/``max`` tokens, binary64 otherwise.
* ``sup_below(c, t)``: ``sup{s <= 1 : g(s, c) < t}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import OracleError, ValidationError
from .space import FiniteDissimilarity

_ONE_BITS = np.float64(1.0).view(np.int64)


@dataclass(frozen=True)
class TDTable:
    """``table[i, j] = sup{h(x,z) : h(x,y) <= b[i], h(y,z) <= b[j]}``."""

    breakpoints: np.ndarray
    table: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        T = np.asarray(self.table, dtype=float)
        if b.ndim != 1 or b.size == 0 or b[0] != 0.0:
            raise ValidationError("breakpoints must be a non-empty 1-d array starting at 0")
        if np.any(np.diff(b) <= 0):
            raise ValidationError("breakpoints must be strictly increasing")
        if T.shape != (b.size, b.size):
            raise ValidationError(f"table shape {T.shape} does not match {b.size} breakpoints")
        if not np.array_equal(T, T.T):
            raise ValidationError("deficiency table must be symmetric")
        if np.any(np.diff(T, axis=0) < 0):
            raise ValidationError("deficiency table must be weakly increasing")
        if np.any(T[0] > b):
            j = int(np.argmax(T[0] > b))
            raise ValidationError(f"g(0, {b[j]!r}) = {T[0, j]!r} exceeds {b[j]!r}")
        b.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "table", T)

    def index(self, u) -> np.ndarray:
        """Index of the largest breakpoint ``<= u``."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValidationError("deficiency arguments must be non-negative")
        return np.searchsorted(self.breakpoints, u, side="right") - 1

    def to_dict(self) -> dict:
        return {
            "breakpoints": self.breakpoints.tolist(),
            "table": self.table.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TDTable":
        b = np.asarray(data["breakpoints"], dtype=float)
        T = np.asarray(data["table"], dtype=float).reshape(b.size, b.size)
        return cls(b, T)


def compute_td(h: FiniteDissimilarity) -> TDTable:
    """Exact deficiency table of ``h`` by enumeration of ordered triples."""
    b = np.concatenate(([0.0], h.positive_values()))
    rank = np.searchsorted(b, h.values)
    M = np.zeros((b.size, b.size))
    vals = h.values
    for y in range(h.n):
        rows = rank[:, y]
        cols = rank[y, :]
        np.maximum.at(M, (rows[:, None], cols[None, :]), vals)
    # sup over closed constraints h <= b[i]: prefix maxima in both indices
    M = np.maximum.accumulate(M, axis=0)
    M = np.maximum.accumulate(M, axis=1)
    return TDTable(b, M)


class TDOracle:
    """Queryable deficiency function ``g(u, v)``."""

    name: str = "oracle"

    def _eval(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if np.any(u < 0) or np.any(v < 0):
            raise ValidationError("deficiency arguments must be non-negative")
        u, v = np.broadcast_arrays(u, v)
        out = self._eval(u, v)
        bad = ((u == 0) & (out > v)) | ((v == 0) & (out > u))
        if bad.any():
            k = np.argwhere(bad)[0]
            raise OracleError(
                f"{self.name}: g({float(u[tuple(k)])!r}, {float(v[tuple(k)])!r}) = {float(out[tuple(k)])!r} "
                "violates g(0, v) <= v"
            )
        return out if out.ndim else float(out)

    def less(self, u, v, t) -> np.ndarray:
        return np.asarray(self(u, v)) < t

    def less_at(self, values: np.ndarray, ia, ib, it) -> np.ndarray:
        """``g(values[ia], values[ib]) < values[it]`` for index arrays into ``values``."""
        return self.less(values[ia], values[ib], values[it])

    def sup_below_at(self, values: np.ndarray, ic, it, iters: int = 64) -> np.ndarray:
        """``sup_below(values[ic], values[it])`` for index arrays into ``values``."""
        return self.sup_below(values[ic], values[it], iters)

    def step_starts(self, values: np.ndarray) -> np.ndarray:
        """Mask of sorted ``values`` where ``g(., v)`` may differ from the previous entry.

        Within a run of unmasked entries ``g(u, .)`` is constant, so a query
        against an increasing threshold only needs the first entry of the run.
        """
        return np.ones(np.shape(values), dtype=bool)

    def grid(self, us, vs) -> np.ndarray:
        """Matrix ``G[i, j] = g(us[i], vs[j])``."""
        return np.asarray(self(np.asarray(us)[:, None], np.asarray(vs)[None, :]))

    def sup_below(self, c, t, iters: int = 64) -> np.ndarray:
        """``sup{s <= 1 : g(s, c) < t}`` elementwise.

        Bisection runs over the ordered bit patterns of non-negative doubles,
        so ``iters = 64`` always closes the bracket to adjacent floats.  The
        result is the least double at which the predicate fails, i.e. the
        supremum rounded up to binary64 (the predicate set is open for upper
        semi-continuous ``g``).  If the predicate already fails at 0 the set
        is empty and 0 is returned.
        """
        c = np.atleast_1d(np.asarray(c, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c, t = np.broadcast_arrays(c, t)
        out = np.zeros(c.shape)
        at_one = self.less(np.ones(c.shape), c, t)
        out[at_one] = 1.0
        at_zero = self.less(np.zeros(c.shape), c, t)
        active = np.flatnonzero(~at_one & at_zero)
        lo = np.zeros(active.size, dtype=np.int64)
        hi = np.full(active.size, _ONE_BITS, dtype=np.int64)
        ca, ta = c.ravel()[active], t.ravel()[active]
        for _ in range(iters):
            open_ = hi - lo > 1
            if not open_.any():
                break
            mid = lo + (hi - lo) // 2
            ok = self.less(mid.view(np.float64), ca, ta)
            lo = np.where(open_ & ok, mid, lo)
            hi = np.where(open_ & ~ok, mid, hi)
        out.ravel()[active] = hi.view(np.float64)
        return out


class TableOracle(TDOracle):
    """Step-function oracle: ``g(u, v) = T`` at the largest breakpoints ``<= u, v``.

    Steps are closed on the left, so the function is already right-continuous
    and equals its own upper semi-continuous envelope.
    """

    def __init__(self, td: TDTable, name: str = "td"):
        self.td = td
        self.name = name

    def _eval(self, u, v):
        return self.td.table[self.td.index(u), self.td.index(v)]

    def less(self, u, v, t):
        return self(u, v) < np.asarray(t, dtype=float)

    def less_at(self, values, ia, ib, it):
        # locate each distinct value once instead of once per pair
        idx = self.td.index(values)
        return self.td.table[idx[ia], idx[ib]] < values[it]

    def step_starts(self, values):
        idx = self.td.index(values)
        out = np.ones(idx.shape, dtype=bool)
        out[1:] = idx[1:] != idx[:-1]
        return out

    def grid(self, us, vs):
        iu = self.td.index(us)
        iv = self.td.index(vs)
        return self.td.table[np.ix_(iu, iv)]

    def _column_keys(self):
        # columns of T are non-decreasing; with values replaced by their rank
        # and column j offset by j * (M + 1), the column-major table is sorted
        if not hasattr(self, "_keys"):
            T = self.td.table
            uniq, ranks = np.unique(T.T, return_inverse=True)
            width = uniq.size + 1
            keys = ranks.reshape(T.shape).astype(np.int64)
            keys += np.arange(T.shape[1], dtype=np.int64)[:, None] * width
            keys = keys.ravel()
            self._uniq, self._width, self._keys = uniq, width, keys
        return self._uniq, self._width, self._keys

    def _first_reaching(self, j: np.ndarray, t: np.ndarray) -> np.ndarray:
        """First row ``k`` with ``T[k, j] >= t`` (number of rows if none)."""
        uniq, width, keys = self._column_keys()
        nrows = self.td.table.shape[0]
        rt = np.searchsorted(uniq, t, side="left")
        pos = np.searchsorted(keys, j.astype(np.int64) * width + rt, side="left")
        return pos - j.astype(np.int64) * nrows

    def _sup_from_rows(self, k: np.ndarray) -> np.ndarray:
        # the predicate set is {s < b[k]}; its sup is b[k], capped at 1
        b = self.td.breakpoints
        out = np.where(k >= b.size, 1.0, b[np.minimum(k, b.size - 1)])
        return np.where(k == 0, 0.0, np.minimum(out, 1.0))

    def sup_below(self, c, t, iters: int = 64):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c, t = np.broadcast_arrays(c, t)
        k = self._first_reaching(self.td.index(c).ravel(), t.ravel())
        return self._sup_from_rows(k).reshape(c.shape)

    def sup_below_at(self, values, ic, it, iters: int = 64):
        idx = self.td.index(values)
        return self._sup_from_rows(self._first_reaching(idx[ic], values[it]))


class AnalyticOracle(TDOracle):
    """Caller-supplied closed form, trusted after a grid spot-check.

    ``fn`` must accept numpy arrays.  ``exact_less`` may supply an exact
    strict comparison ``g(u, v) < t``; otherwise binary64 evaluation is used.
    The function is assumed continuous, so it is its own envelope.
    """

    def __init__(self, fn: Callable, name: str = "analytic",
                 exact_less: Callable | None = None, span: float = 2.0):
        self.fn = fn
        self.name = name
        self._exact_less = exact_less
        self.span = span
        spot_check(self, span)

    def _eval(self, u, v):
        return np.asarray(self.fn(u, v), dtype=float)

    def less(self, u, v, t):
        if self._exact_less is not None:
            u, v, t = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float),
                                          np.asarray(t, float))
            self(u, v)  # axiom assertion at query time
            return self._exact_less(u, v, t)
        return super().less(u, v, t)


def spot_check(g: TDOracle, span: float = 2.0, size: int = 32) -> None:
    """Reject oracles failing symmetry, monotonicity or ``g(0, v) <= v`` on a grid."""
    pts = np.unique(np.concatenate((
        [0.0],
        span * 2.0 ** -np.arange(size // 2, 0, -1),
        np.linspace(0.0, span, size - size // 2),
    )))
    G = g.grid(pts, pts)
    if not np.array_equal(G, G.T):
        i, j = np.argwhere(G != G.T)[0]
        raise OracleError(f"{g.name}: not symmetric at ({float(pts[i])!r}, {float(pts[j])!r})")
    if np.any(np.diff(G, axis=0) < 0):
        i, j = np.argwhere(np.diff(G, axis=0) < 0)[0]
        raise OracleError(f"{g.name}: decreasing in u at ({float(pts[i])!r}, {float(pts[j])!r})")


def _two_sum_less(u, v, t):
    s = u + v
    bb = s - u
    err = (u - (s - bb)) + (v - bb)
    return (s < t) | ((s == t) & (err < 0))


def _sqplus(u, v):
    return u + v + 2.0 * np.sqrt(u * v)


ORACLE_TOKENS = ("plus", "sqplus", "max")


def oracle_from_token(token: str) -> AnalyticOracle:
    """Named analytic oracles: ``plus`` (u+v), ``sqplus`` ((√u+√v)²), ``max``."""
    if token == "plus":
        return AnalyticOracle(np.add, "plus", exact_less=_two_sum_less)
    if token == "sqplus":
        return AnalyticOracle(_sqplus, "sqplus")
    if token == "max":
        return AnalyticOracle(np.maximum, "max", exact_less=lambda u, v, t: np.maximum(u, v) < t)
    raise ValidationError(f"unknown oracle token {token!r}; expected one of {ORACLE_TOKENS}")


def usc_envelope(g: TDOracle) -> TDOracle:
    """Upper semi-continuous envelope ``inf{g(u', v') : u' > u, v' > v}``.

    Table oracles use left-closed steps, so the right limit at ``(u, v)`` is
    the step value there and the table is returned unchanged.  Analytic
    oracles are continuous by contract.  Both are spot-checked first.
    """
    if isinstance(g, TableOracle):
        return TableOracle(g.td, name=f"usc({g.name})")
    spot_check(g, getattr(g, "span", 2.0))
    return g


@dataclass(frozen=True)
class TDCheck:
    ok: bool
    failure: tuple[float, float] | None
    witnesses: tuple[tuple[float, float, float], ...]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "failure": list(self.failure) if self.failure else None,
            "witnesses": [list(w) for w in self.witnesses],
        }


def is_td_function(g: TDOracle, t_grid, delta_floor: float = 2.0 ** -20) -> TDCheck:
    """Search ``delta`` in ``{t * 2**-k}`` with ``g(delta, v + delta) < t`` for all grid ``v < t``."""
    ts = sorted(float(t) for t in t_grid)
    if any(not (t > 0) for t in ts):
        raise ValidationError("t_grid must be strictly positive")
    if not delta_floor > 0:
        raise ValidationError("delta_floor must be positive")
    vs = [0.0] + ts
    witnesses = []
    for t in ts:
        kmax = max(1, math.ceil(math.log2(t / delta_floor)))
        deltas = t * 2.0 ** -np.arange(1, kmax + 1)
        for v in vs:
            if v >= t:
                break
            ok = g.less(deltas, v + deltas, t)
            if not ok.any():
                return TDCheck(False, (v, t), tuple(witnesses))
            witnesses.append((v, t, float(deltas[int(np.argmax(ok))])))
    return TDCheck(True, None, tuple(witnesses))
