"""Dyadic Urysohn construction of a correction function for a deficiency oracle.

Radii ``r_q`` are chosen for dyadic ``q = k / 2**n`` in ``(0, 1]`` so that

    (a)  0 < r_q <= q
    (b)  q < q'  implies  r_q < r_q'  and  g(r_q, r_{q'-q}) < r_q'

and the correction function is ``f(t) = sup{q : r_q < t}`` (``sup {} = 0``).
Radii are stored by integer numerator at the finest level, ``r[k]`` for
``q = k / 2**depth``, with ``r[0] = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .deficiency import TDOracle
from .errors import ConstructionError, ValidationError

MAX_DEPTH = 20


@dataclass(frozen=True)
class DyadicRadii:
    depth: int
    radii: np.ndarray  # length 2**depth + 1, radii[0] == 0

    def __post_init__(self):
        r = np.array(self.radii, dtype=float)
        if r.shape != ((1 << self.depth) + 1,):
            raise ValidationError(f"expected {(1 << self.depth) + 1} radii for depth {self.depth}")
        r.setflags(write=False)
        object.__setattr__(self, "radii", r)

    @property
    def scale(self) -> int:
        return 1 << self.depth

    def __getitem__(self, q) -> float:
        q = Fraction(q)
        k = q * self.scale
        if k.denominator != 1 or not 0 <= k <= self.scale:
            raise KeyError(q)
        return float(self.radii[int(k)])

    def dyadics(self) -> np.ndarray:
        return np.arange(1, self.scale + 1) / self.scale

    def truncate(self, depth: int) -> "DyadicRadii":
        """Radii of the first ``depth`` levels."""
        step = 1 << (self.depth - depth)
        return DyadicRadii(depth, self.radii[::step])

    def to_dict(self) -> dict:
        entries = []
        for k in range(1, self.scale + 1):
            q = Fraction(k, self.scale)
            n = q.denominator.bit_length() - 1
            entries.append([q.numerator, n, float(self.radii[k])])
        return {"depth": self.depth, "radii": entries}

    @classmethod
    def from_dict(cls, data: dict) -> "DyadicRadii":
        depth = int(data["depth"])
        r = np.zeros((1 << depth) + 1)
        for k, n, val in data["radii"]:
            r[(int(k) << depth) >> int(n)] = float(val)
        return cls(depth, r)


def _ragged(reps: np.ndarray, limits: np.ndarray):
    """For each limit, the entries of sorted ``reps`` not above it.

    Returns ``(owner, value, first, counts)``: owner positions into
    ``limits``, the flattened entries, and each owner's block start and size.
    """
    counts = np.searchsorted(reps, limits, side="right")
    first = np.cumsum(counts) - counts
    owner = np.repeat(np.arange(limits.size), counts)
    value = reps[np.arange(counts.sum()) - np.repeat(first, counts)]
    return owner, value, first, counts


def _representatives(g: TDOracle, r: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Entries of ``grid`` that start a step of ``g`` in ``r[grid]``."""
    return grid[g.step_starts(r[grid])] if grid.size else grid


def _violations_in_rows(g: TDOracle, r: np.ndarray, step: int, rows,
                        chunk: int = 1 << 22) -> list[tuple[int, int]]:
    """Pairs ``(a, c)`` at spacing ``step`` with ``g(r_a, r_c) >= r_{a+c}``.

    Only the first ``c`` of each step of ``g`` is tested: the threshold
    ``r_{a+c}`` grows with ``c``, so it fails whenever any ``c`` in the step does.
    """
    top = r.size - 1
    rows = np.asarray(list(rows), dtype=np.int64)
    rows = rows[rows + step <= top]
    reps = _representatives(g, r, np.arange(step, top + 1, step, dtype=np.int64))
    bad = []
    start = 0
    while start < rows.size:
        # take rows until the batch holds about ``chunk`` pairs
        counts = np.searchsorted(reps, top - rows[start:], side="right")
        stop = start + max(1, int(np.searchsorted(np.cumsum(counts), chunk, side="right")))
        own, c, _, _ = _ragged(reps, top - rows[start:stop])
        a = rows[start:stop][own]
        ok = g.less_at(r, a, c, a + c)
        bad.extend(zip(a[~ok].tolist(), c[~ok].tolist()))
        start = stop
    return bad


def check_radii(radii: DyadicRadii, g: TDOracle) -> list[str]:
    """Exhaustive check of conditions (a) and (b); returns human-readable failures."""
    r = radii.radii
    scale = radii.scale
    q = np.arange(scale + 1) / scale
    out = []
    if r[scale] != 1.0:
        out.append(f"r_1 = {r[scale]!r}, expected 1")
    bad_a = np.flatnonzero((r[1:] <= 0) | (r[1:] > q[1:])) + 1
    out.extend(f"(a) fails at q={Fraction(int(k), scale)}: r={r[k]!r}" for k in bad_a)
    bad_mono = np.flatnonzero(np.diff(r) <= 0)
    out.extend(f"(b) monotonicity fails at q={Fraction(int(k) + 1, scale)}" for k in bad_mono)
    for a, c in _violations_in_rows(g, r, 1, range(1, scale)):
        out.append(f"(b) g(r_{Fraction(a, scale)}, r_{Fraction(c, scale)}) >= r_{Fraction(a + c, scale)}")
    return out


def build_radii(g: TDOracle, depth: int, bisect_iters: int = 64,
                slack_floor: float = 2.0 ** -90, max_retries: int = 64) -> DyadicRadii:
    """Level-by-level choice of radii down to spacing ``2**-depth``.

    Within a level, every ``q >= 3/2**(n+1)`` uses only radii from the
    previous level; ``q = 1/2**(n+1)`` comes last because it refers to the
    radii just chosen.  Each level is then re-verified; a radius involved in
    a floating-point violation of (b) is halved towards its left neighbour.
    """
    if not 0 <= depth <= MAX_DEPTH:
        raise ValidationError(f"depth must be in [0, {MAX_DEPTH}], got {depth}")
    scale = 1 << depth
    r = np.zeros(scale + 1)
    r[scale] = 1.0
    for level in range(1, depth + 1):
        s = scale >> level  # numerator spacing of the new level
        odd = np.arange(scale - s, 2 * s, -2 * s)  # descending, q >= 3/2**level

        # sup_below is non-increasing in its threshold and r[km + kq] grows
        # with kq, so each step of g needs only its first kq
        if odd.size:
            km = odd - s
            reps = _representatives(g, r, np.arange(2 * s, scale + 1, 2 * s, dtype=np.int64))
            own, kq, first, counts = _ragged(reps, scale - km)
            sups = g.sup_below_at(r, kq, km[own] + kq, bisect_iters)
            smin = np.ones(odd.size)
            has = counts > 0
            smin[has] = np.minimum.reduceat(sups, first[has])
            s_q = np.minimum(np.minimum(odd / scale, r[odd + s]), smin)
            r[odd] = (r[odd - s] + s_q) / 2.0

        # q = 1 / 2**level
        kq = _representatives(g, r, np.arange(2 * s, scale - s + 1, s, dtype=np.int64))
        s0 = g.sup_below(r[2 * s] / 2.0, r[2 * s], bisect_iters)[0]
        parts = [s / scale, r[2 * s], s0]
        if kq.size:
            parts.append(g.sup_below_at(r, kq, s + kq, bisect_iters).min())
        r[s] = min(parts) / 2.0

        new = np.arange(s, scale, 2 * s)
        for _ in range(max_retries + 1):
            low = new[r[new] < slack_floor]
            if low.size:
                raise ConstructionError(
                    f"radius for q={Fraction(int(low[0]), scale)} fell below {slack_floor!r}"
                )
            mono = new[(r[new] <= r[new - s]) | (r[new] >= r[new + s])]
            if mono.size:
                raise ConstructionError(f"radii not strictly increasing at q={Fraction(int(mono[0]), scale)}")
            # rows of new radii cover every pair with a new member (g is symmetric)
            bad = _violations_in_rows(g, r, s, new)
            if not bad:
                break
            for k in sorted({a for a, _ in bad}):
                r[k] = (r[k - s] + r[k]) / 2.0
        else:
            a, c = bad[0]
            raise ConstructionError(
                f"retry budget exhausted repairing q={Fraction(a, scale)} against "
                f"q'={Fraction(a + c, scale)}"
            )
    return DyadicRadii(depth, r)


class CorrectionFn:
    """Step function ``f(t) = max{q : r_q < t}`` over the stored dyadics."""

    def __init__(self, radii: DyadicRadii):
        self.radii = radii
        self._r = radii.radii[1:]

    @property
    def depth(self) -> int:
        return self.radii.depth

    @property
    def step(self) -> float:
        return 1.0 / self.radii.scale

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValidationError("correction function is defined on [0, inf)")
        out = np.searchsorted(self._r, t, side="left") / self.radii.scale
        return out if out.ndim else float(out)

    def upper(self, t):
        """``inf{q : r_q > t}`` with ``inf {} = 1``."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self._r, t, side="right") + 1
        out = np.minimum(k, self.radii.scale) / self.radii.scale
        return out if out.ndim else float(out)


def eval_correction(f: CorrectionFn, t: float) -> float:
    if t < 0:
        raise ValidationError(f"cannot evaluate correction at negative t={t!r}")
    return float(f(t))


@dataclass(frozen=True)
class CorrectionReport:
    depth: int
    bound: float
    worst_excess: float
    worst_pair: tuple[float, float] | None
    zero_ok: bool

    @property
    def ok(self) -> bool:
        return self.worst_excess <= self.bound and self.zero_ok

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "bound": self.bound,
            "worst_excess": self.worst_excess,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "zero_ok": self.zero_ok,
            "ok": self.ok,
        }


def verify_correction(f: CorrectionFn, g: TDOracle, grid) -> CorrectionReport:
    """Worst excess of ``f(g(u, v)) - f(u) - f(v)`` over all grid pairs.

    At finite depth the excess is at most ``2**-(depth-1)``.  Also checks
    that ``f(t) = 0`` only for ``t <= r`` at the smallest dyadic.
    """
    pts = np.asarray(sorted(float(x) for x in grid))
    fu = f(pts)
    G = g.grid(pts, pts)
    E = f(G) - fu[:, None] - fu[None, :]
    k = int(np.argmax(E))
    i, j = np.unravel_index(k, E.shape)
    worst = float(E[i, j])
    r_min = float(f.radii.radii[1])
    zero_ok = bool(np.all(pts[fu == 0] <= r_min))
    return CorrectionReport(
        depth=f.depth,
        bound=2.0 * f.step,
        worst_excess=worst,
        worst_pair=(float(pts[i]), float(pts[j])),
        zero_ok=zero_ok,
    )
