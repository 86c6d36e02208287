"""Invariant pre-metrics on group models from families of bump functions.

Given a group with a left-invariant metric ``d`` bounded by 1, a bump family
is a sequence of radii ``1 = r_0 > r_1 > ...`` with ``r_n <= 2**-n`` and
functions ``f_n`` on the group with

    f_n = 0 on the open ball B(e, r_{n+1}),   f_n = 1 off B(e, r_n),
    f_n(g) = f_n(g^-1).

The weighted sum ``h(x, y) = sum_n f_n(x^-1 y) / 2**(n+1)`` is a left-invariant
pre-metric uniformly equivalent to ``d``; ``end_to_end`` pushes it through
``repair`` and certifies the result.  Everything on the group side is exact
rational arithmetic.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .errors import InvariantError, ValidationError
from .repair import RepairResult, repair
from .space import FiniteDissimilarity, Modulus, check_triangle
from .stability import stability_defect, table

EXHAUSTIVE_LIMIT = 64


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


class FiniteGroup:
    """Finite group from a Cayley table, with ``length(g) = d(e, g)``.

    Elements are the integers ``0..n-1``.  ``metric`` is the full distance
    table; it must be left-invariant, so only its identity row is stored.
    """

    finite = True

    def __init__(self, cayley, metric, labels: Sequence[str] | None = None,
                 name: str = "finite", sample_size: int = 4096, seed: int = 0):
        T = np.asarray(cayley)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] == 0:
            raise ValidationError("Cayley table must be a non-empty square array")
        if not np.issubdtype(T.dtype, np.integer):
            raise ValidationError("Cayley table entries must be integers")
        n = T.shape[0]
        if T.min() < 0 or T.max() >= n:
            raise ValidationError("Cayley table entry outside 0..n-1")
        self.table = T.astype(np.int64)
        self.table.setflags(write=False)
        self.n = n
        self.name = name
        self.labels = list(labels) if labels is not None else [str(i) for i in range(n)]
        self._check_axioms(sample_size, seed)
        D = [[_frac(v) for v in row] for row in metric]
        if len(D) != n or any(len(row) != n for row in D):
            raise ValidationError(f"metric table must be {n}x{n}")
        self._lengths = tuple(D[self.identity])
        self._check_metric(D, sample_size, seed)

    def _check_axioms(self, sample_size: int, seed: int) -> None:
        T, n = self.table, self.n
        ids = [e for e in range(n) if np.array_equal(T[e], np.arange(n))
               and np.array_equal(T[:, e], np.arange(n))]
        if not ids:
            raise ValidationError("Cayley table has no two-sided identity")
        self.identity = ids[0]
        inv = np.full(n, -1)
        for x in range(n):
            hits = np.flatnonzero((T[x] == self.identity) & (T[:, x] == self.identity))
            if hits.size != 1:
                raise ValidationError(f"element {self.labels[x]} has no unique inverse")
            inv[x] = hits[0]
        self._inv = inv
        if n <= EXHAUSTIVE_LIMIT:
            left = T[T[:, :, None], np.arange(n)[None, None, :]]   # (xy)z
            right = T[np.arange(n)[:, None, None], T[None, :, :]]  # x(yz)
            bad = np.argwhere(left != right)
            if bad.size:
                x, y, z = bad[0]
                raise ValidationError(f"associativity fails at ({x}, {y}, {z})")
        else:
            rng = np.random.default_rng(seed)
            x, y, z = rng.integers(0, n, size=(3, sample_size))
            bad = np.flatnonzero(T[T[x, y], z] != T[x, T[y, z]])
            if bad.size:
                i = bad[0]
                raise ValidationError(f"associativity fails at ({x[i]}, {y[i]}, {z[i]})")

    def _check_metric(self, D, sample_size: int, seed: int) -> None:
        n, T = self.n, self.table
        for x in range(n):
            if D[x][x] != 0:
                raise ValidationError(f"metric has nonzero diagonal at {self.labels[x]}")
            for y in range(n):
                if D[x][y] != D[y][x]:
                    raise ValidationError(f"metric not symmetric at ({x}, {y})")
                if x != y and D[x][y] <= 0:
                    raise ValidationError(f"metric not positive at ({x}, {y})")
        if n <= EXHAUSTIVE_LIMIT:
            triples = product(range(n), repeat=3)
        else:
            rng = random.Random(seed)
            triples = ((rng.randrange(n), rng.randrange(n), rng.randrange(n)) for _ in range(sample_size))
        for g, x, y in triples:
            if D[T[g, x]][T[g, y]] != D[x][y]:
                raise ValidationError(f"metric not left-invariant at g={g}, x={x}, y={y}")
        for g in range(n):
            if self._lengths[g] != self._lengths[self._inv[g]]:
                raise ValidationError(f"d(e, g) != d(e, g^-1) at g={self.labels[g]}")

    def op(self, x: int, y: int) -> int:
        return int(self.table[x, y])

    def inv(self, x: int) -> int:
        return int(self._inv[x])

    def length(self, g: int) -> Fraction:
        return self._lengths[g]

    def elements(self) -> list[int]:
        return list(range(self.n))

    def index(self, x) -> int:
        if not (isinstance(x, (int, np.integer)) and 0 <= x < self.n):
            raise ValidationError(f"{x!r} is not an element of {self.name}")
        return int(x)

    def sequence(self, seq) -> Callable[[np.ndarray], list]:
        return _sequence(self, seq)

    def describe(self) -> dict:
        return {"kind": "finite", "name": self.name, "order": self.n}


def cyclic_group(n: int) -> FiniteGroup:
    """``Z_n`` with ``d(x, y) = min(|x-y|, n-|x-y|) / (n // 2)``."""
    if n < 1:
        raise ValidationError("group order must be positive")
    T = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n
    half = max(n // 2, 1)
    D = [[Fraction(min(abs(x - y), n - abs(x - y)), half) for y in range(n)] for x in range(n)]
    return FiniteGroup(T, D, name=f"Z{n}")


class CircleGroup:
    """``R/Z`` on rationals, with arc distance ``min(|x-y|, 1-|x-y|)``.

    Exhaustive checks run on the finite subgroup ``{k / denominator_cap}``.
    """

    finite = False

    def __init__(self, denominator_cap: int = 64):
        if denominator_cap < 1:
            raise ValidationError("denominator_cap must be positive")
        self.cap = int(denominator_cap)
        self.identity = Fraction(0)
        self.name = f"circle/{self.cap}"

    def op(self, x, y) -> Fraction:
        return (_frac(x) + _frac(y)) % 1

    def inv(self, x) -> Fraction:
        return (-_frac(x)) % 1

    def length(self, g) -> Fraction:
        g = _frac(g) % 1
        return min(g, 1 - g)

    def elements(self) -> list[Fraction]:
        return [Fraction(k, self.cap) for k in range(self.cap)]

    def index(self, x) -> int:
        k = _frac(x) % 1 * self.cap
        if k.denominator != 1:
            raise ValidationError(f"{x} is outside the sampled subgroup 1/{self.cap} Z")
        return int(k)

    def dense_sample(self) -> list[Fraction]:
        return sorted({Fraction(k, q) for q in range(1, self.cap + 1) for k in range(q)})

    def sequence(self, seq) -> Callable[[np.ndarray], list]:
        return _sequence(self, seq)

    @property
    def labels(self) -> list[str]:
        return [str(x) for x in self.elements()]

    def describe(self) -> dict:
        return {"kind": "circle", "denominator_cap": self.cap}


def _sequence(group, seq) -> Callable[[np.ndarray], list]:
    """Index rule from a callable or an eventually constant list of elements."""
    if callable(seq):
        return lambda ks: [seq(int(k)) for k in np.ravel(ks)]
    items = list(seq)
    if not items:
        raise ValidationError("element sequence must be non-empty")
    if group.finite:
        items = [group.index(x) for x in items]
    else:
        items = [_frac(x) % 1 for x in items]
    last = len(items) - 1
    return lambda ks: [items[min(int(k), last)] for k in np.ravel(ks)]


def model_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "finite":
        if "cayley" not in data or "metric" not in data:
            raise ValidationError("finite model needs 'cayley' and 'metric'")
        return FiniteGroup(data["cayley"], data["metric"], data.get("labels"),
                           data.get("name", "finite"))
    if kind == "cyclic":
        return cyclic_group(int(data["order"]))
    if kind == "circle":
        return CircleGroup(int(data.get("denominator_cap", 64)))
    raise ValidationError(f"unknown group model kind {kind!r}")


# ---------------------------------------------------------------------------
# bump family and weighted sum


def _clamp(x: Fraction) -> Fraction:
    return min(max(x, Fraction(0)), Fraction(1))


@dataclass(frozen=True)
class BumpFamily:
    """Radii ``r_0..r_L`` (exact) and the bump rule for levels ``0..L-1``.

    ``truncated`` is true when a finite group ran out of small distances:
    every later level would equal 1 off the identity.
    """

    group: object
    radii: tuple[Fraction, ...]
    truncated: bool = False

    @property
    def levels(self) -> int:
        return len(self.radii) - 1

    def bump(self, n: int, g) -> Fraction:
        G = self.group
        hi, lo = self.radii[n], self.radii[n + 1]

        def ramp(x):
            return _clamp((G.length(x) - lo) / (hi - lo))

        return min(ramp(g), ramp(G.inv(g)))

    def values(self, n: int, elements=None) -> list[Fraction]:
        elements = self.group.elements() if elements is None else elements
        return [self.bump(n, g) for g in elements]

    def check(self, elements=None) -> list[str]:
        """Failures of the bump conditions on the given elements."""
        G = self.group
        elements = G.elements() if elements is None else elements
        out = []
        if self.radii[0] != 1:
            out.append(f"r_0 = {self.radii[0]}")
        for n in range(self.levels):
            r, r_next = self.radii[n], self.radii[n + 1]
            if not 0 < r_next < r:
                out.append(f"radii not strictly decreasing at level {n}")
            if r > Fraction(1, 2 ** n):
                out.append(f"r_{n} = {r} exceeds 2^-{n}")
            vals = {g: self.bump(n, g) for g in elements}
            for g, v in vals.items():
                ln = G.length(g)
                if ln < r_next and v != 0:
                    out.append(f"f_{n}({g}) = {v} inside B(e, r_{n + 1})")
                if ln >= r and v != 1:
                    out.append(f"f_{n}({g}) = {v} outside B(e, r_{n})")
                gi = G.inv(g)
                if v != (vals[gi] if gi in vals else self.bump(n, gi)):
                    out.append(f"f_{n} not symmetric at {g}")
        return out

    def to_dict(self) -> dict:
        return {"radii": [str(r) for r in self.radii], "truncated": self.truncated}


def build_bump_family(G, levels: int) -> BumpFamily:
    """Radii ``r_0 = 1`` and ``r_{n+1} = min(2**-(n+1), r_n / 2, s_n / 2)``.

    ``s_n`` is the largest positive distance to the identity below ``r_n``
    (finite groups only).  A finite group whose ball ``B(e, r_n)`` is
    already trivial stops at that level.
    """
    if levels < 0:
        raise ValidationError("levels must be non-negative")
    elements = G.elements()
    lengths = sorted({G.length(g) for g in elements})
    if lengths[-1] > 1:
        raise ValidationError("base metric exceeds 1; apply bounded_transform first")
    radii = [Fraction(1)]
    truncated = False
    for n in range(levels):
        r = radii[-1]
        cand = [Fraction(1, 2 ** (n + 1)), r / 2]
        if G.finite:
            below = [x for x in lengths if 0 < x < r]
            if below:
                cand.append(below[-1] / 2)
            else:
                truncated = n + 1 < levels
        radii.append(min(cand))
        if truncated:
            break
    family = BumpFamily(G, tuple(radii), truncated)
    sample = elements if G.finite else G.dense_sample()
    failures = family.check(sample)
    if failures:
        raise InvariantError(f"bump family fails: {failures[0]}")
    return family


@dataclass(frozen=True)
class WapSum:
    """``h(x, y) = sum_{n<L} f_n(x^-1 y) / 2**(n+1)`` plus any exact tail.

    For a truncated finite family the remaining levels are 1 off the
    identity, so their total ``2**-L`` is added exactly and ``tail_bound``
    is 0.  Otherwise the omitted tail is at most ``tail_bound = 2**-L``.
    """

    family: BumpFamily

    @property
    def tail_bound(self) -> Fraction:
        return Fraction(0) if self.family.truncated else Fraction(1, 2 ** self.family.levels)

    def length(self, g) -> Fraction:
        G, fam = self.family.group, self.family
        if g == G.identity:
            return Fraction(0)
        total = sum((fam.bump(n, g) / 2 ** (n + 1) for n in range(fam.levels)), Fraction(0))
        if fam.truncated:
            total += Fraction(1, 2 ** fam.levels)
        return total

    def __call__(self, x, y) -> Fraction:
        G = self.family.group
        return self.length(G.op(G.inv(x), y))

    def table(self, elements=None) -> list[list[Fraction]]:
        G = self.family.group
        elements = G.elements() if elements is None else elements
        cache: dict = {}
        rows = []
        for x in elements:
            xi = G.inv(x)
            row = []
            for y in elements:
                g = G.op(xi, y)
                if g not in cache:
                    cache[g] = self.length(g)
                row.append(cache[g])
            rows.append(row)
        return rows

    def dissimilarity(self) -> FiniteDissimilarity:
        G = self.family.group
        T = np.array([[float(v) for v in row] for row in self.table()])
        if T.shape[0] > 1 and np.any(T[~np.eye(T.shape[0], dtype=bool)] <= 0):
            raise ValidationError("weighted bump sum vanishes off the diagonal; raise the number of levels")
        return FiniteDissimilarity(T, G.labels)


def wap_sum(G, family: BumpFamily) -> WapSum:
    if family.group is not G:
        raise ValidationError("bump family was built for a different group")
    return WapSum(family)


def distance_bound_failures(G, h: WapSum, elements=None) -> list[str]:
    """Refutations of ``h > 2**-n => d >= r_n`` and its converse ``d >= r_n => h >= 2**-(n+1)``."""
    fam = h.family
    elements = G.elements() if elements is None else elements
    out = []
    for g in elements:
        hv, dv = h.length(g), G.length(g)
        for n in range(fam.levels):
            if hv > Fraction(1, 2 ** n) and dv < fam.radii[n]:
                out.append(f"h = {hv} > 2^-{n} but d = {dv} < r_{n} at {g}")
            if dv >= fam.radii[n] and hv < Fraction(1, 2 ** (n + 1)):
                out.append(f"d = {dv} >= r_{n} but h = {hv} < 2^-{n + 1} at {g}")
    return out


# ---------------------------------------------------------------------------
# end-to-end pipeline


@dataclass(frozen=True)
class GroupCertificate:
    model: dict
    levels: int
    radii: tuple[Fraction, ...]
    truncated: bool
    tail_bound: Fraction
    repair: dict
    invariance_residual: float
    triangle_violations: int
    bump_failures: int
    bound_failures: int
    moduli_fwd: Modulus
    moduli_bwd: Modulus
    stability: list[dict]

    @property
    def ok(self) -> bool:
        return (self.invariance_residual == 0 and self.triangle_violations == 0
                and self.bump_failures == 0 and self.bound_failures == 0
                and all(s["defect"] == 0 for s in self.stability))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "levels": self.levels,
            "radii": [str(r) for r in self.radii],
            "truncated": self.truncated,
            "tail_bound": str(self.tail_bound),
            "invariance_residual": self.invariance_residual,
            "triangle_violations": self.triangle_violations,
            "bump_failures": self.bump_failures,
            "bound_failures": self.bound_failures,
            "moduli_fwd": self.moduli_fwd.to_dict(),
            "moduli_bwd": self.moduli_bwd.to_dict(),
            "stability": self.stability,
            "repair": self.repair,
            "ok": self.ok,
        }


def _cayley_indices(G) -> np.ndarray:
    els = G.elements()
    return np.array([[G.index(G.op(x, y)) for y in els] for x in els], dtype=np.int64)


def invariance_residual(G, values: np.ndarray) -> float:
    """``max |D[gx, gy] - D[x, y]|`` over all g, x, y of the sampled group."""
    T = _cayley_indices(G)
    return max(float(np.max(np.abs(values[np.ix_(T[g], T[g])] - values))) for g in range(T.shape[0]))


def composite_moduli(G, family: BumpFamily, result: RepairResult,
                     d_base: np.ndarray) -> tuple[Modulus, Modulus]:
    """Moduli between the base metric and the repaired metric.

    Forward: ``d < r_{n+1}`` forces ``h <= 2**-(n+1)``; if that is below the
    repair radius ``rho_q`` then ``d1 <= q - 2**-N + eps``.
    Backward: ``d1 < q`` forces ``h <= rho_q``; if that is below
    ``2**-(n+1)`` then ``f_n < 1`` and so ``d < r_n``.
    """
    f, eps = result.f, result.certificate.epsilon
    qs = f.radii.dyadics()
    rho = f.radii.radii[1:]
    fwd, bwd = [], []
    for n in range(family.levels):
        w = 2.0 ** -(n + 1)
        above = np.flatnonzero(rho > w)
        if above.size:
            k = above[0]
            fwd.append((float(qs[k] - f.step + eps), float(family.radii[n + 1])))
        below = np.flatnonzero(rho < w)
        if below.size:
            bwd.append((float(family.radii[n]), float(qs[below[-1]])))
    fwd_m = Modulus(tuple(fwd), "<=", "d", "d1")
    bwd_m = Modulus(tuple(bwd), "<", "d1", "d")
    d1 = result.d1.values
    if fwd_m.failures(d_base, d1) or bwd_m.failures(d1, d_base):
        raise InvariantError("composite moduli refuted by the repaired metric")
    return fwd_m, bwd_m


def stability_battery(G, values: np.ndarray, seed: int = 0, count: int = 6,
                      N: int = 20, W: int = 5) -> list[dict]:
    """Stability defects of a finite metric along seeded eventually constant sequences."""
    rng = np.random.default_rng(seed)
    n = values.shape[0]
    out = []
    for _ in range(count):
        s = rng.integers(0, n, size=int(rng.integers(1, 6))).tolist()
        t = rng.integers(0, n, size=int(rng.integers(1, 6))).tolist()
        rep = stability_defect(table(values, s, t), N, W, 1e-12)
        out.append({"s": s, "t": t, "defect": rep.defect, "verdict": rep.verdict})
    return out


def end_to_end(G, levels: int, depth: int | None = None, seed: int = 0):
    """Bump family, weighted sum, repair and a certificate of the result.

    Returns ``(d1, certificate)``; ``d1`` is a FiniteDissimilarity over the
    sampled group.
    """
    family = build_bump_family(G, levels)
    h = wap_sum(G, family)
    els = G.elements()
    bump_fail = len(family.check(els))
    bound_fail = len(distance_bound_failures(G, h, els))
    d_base = np.array([[float(G.length(G.op(G.inv(x), y))) for y in els] for x in els])
    if len(els) == 1:
        d1 = FiniteDissimilarity(np.zeros((1, 1)), G.labels)
        empty = Modulus((), "<=", "d", "d1")
        cert = GroupCertificate(G.describe(), family.levels, family.radii, family.truncated,
                                h.tail_bound, {}, 0.0, 0, bump_fail, bound_fail, empty,
                                Modulus((), "<", "d1", "d"), [])
        return d1, cert
    hd = h.dissimilarity()
    result = repair(hd, depth=depth)
    d1 = result.d1.values
    fwd, bwd = composite_moduli(G, family, result, d_base)
    cert = GroupCertificate(
        model=G.describe(),
        levels=family.levels,
        radii=family.radii,
        truncated=family.truncated,
        tail_bound=h.tail_bound,
        repair=result.certificate.to_dict(),
        invariance_residual=max(invariance_residual(G, hd.values), invariance_residual(G, d1)),
        triangle_violations=check_triangle(result.d1).violation_count,
        bump_failures=bump_fail,
        bound_failures=bound_fail,
        moduli_fwd=fwd,
        moduli_bwd=bwd,
        stability=stability_battery(G, d1, seed),
    )
    return result.d1, cert
