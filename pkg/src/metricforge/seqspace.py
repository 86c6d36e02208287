"""Exact norms of finitely supported rational vectors in sequence spaces.

A vector family assigns to every index ``n`` a finitely supported vector
described by runs of equal coordinates.  Each run covers the coordinates
``start(n) .. end(n)`` (inclusive), where ``start`` and ``end`` are affine
in ``n``, and adds a fixed rational value there.  Run-length form keeps the
norm of ``s_n - t_m`` O(#runs) even when the supports are long.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError


@dataclass(frozen=True)
class Run:
    start: tuple[int, int]  # (a0, a1): first coordinate a0 + a1*n
    end: tuple[int, int]    # (b0, b1): last coordinate b0 + b1*n
    value: Fraction

    def at(self, n: int) -> tuple[int, int]:
        return self.start[0] + self.start[1] * n, self.end[0] + self.end[1] * n


@dataclass(frozen=True)
class VectorFamily:
    runs: tuple[Run, ...]
    name: str = "family"

    def vector(self, n: int) -> dict[int, Fraction]:
        """Dense coordinate dict; for tests and small supports only."""
        out: dict[int, Fraction] = {}
        for run in self.runs:
            lo, hi = run.at(n)
            for i in range(lo, hi + 1):
                out[i] = out.get(i, Fraction(0)) + run.value
        return {i: v for i, v in out.items() if v}

    def to_dict(self) -> dict:
        return {
            "kind": "runs",
            "runs": [{"start": list(r.start), "end": list(r.end), "value": str(r.value)}
                     for r in self.runs],
        }


def partial_sum(coef=1) -> VectorFamily:
    """``coef * (e_0 + ... + e_n)``."""
    return VectorFamily((Run((0, 0), (0, 1), Fraction(coef)),), f"partial_sum({coef})")


def basis(stride: int = 1, offset: int = 0, coef=1) -> VectorFamily:
    """``coef * e_{stride*n + offset}``."""
    return VectorFamily((Run((offset, stride), (offset, stride), Fraction(coef)),),
                        f"basis({stride},{offset},{coef})")


def constant(coords: dict[int, object]) -> VectorFamily:
    runs = tuple(Run((int(i), 0), (int(i), 0), Fraction(v)) for i, v in sorted(coords.items()))
    return VectorFamily(runs, "constant")


def family_from_dict(data: dict) -> VectorFamily:
    kind = data.get("kind")
    coef = Fraction(str(data.get("coef", 1)))
    if kind == "partial_sum":
        return partial_sum(coef)
    if kind == "basis":
        return basis(int(data.get("stride", 1)), int(data.get("offset", 0)), coef)
    if kind == "constant":
        return constant({int(k): Fraction(str(v)) for k, v in data["coords"].items()})
    if kind == "runs":
        runs = tuple(Run(tuple(map(int, r["start"])), tuple(map(int, r["end"])),
                         Fraction(str(r["value"]))) for r in data["runs"])
        return VectorFamily(runs, "runs")
    raise ValidationError(f"unknown vector family kind {kind!r}")


def _segments(s: VectorFamily, n: int, t: VectorFamily, m: int):
    """``(value, length)`` of the maximal constant pieces of ``s_n - t_m``."""
    edges = []
    for sign, fam, k in ((1, s, n), (-1, t, m)):
        for run in fam.runs:
            lo, hi = run.at(k)
            if hi < lo:
                continue
            if lo < 0:
                raise ValidationError(f"{fam.name} has a negative coordinate at index {k}")
            edges.append((lo, sign * run.value))
            edges.append((hi + 1, -sign * run.value))
    edges.sort(key=lambda e: e[0])
    level = Fraction(0)
    out = []
    for i, (pos, delta) in enumerate(edges):
        level += delta
        nxt = edges[i + 1][0] if i + 1 < len(edges) else pos
        if nxt > pos and level:
            out.append((level, nxt - pos))
    return out


def norm_of_difference(s: VectorFamily, n: int, t: VectorFamily, m: int, p: float | None) -> float:
    """``||s_n - t_m||`` in the sup-norm (``p=None``) or the ``p``-norm, ``p >= 1``.

    The sup-norm is exact (rational, then rounded once); the ``p``-norm sums
    with ``math.fsum``.
    """
    segs = _segments(s, n, t, m)
    if not segs:
        return 0.0
    if p is None:
        return float(max(abs(v) for v, _ in segs))
    total = math.fsum(float(abs(v)) ** p * length for v, length in segs)
    return total ** (1.0 / p)


def norm(s: VectorFamily, n: int, p: float | None) -> float:
    return norm_of_difference(s, n, VectorFamily(()), 0, p)
