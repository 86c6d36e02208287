"""Finite dissimilarity tables and brute-force metric diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

# Triple scans are chunked over the first index to bound memory at ~2**22 cells.
_CHUNK_CELLS = 1 << 22


class FiniteDissimilarity:
    """Square table of pairwise dissimilarities on a finite labelled set.

    Validation is exact: the diagonal must be 0, off-diagonal entries must be
    strictly positive and finite, and the table must be exactly symmetric.
    Use :func:`symmetrize` first if the data is only approximately symmetric.

    The underlying array is read-only, so instances are safe to share.
    """

    __slots__ = ("labels", "values")

    def __init__(self, values, labels: Sequence[str] | None = None):
        arr = np.array(values, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"dissimilarity table must be square, got shape {arr.shape}")
        n = arr.shape[0]
        if labels is None:
            labels = [str(i) for i in range(n)]
        labels = [str(x) for x in labels]
        if len(labels) != n:
            raise ValidationError(f"{len(labels)} labels for a {n}x{n} table")
        if len(set(labels)) != n:
            raise ValidationError("labels must be distinct")
        _validate(arr)
        arr.setflags(write=False)
        self.values = arr
        self.labels = tuple(labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"FiniteDissimilarity(n={self.n})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteDissimilarity):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.values, other.values)

    __hash__ = None

    def off_diagonal(self) -> np.ndarray:
        """Upper-triangle values (i < j) in row-major order."""
        iu = np.triu_indices(self.n, k=1)
        return self.values[iu]

    def positive_values(self) -> np.ndarray:
        """Sorted distinct off-diagonal values."""
        return np.unique(self.off_diagonal())

    def min_positive(self) -> float:
        off = self.off_diagonal()
        if off.size == 0:
            raise ValidationError("a single-point space has no positive dissimilarity")
        return float(off.min())

    def map(self, fn) -> "FiniteDissimilarity":
        """Apply ``fn`` to off-diagonal entries, keeping the diagonal at 0."""
        out = np.array(fn(self.values), dtype=float)
        np.fill_diagonal(out, 0.0)
        return FiniteDissimilarity(out, self.labels)


def _validate(arr: np.ndarray) -> None:
    n = arr.shape[0]
    bad = ~np.isfinite(arr)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValidationError(f"cell ({i}, {j}) is not finite: {arr[i, j]!r}")
    diag = np.diagonal(arr)
    nz = np.flatnonzero(diag != 0.0)
    if nz.size:
        i = int(nz[0])
        raise ValidationError(f"cell ({i}, {i}) must be 0, got {arr[i, i]!r}")
    off = arr + np.eye(n)  # mask the diagonal for the positivity test
    nonpos = np.argwhere(off <= 0.0)
    if nonpos.size:
        i, j = nonpos[0]
        raise ValidationError(f"cell ({i}, {j}) must be positive off the diagonal, got {arr[i, j]!r}")
    asym = np.argwhere(arr != arr.T)
    if asym.size:
        i, j = asym[0]
        raise ValidationError(
            f"cell ({i}, {j}) = {arr[i, j]!r} differs from cell ({j}, {i}) = {arr[j, i]!r}"
        )


def symmetrize(values) -> np.ndarray:
    """Average a table with its transpose and zero the diagonal."""
    arr = np.asarray(values, dtype=float)
    out = (arr + arr.T) / 2.0
    np.fill_diagonal(out, 0.0)
    return out


def random_premetric(n: int, rng: np.random.Generator, high: float = 2.0) -> FiniteDissimilarity:
    """Symmetric table with off-diagonal entries uniform in (0, high]."""
    vals = high * (1.0 - rng.random((n, n)))
    vals = np.triu(vals, 1)
    vals = vals + vals.T
    return FiniteDissimilarity(vals)


# ---------------------------------------------------------------------------
# triangle inequality


@dataclass(frozen=True)
class TriangleReport:
    max_deficiency: float
    witness: tuple[int, int, int] | None
    violation_count: int

    def to_dict(self) -> dict:
        return {
            "max_deficiency": self.max_deficiency,
            "witness": list(self.witness) if self.witness is not None else None,
            "violation_count": self.violation_count,
        }


def _chunks(n: int, per_row: int) -> Iterable[slice]:
    step = max(1, _CHUNK_CELLS // max(per_row, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def triangle_excess(values: np.ndarray) -> Iterable[tuple[slice, np.ndarray]]:
    """Yield ``(xs, E)`` with ``E[x, y, z] = h(x,z) - h(x,y) - h(y,z)`` per chunk."""
    h = np.asarray(values, dtype=float)
    n = h.shape[0]
    for xs in _chunks(n, n * n):
        E = h[xs, None, :] - h[xs, :, None] - h[None, :, :]
        yield xs, E


def check_triangle(h: FiniteDissimilarity | np.ndarray) -> TriangleReport:
    """Exhaustive scan of all ordered triples for triangle violations.

    The witness is the lexicographically smallest triple attaining the
    maximum deficiency.
    """
    if not isinstance(h, FiniteDissimilarity):
        h = FiniteDissimilarity(h)
    best = 0.0
    witness = None
    count = 0
    for xs, E in triangle_excess(h.values):
        pos = E > 0.0
        count += int(np.count_nonzero(pos))
        if not pos.any():
            continue
        flat = int(np.argmax(E))
        val = float(E.flat[flat])
        if val > best:
            x, y, z = np.unravel_index(flat, E.shape)
            best = val
            witness = (int(x) + xs.start, int(y), int(z))
    return TriangleReport(max_deficiency=best, witness=witness, violation_count=count)


# ---------------------------------------------------------------------------
# moduli


@dataclass(frozen=True)
class Modulus:
    """Finite table of (eps, delta) pairs witnessing an implication.

    Each pair asserts ``source(x, y) < delta  =>  target(x, y) REL eps`` over
    every pair of points, where ``REL`` is ``relation`` (``"<"`` or ``"<="``).
    A delta of 0 records that no positive delta was found at that eps;
    ``math.inf`` means every delta works.
    """

    pairs: tuple[tuple[float, float], ...]
    relation: str = "<"
    source: str = "h1"
    target: str = "h2"

    def __post_init__(self):
        if self.relation not in ("<", "<="):
            raise ValueError(f"relation must be '<' or '<=', not {self.relation!r}")

    def holds(self, source: np.ndarray, target: np.ndarray) -> bool:
        return not self.failures(source, target)

    def failures(self, source: np.ndarray, target: np.ndarray) -> list[tuple[float, float]]:
        """Pairs whose implication is refuted by the given tables."""
        src = np.asarray(source, dtype=float).ravel()
        tgt = np.asarray(target, dtype=float).ravel()
        if not self.pairs or src.size == 0:
            return []
        # the premise set src < delta is a prefix of src in sorted order, so
        # the largest target it covers is a running maximum
        order = np.argsort(src, kind="stable")
        src = src[order]
        peak = np.maximum.accumulate(tgt[order])
        eps = np.array([e for e, _ in self.pairs], dtype=float)
        delta = np.array([d for _, d in self.pairs], dtype=float)
        k = np.searchsorted(src, delta, side="left")
        worst = np.where(k > 0, peak[np.maximum(k - 1, 0)], -np.inf)
        ok = worst < eps if self.relation == "<" else worst <= eps
        bad = (delta > 0) & ~ok
        return [self.pairs[i] for i in np.flatnonzero(bad)]

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "relation": self.relation,
            "pairs": [[e, None if math.isinf(d) else d] for e, d in self.pairs],
        }


def _check_grid(eps_grid) -> list[float]:
    grid = [float(e) for e in eps_grid]
    for e in grid:
        if not (e > 0) or not math.isfinite(e):
            raise ValidationError(f"eps values must be positive and finite, got {e!r}")
    return sorted(grid)


def _largest_at_most(candidates: np.ndarray, bound: float) -> float:
    k = int(np.searchsorted(candidates, bound, side="right"))
    return float(candidates[k - 1]) if k else 0.0


def _pair_spread(h: np.ndarray) -> np.ndarray:
    """``S[x, y] = max_z |h(x,z) - h(y,z)|``."""
    n = h.shape[0]
    out = np.empty((n, n))
    for xs in _chunks(n, n * n):
        out[xs] = np.abs(h[xs, None, :] - h[None, :, :]).max(axis=2)
    return out


def local_continuity_modulus(h: FiniteDissimilarity, eps_grid) -> Modulus:
    """Largest observed-value delta with ``h(x,y) < delta => |h(x,z)-h(y,z)| < eps``.

    Candidates for delta are the distinct positive entries of ``h``; the
    smallest of them always works because its premise only admits ``x == y``.
    """
    grid = _check_grid(eps_grid)
    cand = h.positive_values()
    if cand.size == 0:
        return Modulus(tuple((e, math.inf) for e in grid), "<", "h", "h-spread")
    spread = _pair_spread(h.values)
    off = ~np.eye(h.n, dtype=bool)
    hv = h.values[off]
    sv = spread[off]
    pairs = []
    for eps in grid:
        blocking = hv[sv >= eps]
        bound = float(blocking.min()) if blocking.size else math.inf
        pairs.append((eps, _largest_at_most(cand, bound)))
    return Modulus(tuple(pairs), "<", "h", "h-spread")


def _one_direction(src: FiniteDissimilarity, tgt: FiniteDissimilarity, grid, names) -> Modulus:
    cand = src.positive_values()
    if cand.size == 0:
        return Modulus(tuple((e, math.inf) for e in grid), "<", *names)
    off = ~np.eye(src.n, dtype=bool)
    sv = src.values[off]
    tv = tgt.values[off]
    pairs = []
    for eps in grid:
        blocking = sv[tv >= eps]
        bound = float(blocking.min()) if blocking.size else math.inf
        pairs.append((eps, _largest_at_most(cand, bound)))
    return Modulus(tuple(pairs), "<", *names)


def uniform_equivalence_moduli(
    h1: FiniteDissimilarity, h2: FiniteDissimilarity, eps_grid
) -> tuple[Modulus, Modulus]:
    """Moduli for ``h1 < delta => h2 < eps`` and ``h2 < delta => h1 < eps``."""
    if h1.labels != h2.labels:
        raise ValidationError("uniform equivalence needs identical label sets")
    grid = _check_grid(eps_grid)
    return (
        _one_direction(h1, h2, grid, ("h1", "h2")),
        _one_direction(h2, h1, grid, ("h2", "h1")),
    )
