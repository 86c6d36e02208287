"""Pre-metric in, certified metric out.

``repair`` composes the deficiency table, its envelope, the dyadic radii and
the correction function ``f``, then sets ``d1 = f o h`` off the diagonal.  At
finite depth ``f o h`` may still miss the triangle inequality by up to
``2**-depth``; the default exactification adds ``eps = 2**-(depth-1)`` to every
off-diagonal entry, which removes any deficiency of at most ``eps``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correction import MAX_DEPTH, CorrectionFn, build_radii
from .deficiency import TableOracle, compute_td, usc_envelope
from .errors import InvariantError, ValidationError
from .space import (FiniteDissimilarity, Modulus, TriangleReport, check_triangle,
                    triangle_excess, uniform_equivalence_moduli)

MIN_DEPTH = 4


def choose_depth(h: FiniteDissimilarity, cap: int | None = None) -> int:
    """Least ``N`` with ``2**-N < min positive h``, clamped to ``[4, 20]``.

    With ``cap`` the result is at most ``cap`` and no error is raised; the
    lift still keeps tiny dissimilarities positive.
    """
    if h.n < 2:
        return MIN_DEPTH if cap is None else min(MIN_DEPTH, cap)
    limit = MAX_DEPTH if cap is None else min(cap, MAX_DEPTH)
    h_min = h.min_positive()
    n = 0
    while 2.0 ** -n >= h_min:
        if n == limit:
            if cap is not None:
                return n
            raise ValidationError(
                f"smallest dissimilarity {h_min!r} needs depth > {MAX_DEPTH}; "
                "rescale the input (e.g. --prescale) first"
            )
        n += 1
    return max(n, MIN_DEPTH) if cap is None else min(max(n, MIN_DEPTH), cap)


def scan_triangle(values: np.ndarray) -> TriangleReport:
    """``check_triangle`` without input validation (zeros off the diagonal allowed)."""
    best, witness, count = 0.0, None, 0
    for xs, E in triangle_excess(values):
        count += int(np.count_nonzero(E > 0))
        k = int(np.argmax(E))
        if E.flat[k] > best:
            x, y, z = np.unravel_index(k, E.shape)
            best, witness = float(E.flat[k]), (int(x) + xs.start, int(y), int(z))
    return TriangleReport(best, witness, count)


def shortest_path_closure(values: np.ndarray) -> np.ndarray:
    d = np.array(values, dtype=float)
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


@dataclass(frozen=True)
class Certificate:
    epsilon: float
    depth: int
    moduli_fwd: Modulus
    moduli_bwd: Modulus
    pre_lift_deficiency: float
    witness: tuple[int, int, int] | None
    mode: str = "lift"

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "depth": self.depth,
            "moduli_fwd": self.moduli_fwd.to_dict(),
            "moduli_bwd": self.moduli_bwd.to_dict(),
            "pre_lift_deficiency": self.pre_lift_deficiency,
            "witness": list(self.witness) if self.witness else None,
            "mode": self.mode,
        }


@dataclass(frozen=True)
class RepairResult:
    d1: FiniteDissimilarity
    f: CorrectionFn
    certificate: Certificate


def certify_equivalence(h: FiniteDissimilarity, d1: FiniteDissimilarity, f: CorrectionFn,
                        epsilon: float = 0.0) -> tuple[Modulus, Modulus]:
    """Finite-depth moduli of ``d1 = f o h + epsilon`` (off the diagonal).

    Forward: ``h < r_q  =>  d1 <= q - 2**-N + epsilon``.
    Backward: ``d1 < q  =>  h <= r_q``.
    Both are checked against every pair before being returned.
    """
    qs = f.radii.dyadics()
    rs = f.radii.radii[1:]
    bound = qs - f.step + epsilon
    keep = bound > 0
    fwd = Modulus(tuple(zip(bound[keep].tolist(), rs[keep].tolist())), "<=", "h", "d1")
    bwd = Modulus(tuple(zip(rs.tolist(), qs.tolist())), "<=", "d1", "h")
    if fwd.failures(h.values, d1.values) or bwd.failures(d1.values, h.values):
        raise InvariantError("equivalence moduli refuted by the repaired table")
    return fwd, bwd


def repair(h: FiniteDissimilarity, depth: int | None = None, lift: bool = True,
           closure: bool = False, prescale: bool = False) -> RepairResult:
    if lift and closure:
        raise ValidationError("choose at most one of lift and closure")
    if prescale and h.n > 1:
        h = h.map(lambda v: v / v.max())
    if depth is None:
        depth = choose_depth(h)
    g = usc_envelope(TableOracle(compute_td(h)))
    f = CorrectionFn(build_radii(g, depth))

    raw = np.asarray(f(h.values), dtype=float)
    np.fill_diagonal(raw, 0.0)
    pre = scan_triangle(raw)
    eps = 2.0 * f.step
    if pre.max_deficiency > eps:
        raise InvariantError(
            f"pre-lift deficiency {pre.max_deficiency!r} exceeds 2**-(depth-1) = {eps!r}"
        )

    if lift:
        out = raw + eps
        np.fill_diagonal(out, 0.0)
        mode, epsilon = "lift", eps
    elif closure:
        out = shortest_path_closure(raw)
        mode, epsilon = "closure", 0.0
    else:
        out = raw
        mode, epsilon = "none", 0.0
    if h.n > 1 and np.any(out[~np.eye(h.n, dtype=bool)] <= 0):
        raise ValidationError(f"depth {depth} does not separate the smallest dissimilarity; "
                              "use a larger depth or enable lift")
    d1 = FiniteDissimilarity(out, h.labels)
    if mode != "none":
        post = check_triangle(d1)
        if post.violation_count:
            raise InvariantError(f"{mode} left {post.violation_count} triangle violations")

    if mode == "closure":
        grid = f.radii.dyadics()
        fwd, bwd = uniform_equivalence_moduli(h, d1, grid)
    else:
        fwd, bwd = certify_equivalence(h, d1, f, epsilon)
    cert = Certificate(epsilon, depth, fwd, bwd, pre.max_deficiency, pre.witness, mode)
    return RepairResult(d1, f, cert)
