"""Iterated double limits and stability defects of double sequences.

Ultrafilter limits are not computable.  Here a limit is estimated from a
window of ``W`` consecutive indices starting at a horizon, and subsequence
selectors stand in for the choice of ultrafilter.  For ``lim_n lim_m a(n, m)``
the outer window starts at ``N`` and the inner window at ``N**2`` (so the
inner index runs far ahead of the outer one); a stage is accepted when the
oscillation (max - min) over its window is at most ``tol``.

A report can witness a defect or fail to find one.  It never certifies
stability.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import seqspace
from .errors import ValidationError

SELECTORS: dict[str, Callable[[np.ndarray, int], np.ndarray]] = {
    "all": lambda k, horizon: k,
    "evens": lambda k, horizon: 2 * k,
    "odds": lambda k, horizon: 2 * k + 1,
    "tail": lambda k, horizon: k + horizon // 2,
}
SELECTORS["tail-half"] = SELECTORS["tail"]
DEFAULT_SELECTORS = ("all", "evens", "odds", "tail")


# ---------------------------------------------------------------------------
# double sequence specifications


@dataclass(frozen=True)
class DoubleSequenceSpec:
    """Generator of ``a(n, m) = d(s_n, t_m)`` on arbitrary index arrays.

    ``fn(ns, ms)`` receives integer arrays shaped for broadcasting
    (``ns[:, None]`` and ``ms[None, :]``).  ``s_size``/``t_size`` optionally
    give the distance of ``s_n``/``t_m`` to the base point, and ``bounded``
    the caller's boundedness claim for each sequence.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    kind: str = "closed_form"
    s_size: Callable[[np.ndarray], np.ndarray] | None = None
    t_size: Callable[[np.ndarray], np.ndarray] | None = None
    bounded: tuple[bool, bool] | None = None
    n_max: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def values(self, ns, ms) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        ms = np.asarray(ms, dtype=np.int64)
        if self.n_max is not None and (ns.max(initial=0) >= self.n_max or ms.max(initial=0) >= self.n_max):
            raise ValidationError(f"index beyond N_max={self.n_max}")
        out = np.asarray(self.fn(ns[:, None], ms[None, :]), dtype=float)
        out = np.broadcast_to(out, (ns.size, ms.size)).copy()
        if np.any(out < 0) or not np.all(np.isfinite(out)):
            raise ValidationError("double sequence values must be finite and non-negative")
        return out

    def transpose(self) -> "DoubleSequenceSpec":
        fn = self.fn
        bounded = None if self.bounded is None else self.bounded[::-1]
        return replace(self, fn=lambda n, m: _transposed(fn, n, m),
                       s_size=self.t_size, t_size=self.s_size, bounded=bounded)

    def transformed(self, phi: Callable[[np.ndarray], np.ndarray], name: str) -> "DoubleSequenceSpec":
        fn = self.fn
        meta = dict(self.meta, transform=name)
        return replace(self, fn=lambda n, m: phi(np.asarray(fn(n, m), dtype=float)), meta=meta)


def _transposed(fn, n, m):
    # n arrives as a column and m as a row; the original expects the reverse roles
    return np.asarray(fn(m.T, n.T), dtype=float).T


_NP_NAMES = {
    "sqrt": np.sqrt, "abs": np.abs, "exp": np.exp, "log": np.log, "floor": np.floor,
    "min": np.minimum, "max": np.maximum, "where": np.where, "sin": np.sin, "cos": np.cos,
    "pi": math.pi, "e": math.e,
}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Compare, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.FloorDiv,
    ast.USub, ast.UAdd, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq,
)


def compile_expr(expr: str, variables: Sequence[str]) -> Callable:
    """Compile an arithmetic expression over ``variables`` into a numpy function."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse expression {expr!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValidationError(f"disallowed syntax {type(node).__name__} in {expr!r}")
        if isinstance(node, ast.Name) and node.id not in _NP_NAMES and node.id not in variables:
            raise ValidationError(f"unknown name {node.id!r} in {expr!r}")
    code = compile(tree, "<expr>", "eval")

    def fn(*args):
        env = dict(_NP_NAMES)
        env.update({v: np.asarray(a, dtype=float) for v, a in zip(variables, args)})
        return eval(code, {"__builtins__": {}}, env)

    return fn


def closed_form(expr: str | Callable, s_size=None, t_size=None, bounded=None) -> DoubleSequenceSpec:
    """Spec from an expression in ``n`` and ``m`` (or a numpy callable)."""
    fn = compile_expr(expr, ("n", "m")) if isinstance(expr, str) else expr
    if isinstance(s_size, str):
        s_size = compile_expr(s_size, ("n",))
    if isinstance(t_size, str):
        t_size = compile_expr(t_size, ("m",))
    return DoubleSequenceSpec(fn, "closed_form", s_size, t_size, bounded,
                              meta={"expr": expr if isinstance(expr, str) else repr(expr)})


def seq_space(s: seqspace.VectorFamily, t: seqspace.VectorFamily, p: float | None = None,
              bounded=None) -> DoubleSequenceSpec:
    """``a(n, m) = ||s_n - t_m||`` in the sup-norm (``p=None``) or ``p``-norm."""
    if p is not None and p < 1:
        raise ValidationError("p-norm needs p >= 1")

    def fn(ns, ms):
        ns, ms = np.broadcast_arrays(ns, ms)
        out = np.empty(ns.shape)
        for idx in np.ndindex(ns.shape):
            out[idx] = seqspace.norm_of_difference(s, int(ns[idx]), t, int(ms[idx]), p)
        return out

    def size(fam):
        return lambda ks: np.array([seqspace.norm(fam, int(k), p) for k in np.ravel(ks)])

    return DoubleSequenceSpec(fn, "seq_space", size(s), size(t), bounded,
                              meta={"s": s.to_dict(), "t": t.to_dict(),
                                    "norm": "sup" if p is None else {"p": p}})


def index_sequence(seq) -> Callable[[np.ndarray], np.ndarray]:
    """Index rule from a callable, an expression in ``n``, or an eventually constant list."""
    if callable(seq):
        return lambda ks: np.asarray([seq(int(k)) for k in np.ravel(ks)]).reshape(np.shape(ks))
    if isinstance(seq, str):
        f = compile_expr(seq, ("n",))
        return lambda ks: np.broadcast_to(np.asarray(f(ks)), np.shape(ks)).astype(np.int64)
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("index sequence list must be non-empty and flat")
    return lambda ks: arr[np.minimum(np.asarray(ks), arr.size - 1)]


def table(metric, s_seq, t_seq, base: int = 0, bounded=(True, True)) -> DoubleSequenceSpec:
    """``a(n, m) = metric[s_n, t_m]`` for index sequences into a finite table."""
    D = np.asarray(metric, dtype=float)
    s_idx, t_idx = index_sequence(s_seq), index_sequence(t_seq)
    size = D.shape[0]

    def look(ks, rule):
        idx = rule(ks)
        if np.any(idx < 0) or np.any(idx >= size):
            raise ValidationError(f"index sequence leaves the {size}-element table")
        return idx

    def fn(ns, ms):
        return D[look(ns, s_idx), look(ms, t_idx)]

    return DoubleSequenceSpec(fn, "table",
                              lambda ks: D[base, look(ks, s_idx)],
                              lambda ks: D[base, look(ks, t_idx)],
                              bounded, meta={"size": size})


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class LimitEstimate:
    value: float | None
    converged: bool
    oscillation: float
    stage: str  # "ok", "inner" or "outer"

    def to_dict(self) -> dict:
        return {"value": self.value, "converged": self.converged,
                "oscillation": self.oscillation, "stage": self.stage}


def _check_window(N: int, W: int, tol: float) -> None:
    if W < 1 or N <= 2 * W:
        raise ValidationError(f"need W >= 1 and N > 2W, got N={N}, W={W}")
    if not tol > 0:
        raise ValidationError("tol must be positive")


def iterated_limit(a: DoubleSequenceSpec, order: str, N: int, W: int, tol: float,
                   selectors: tuple[str, str] = ("all", "all"),
                   inner_horizon: int | None = None) -> LimitEstimate:
    """Estimate ``lim_n lim_m`` (``order="nm"``) or ``lim_m lim_n`` (``"mn"``).

    ``selectors`` names the subsequence rules applied to ``n`` and ``m``.
    """
    _check_window(N, W, tol)
    H = N * N if inner_horizon is None else inner_horizon
    sel_n, sel_m = (SELECTORS[s] for s in selectors)
    outer = np.arange(N, N + W, dtype=np.int64)
    inner = np.arange(H, H + W, dtype=np.int64)
    if order == "nm":
        vals = a.values(sel_n(outer, N), sel_m(inner, H))
    elif order == "mn":
        vals = np.ascontiguousarray(a.values(sel_n(inner, H), sel_m(outer, N)).T)
    else:
        raise ValidationError(f"order must be 'nm' or 'mn', got {order!r}")
    # rows: outer index, columns: inner index
    inner_osc = np.ptp(vals, axis=1)
    if inner_osc.max() > tol:
        return LimitEstimate(None, False, float(inner_osc.max()), "inner")
    limits = vals.mean(axis=1)
    osc = float(np.ptp(limits))
    if osc > tol:
        return LimitEstimate(None, False, osc, "outer")
    return LimitEstimate(float(limits.mean()), True, osc, "ok")


@dataclass(frozen=True)
class PairResult:
    selectors: tuple[str, str]
    nm: LimitEstimate
    mn: LimitEstimate

    @property
    def defect(self) -> float | None:
        if self.nm.converged and self.mn.converged:
            return abs(self.nm.value - self.mn.value)
        return None

    def to_dict(self) -> dict:
        return {"selectors": list(self.selectors), "L_nm": self.nm.to_dict(),
                "L_mn": self.mn.to_dict(), "defect": self.defect}


@dataclass(frozen=True)
class StabilityReport:
    L_nm: float | None
    L_mn: float | None
    defect: float | None
    pairs: tuple[PairResult, ...]
    tol: float

    @property
    def non_converged(self) -> list[tuple[str, str]]:
        return [p.selectors for p in self.pairs if p.defect is None]

    @property
    def verdict(self) -> str:
        if self.defect is None:
            return "inconclusive"
        return "defect witnessed" if self.defect > self.tol else "no defect found"

    def to_dict(self) -> dict:
        return {
            "L_nm": self.L_nm,
            "L_mn": self.L_mn,
            "defect": self.defect,
            "verdict": self.verdict,
            "non_converged": [list(p) for p in self.non_converged],
            "pairs": [p.to_dict() for p in self.pairs],
        }


def stability_defect(a: DoubleSequenceSpec, N: int, W: int, tol: float,
                     selectors: Sequence[str] = DEFAULT_SELECTORS,
                     inner_horizon: int | None = None) -> StabilityReport:
    """Max over selector pairs of ``|lim_n lim_m a - lim_m lim_n a|``."""
    unknown = [s for s in selectors if s not in SELECTORS]
    if unknown:
        raise ValidationError(f"unknown selectors {unknown}; choose from {sorted(SELECTORS)}")
    _check_window(N, W, tol)
    pairs = []
    for sn in selectors:
        for sm in selectors:
            pair = (sn, sm)
            pairs.append(PairResult(
                pair,
                iterated_limit(a, "nm", N, W, tol, pair, inner_horizon),
                iterated_limit(a, "mn", N, W, tol, pair, inner_horizon),
            ))
    best = None
    for p in pairs:
        if p.defect is not None and (best is None or p.defect > best.defect):
            best = p
    if best is None:
        return StabilityReport(None, None, None, tuple(pairs), tol)
    return StabilityReport(best.nm.value, best.mn.value, best.defect, tuple(pairs), tol)


def bounded_transform(d):
    """``d / (1 + d)``, elementwise for arrays."""
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0):
        raise ValidationError("bounded_transform needs non-negative input")
    out = arr / (1.0 + arr)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CaseCheckReport:
    case: int
    ok: bool
    d_report: StabilityReport | None
    delta_report: StabilityReport
    mapped_defect: float | None
    flags: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "ok": self.ok,
            "mapped_defect": self.mapped_defect,
            "delta_defect": self.delta_report.defect,
            "flags": list(self.flags),
            "delta_report": self.delta_report.to_dict(),
            "d_report": self.d_report.to_dict() if self.d_report else None,
        }


def _growth_flags(a: DoubleSequenceSpec, N: int, W: int) -> list[str]:
    # heuristic: a bounded claim is doubted if sizes near the horizon exceed
    # ten times the early maximum, a divergent claim if they do not grow at all
    flags = []
    early = np.arange(0, N)
    late = np.arange(N * N, N * N + W)
    for label, size, claim in (("s", a.s_size, a.bounded[0]), ("t", a.t_size, a.bounded[1])):
        if size is None:
            continue
        e, l = float(np.max(size(early))), float(np.max(size(late)))
        if claim and l > 10 * max(e, 1e-300):
            flags.append(f"{label} declared bounded but grows from {e!r} to {l!r}")
        if not claim and l <= e:
            flags.append(f"{label} declared divergent but does not grow ({e!r} -> {l!r})")
    return flags


def lemma31_case_check(a: DoubleSequenceSpec, N: int, W: int, tol: float,
                       selectors: Sequence[str] = DEFAULT_SELECTORS) -> CaseCheckReport:
    """Check the behaviour of ``d/(1+d)`` in the three boundedness cases.

    Case 1 (both bounded): the defect of the transformed spec equals the
    defect of the original limits mapped through ``x/(1+x)``.
    Cases 2 and 3 (a divergent sequence): both transformed iterated limits
    are within ``tol`` of 1.
    """
    if a.bounded is None:
        raise ValidationError("case check needs boundedness metadata for both sequences")
    sb, tb = a.bounded
    case = 1 if (sb and tb) else (3 if not (sb or tb) else 2)
    flags = _growth_flags(a, N, W)
    delta = a.transformed(bounded_transform, "bounded")
    dr = stability_defect(delta, N, W, tol, selectors)
    if case == 1:
        base = stability_defect(a, N, W, tol, selectors)
        mapped = [abs(bounded_transform(p.nm.value) - bounded_transform(p.mn.value))
                  for p in base.pairs if p.defect is not None]
        mapped_defect = max(mapped) if mapped else None
        ok = (mapped_defect is not None and dr.defect is not None
              and abs(dr.defect - mapped_defect) <= tol)
        return CaseCheckReport(case, ok and not flags, base, dr, mapped_defect, tuple(flags))
    converged = [p for p in dr.pairs if p.defect is not None]
    ok = bool(converged) and all(abs(1 - p.nm.value) <= tol and abs(1 - p.mn.value) <= tol
                                 for p in converged)
    return CaseCheckReport(case, ok and not flags, None, dr, None, tuple(flags))


case_check = lemma31_case_check


def wap_function_test(group, f, seq_n, seq_m, N: int, W: int, tol: float,
                      selectors: Sequence[str] = DEFAULT_SELECTORS) -> StabilityReport:
    """Grothendieck double-limit test of ``a(n, m) = f(s_n * t_m)`` on a group model.

    A defect near 0 is consistent with, not proof of, ``f`` being weakly
    almost periodic along these sequences.
    """
    sn, sm = group.sequence(seq_n), group.sequence(seq_m)

    def fn(ns, ms):
        xs = sn(np.ravel(ns))
        ys = sm(np.ravel(ms))
        out = np.empty((len(xs), len(ys)))
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                out[i, j] = f(group.op(x, y))
        return out

    spec = DoubleSequenceSpec(fn, "group", meta={"group": group.describe()})
    return stability_defect(spec, N, W, tol, selectors)


def spec_from_dict(data: dict) -> DoubleSequenceSpec:
    """Build a spec from its JSON form.

    ``{"kind": "closed_form", "expr": "n/(n+m+1)"}``,
    ``{"kind": "seq_space", "s": {...}, "t": {...}, "norm": "sup" | {"p": 2}}`` or
    ``{"kind": "table", "metric": [[...]], "s": [...], "t": [...]}``; all kinds
    accept ``"bounded": [bool, bool]`` and ``"Nmax"``.
    """
    kind = data.get("kind")
    bounded = data.get("bounded")
    if bounded is not None:
        if len(bounded) != 2:
            raise ValidationError("'bounded' must list one flag per sequence")
        bounded = (bool(bounded[0]), bool(bounded[1]))
    if kind == "closed_form":
        if "expr" not in data:
            raise ValidationError("closed_form spec needs 'expr'")
        spec = closed_form(data["expr"], data.get("s_size"), data.get("t_size"), bounded)
    elif kind == "seq_space":
        norm = data.get("norm", "sup")
        if norm == "sup" or norm == {"kind": "sup"}:
            p = None
        elif isinstance(norm, dict) and "p" in norm:
            p = float(norm["p"])
        else:
            raise ValidationError(f"unknown norm {norm!r}")
        spec = seq_space(seqspace.family_from_dict(data["s"]), seqspace.family_from_dict(data["t"]),
                         p, bounded)
    elif kind == "table":
        spec = table(data["metric"], data["s"], data["t"], int(data.get("base", 0)),
                     bounded if bounded is not None else (True, True))
    else:
        raise ValidationError(f"unknown spec kind {kind!r}")
    if "Nmax" in data:
        spec = replace(spec, n_max=int(data["Nmax"]))
    return spec
