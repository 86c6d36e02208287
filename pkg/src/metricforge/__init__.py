"""Certified repair of pre-metrics into metrics, with stability diagnostics."""

__version__ = "0.1.0"

from .correction import CorrectionFn, DyadicRadii, build_radii, check_radii, verify_correction
from .deficiency import TDTable, TableOracle, compute_td, is_td_function, oracle_from_token, usc_envelope
from .errors import ConstructionError, ForgeError, InvariantError, OracleError, ValidationError
from .repair import choose_depth, repair
from .space import FiniteDissimilarity, check_triangle, local_continuity_modulus, uniform_equivalence_moduli

__all__ = [
    "ConstructionError", "CorrectionFn", "DyadicRadii", "FiniteDissimilarity", "ForgeError",
    "InvariantError", "OracleError", "TDTable", "TableOracle", "ValidationError",
    "build_radii", "check_radii", "check_triangle", "choose_depth", "compute_td",
    "is_td_function", "local_continuity_modulus", "oracle_from_token", "repair",
    "uniform_equivalence_moduli", "usc_envelope", "verify_correction",
]
