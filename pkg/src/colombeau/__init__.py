"""Symbolic-numeric engine for Colombeau generalized functions."""

from colombeau.epsnet import (
    EpsGrid,
    GenNumber,
    ScaleExpr,
    classify_net,
    gn_arith,
    valuation,
)

__all__ = [
    "EpsGrid",
    "GenNumber",
    "ScaleExpr",
    "classify_net",
    "gn_arith",
    "valuation",
]

__version__ = "0.1.0"
