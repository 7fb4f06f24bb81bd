"""Selmer groups of quadratic twists, Redei matrices and alternating matrix models over F2."""

__version__ = "0.1.0"

from .arith import PlaceSet, SquareClass, hilbert_additive, legendre_additive, sieve_squarefree
from .chains import ChainSpec, equilibrium_closed, equilibrium_power, transition_row
from .descent import CurveFamily, SelmerData, TwistClass, selmer_oracle
from .gf2 import BitMatrix
from .model import ModelParams, mc_distribution
from .moments import GenFnSpec, gen_fn_eval, hb_average, moment
from .redei import RedeiExpr, classify_family

__all__ = [
    "BitMatrix",
    "ChainSpec",
    "CurveFamily",
    "GenFnSpec",
    "ModelParams",
    "PlaceSet",
    "RedeiExpr",
    "SelmerData",
    "SquareClass",
    "TwistClass",
    "__version__",
    "classify_family",
    "equilibrium_closed",
    "equilibrium_power",
    "gen_fn_eval",
    "hb_average",
    "hilbert_additive",
    "legendre_additive",
    "mc_distribution",
    "moment",
    "selmer_oracle",
    "sieve_squarefree",
    "transition_row",
]
