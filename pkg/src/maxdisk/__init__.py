"""Desk-scale numerical construction of proper conformal maximal disks in L^3."""

from .analytic import AnalyticFn, Polyline, const, identity, runge_approximant
from .certificates import CertificateLog, Check
from .domain import PlanarDomain
from .estimators import LemmaEstimator, TheoremEstimator
from .lemma import LemmaInput, run_lemma
from .lorentz import Frame, LVec3, peculiar_frame
from .shells import mu, r_star
from .theorem import RecursionParams, alpha_k, run_theorem, s_k, seed_surface, t_n
from .weierstrass import ImmersionField, WeierstrassData, lopez_ros

__version__ = "0.1.0"

__all__ = [
    "AnalyticFn", "CertificateLog", "Check", "Frame", "ImmersionField", "LVec3", "LemmaEstimator",
    "LemmaInput", "PlanarDomain", "Polyline", "RecursionParams", "TheoremEstimator", "WeierstrassData",
    "alpha_k", "const", "identity", "lopez_ros", "mu", "peculiar_frame", "r_star", "run_lemma",
    "run_theorem", "runge_approximant", "s_k", "seed_surface", "t_n",
]
