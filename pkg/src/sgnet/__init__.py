"""Scrambled geometric nets: randomized QMC on products of split intervals and triangles."""

from .domains import CellAddress, Interval, ProductDomain, Triangle, compute_Aj, level_matrices, map_net, phi_map, split_cell
from .estimator import Integrand, builtin_integrand, confidence_interval, estimate, replicate, variance_estimate
from .fields import build_field
from .nets import DigitalNet, faure_generators, faure_net, generate_net, verify_net
from .scramble import PermutationTree, ScrambleKey, permutation_for, scramble_net

__version__ = "0.1.0"

__all__ = [
    "CellAddress",
    "DigitalNet",
    "Integrand",
    "Interval",
    "PermutationTree",
    "ProductDomain",
    "ScrambleKey",
    "Triangle",
    "build_field",
    "builtin_integrand",
    "compute_Aj",
    "confidence_interval",
    "estimate",
    "faure_generators",
    "faure_net",
    "generate_net",
    "level_matrices",
    "map_net",
    "permutation_for",
    "phi_map",
    "replicate",
    "scramble_net",
    "split_cell",
    "variance_estimate",
    "verify_net",
]
