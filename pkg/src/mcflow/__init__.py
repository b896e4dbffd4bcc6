"""Approximate multicommodity flow through electrical flows with per-edge
energy matrices."""

from .capacitated import CapacitatedParams, quadratically_capacitated_flow
from .concurrent_mmw import ConcurrentConfig, MmwParams, binary_search_lambda, max_concurrent_flow
from .coupled import SolveOptions, make_kirchhoff, quadratically_coupled_flow
from .graphcore import Graph, Instance, bottleneck_bounds, parse_instance, read_instance
from .kvec import EnergyMatrices, energy, saturation, saturations
from .signs import SignsParams, convolve_all, energy_matrix_signs, max_concurrent_flow_signs
from .weighted import WeightedSpec, max_weighted_flow, weighted_coupled_flow

__all__ = [
    "CapacitatedParams", "ConcurrentConfig", "EnergyMatrices", "Graph", "Instance", "MmwParams",
    "SignsParams", "SolveOptions", "WeightedSpec", "binary_search_lambda", "bottleneck_bounds",
    "convolve_all", "energy", "energy_matrix_signs", "make_kirchhoff", "max_concurrent_flow",
    "max_concurrent_flow_signs", "max_weighted_flow", "parse_instance", "quadratically_capacitated_flow",
    "quadratically_coupled_flow", "read_instance", "saturation", "saturations", "weighted_coupled_flow",
]
