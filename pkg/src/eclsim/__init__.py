"""Simulator for decentralized SGD: D-PSGD, ECL, G-ECL and gradient tracking."""
from .algorithms import RunRecord, run
from .mixing import AlphaWeights, MixingMatrix, alpha_induced, example1_alpha, metropolis, spectral_gap
from .objectives import NoiseStream, QuadraticProblem, generate_quadratic
from .topology import Graph, build_complete, build_ring, build_torus

__version__ = "0.1.0"
