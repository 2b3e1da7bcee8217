"""Hypergraph spectral signal processing: expansions, shift operators,
spectral similarity with certified perturbation bounds, graph/hypergraph
neural networks with transfer certificates, nonlinear diffusion data, and
random-graph spectrum studies."""

from . import diffusion, filters, gnn, henn, hypergraph, randgraph, spectral, train
from .errors import AssumptionError, ConfigError, NumericalError
from .hypergraph import Hypergraph, ShiftOperator, gso, incidence, normalized_laplacian
from .spectral import SimilarityReport, Spectrum, eigendecompose, spectral_similarity

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "ConfigError",
    "Hypergraph",
    "NumericalError",
    "ShiftOperator",
    "SimilarityReport",
    "Spectrum",
    "diffusion",
    "eigendecompose",
    "filters",
    "gnn",
    "gso",
    "henn",
    "hypergraph",
    "incidence",
    "normalized_laplacian",
    "randgraph",
    "spectral",
    "spectral_similarity",
    "train",
]
