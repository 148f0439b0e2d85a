"""Spectral-Galerkin simulator for a stochastic activator-inhibitor system.

Modules:
    spectral     Neumann eigenbasis, multipliers, quadrature
    fields       nodal/modal fields, norms, nonlinear algebra
    noise        Q-Wiener increment tables (counter-based, reproducible)
    dynamics     Ito/Stratonovich exponential time stepping
    functionals  xi = 1/v, Lyapunov functionals, growth monitors
    experiments  Picard fixed point, uniqueness study, ensembles
    config/io/cli  run configuration, file formats, command line
"""

__version__ = "0.1.0"

from .dynamics import ModelParams, SchemeConfig, SimState, steady_state
from .fields import Field, FieldPair
from .functionals import FunctionalConfig
from .noise import NoisePath, NoiseSpec, sample_path
from .spectral import DomainSpec, SpectralBasis, build_basis

__all__ = [
    "DomainSpec",
    "SpectralBasis",
    "build_basis",
    "Field",
    "FieldPair",
    "NoiseSpec",
    "NoisePath",
    "sample_path",
    "ModelParams",
    "SchemeConfig",
    "SimState",
    "steady_state",
    "FunctionalConfig",
    "__version__",
]
