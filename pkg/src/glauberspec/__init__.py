"""Spectral analysis and kinetic Monte Carlo for disordered Glauber dynamics."""
from glauberspec._backend import BACKEND
from glauberspec.lattice import (DisorderField, Lattice, build_lattice, constant_disorder,
                                 derive_seed, ring, sample_disorder)

__version__ = "0.1.0"

__all__ = ["BACKEND", "DisorderField", "Lattice", "build_lattice", "constant_disorder",
           "derive_seed", "ring", "sample_disorder", "__version__"]
