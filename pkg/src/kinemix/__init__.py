"""Discrete-velocity simulator and verification engine for perturbative gas-mixture kinetics."""
from kinemix.mixture import (
    MacroBasis,
    MixtureParams,
    VelocityGrid,
    build_basis,
    inner_product_I,
    maxwellian,
    weighted_norm,
)

__all__ = [
    "MacroBasis",
    "MixtureParams",
    "VelocityGrid",
    "build_basis",
    "inner_product_I",
    "maxwellian",
    "weighted_norm",
]
__version__ = "0.1.0"
