"""Glioblastoma growth simulator: Fisher-Kolmogorov on voxel data with exponential Euler.

Units are fixed throughout the package: lengths in mm, times in days,
diffusivities in mm^2/day, proliferation rate in 1/day.
"""

from gliosim.core import (
    ConfigError,
    DataError,
    DiffusionField,
    Grid,
    Material,
    MaterialVolume,
    NumericalError,
    ScalarField,
    SimConfig,
    global_index,
    grid_coords,
    load_config,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DiffusionField",
    "Grid",
    "Material",
    "MaterialVolume",
    "NumericalError",
    "ScalarField",
    "SimConfig",
    "global_index",
    "grid_coords",
    "load_config",
]

__version__ = "0.1.0"
