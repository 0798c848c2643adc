"""Monte Carlo laboratory for critical and nearcritical planar percolation."""

from .lattice import AnnulusRegion, Lattice, LatticeSpec, RectRegion, build_lattice, tiles_in_annulus, tiles_in_disk
from .sampling import (
    Configuration,
    CouplingSample,
    ProbabilityField,
    SwitchSchedule,
    hybrid_configuration,
    sample_configuration,
    sample_coupled_pair,
    switch_probability,
)

__version__ = "0.1.0"

__all__ = [
    "AnnulusRegion",
    "Configuration",
    "CouplingSample",
    "Lattice",
    "LatticeSpec",
    "ProbabilityField",
    "RectRegion",
    "SwitchSchedule",
    "build_lattice",
    "hybrid_configuration",
    "sample_configuration",
    "sample_coupled_pair",
    "switch_probability",
    "tiles_in_annulus",
    "tiles_in_disk",
]
