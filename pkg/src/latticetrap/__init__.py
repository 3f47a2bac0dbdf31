"""Design and characterization tools for 2D lattices of planar RF ion microtraps."""

from latticetrap.geometry import (
    YB174,
    PAPER_DRIVE,
    BreakdownLimits,
    Electrode,
    ElectrodeLayout,
    HexLatticeSpec,
    IonSpecies,
    PolygonRegion,
    RfDrive,
    build_hex_lattice_layout,
    check_voltage_budget,
    load_layout,
    modified_lattice_spec,
    paper_lattice_spec,
    save_layout,
    scale_layout,
    validate_layout,
)

__version__ = "0.1.0"

__all__ = [
    "YB174",
    "PAPER_DRIVE",
    "BreakdownLimits",
    "Electrode",
    "ElectrodeLayout",
    "HexLatticeSpec",
    "IonSpecies",
    "PolygonRegion",
    "RfDrive",
    "build_hex_lattice_layout",
    "check_voltage_budget",
    "load_layout",
    "modified_lattice_spec",
    "paper_lattice_spec",
    "save_layout",
    "scale_layout",
    "validate_layout",
    "__version__",
]
