"""Simulation and verification of measurement-based quantum feedback control."""

from .states import (
    DensityMatrix,
    HermitianOperator,
    MeasurementChannel,
    StateBlowUp,
    SystemModel,
    TargetState,
    distance,
    dissipator,
    innovation_superop,
    purity,
    von_neumann_entropy,
)

__version__ = "0.1.0"
