"""
pibearing: physics-informed bearing fault diagnosis.

Characteristic defect frequencies, envelope-spectrum features, a multimodal
late-fusion 1D CNN trained with a physics-penalized loss, transfer learning
across operating conditions and a statistical evaluation suite, all testable
against a synthetic bearing-signal generator.
"""

__version__ = "0.1.0"

from .geometry import PADERBORN_6203, BearingGeometry, OperatingCondition, bpfi, bpfo, shaft_frequency
from .nn import BACKEND

__all__ = [
    "BACKEND",
    "PADERBORN_6203",
    "BearingGeometry",
    "OperatingCondition",
    "__version__",
    "bpfi",
    "bpfo",
    "shaft_frequency",
]
