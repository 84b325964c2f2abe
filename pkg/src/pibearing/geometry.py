"""Characteristic defect frequencies of rolling-element bearings."""

from __future__ import annotations

import math
from dataclasses import dataclass


class InvalidGeometryError(ValueError):
    """Bearing geometry violates a physical constraint."""


class InvalidInputError(ValueError):
    """Operating condition or frequency argument is out of range."""


@dataclass(frozen=True)
class BearingGeometry:
    """Rolling-element bearing dimensions.

    ``contact_angle_rad`` defaults to 0 (deep-groove ball bearing).
    """

    rolling_element_count: int
    element_diameter_mm: float
    pitch_diameter_mm: float
    contact_angle_rad: float = 0.0

    def __post_init__(self):
        if int(self.rolling_element_count) != self.rolling_element_count or self.rolling_element_count < 1:
            raise InvalidGeometryError(
                f"rolling_element_count must be a positive integer, got {self.rolling_element_count!r}"
            )
        if not self.element_diameter_mm > 0 or not self.pitch_diameter_mm > 0:
            raise InvalidGeometryError("element and pitch diameters must be positive")
        if not self.element_diameter_mm < self.pitch_diameter_mm:
            raise InvalidGeometryError(
                f"element diameter {self.element_diameter_mm} mm must be smaller than "
                f"pitch diameter {self.pitch_diameter_mm} mm"
            )
        if not 0.0 <= self.contact_angle_rad < math.pi / 2:
            raise InvalidGeometryError(f"contact angle {self.contact_angle_rad} rad outside [0, pi/2)")

    @property
    def diameter_ratio(self) -> float:
        """(d/D)·cos(φ), always in (0, 1) for a valid geometry."""
        return self.element_diameter_mm / self.pitch_diameter_mm * math.cos(self.contact_angle_rad)


#: Test bearing used throughout the Paderborn experiments (6203 deep-groove).
PADERBORN_6203 = BearingGeometry(8, 6.75, 28.55, 0.0)


@dataclass(frozen=True)
class OperatingCondition:
    shaft_speed_rpm: float
    load_torque_nm: float = 0.0
    radial_force_n: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not self.shaft_speed_rpm > 0:
            raise InvalidInputError(f"shaft speed must be positive, got {self.shaft_speed_rpm} rpm")
        if self.load_torque_nm < 0 or self.radial_force_n < 0:
            raise InvalidInputError("load torque and radial force must be nonnegative")


def shaft_frequency(cond: OperatingCondition) -> float:
    """Shaft rotational frequency in Hz."""
    if not cond.shaft_speed_rpm > 0:
        raise InvalidInputError(f"shaft speed must be positive, got {cond.shaft_speed_rpm} rpm")
    return cond.shaft_speed_rpm / 60.0


def _check(geom: BearingGeometry, f_r: float) -> None:
    if not isinstance(geom, BearingGeometry):
        raise InvalidGeometryError(f"expected BearingGeometry, got {type(geom).__name__}")
    if not f_r > 0:
        raise InvalidInputError(f"shaft frequency must be positive, got {f_r}")


def bpfo(geom: BearingGeometry, f_r: float) -> float:
    """Ball pass frequency, outer race: ``(n/2)·f_r·(1 − (d/D)·cos φ)``."""
    _check(geom, f_r)
    return 0.5 * geom.rolling_element_count * f_r * (1.0 - geom.diameter_ratio)


def bpfi(geom: BearingGeometry, f_r: float) -> float:
    """Ball pass frequency, inner race: ``(n/2)·f_r·(1 + (d/D)·cos φ)``."""
    _check(geom, f_r)
    return 0.5 * geom.rolling_element_count * f_r * (1.0 + geom.diameter_ratio)


def parse_condition_label(label: str) -> OperatingCondition:
    """Decode a Paderborn-style label such as ``N15_M07_F10``.

    N is speed in hundreds of rpm, M is load torque in tenths of Nm and F is
    radial force in hundreds of N.
    """
    try:
        n, m, f = label.split("_")
        if n[0] != "N" or m[0] != "M" or f[0] != "F":
            raise ValueError
        return OperatingCondition(int(n[1:]) * 100.0, int(m[1:]) / 10.0, int(f[1:]) * 100.0, label)
    except (ValueError, IndexError):
        raise InvalidInputError(f"cannot parse operating condition label {label!r}") from None
