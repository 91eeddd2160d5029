"""Quasi-static AC magnetic field of the coplanar waveguide, plus the
power / current conversion, insertion-loss budget, and cryostat heating.

Conductors run along y on the z = 0 plane: the center pin straddles x = 0
and each ground plane returns half the current.  Every conductor is split
into parallel line filaments and the field is the Biot-Savart superposition
of infinite lines, valid while the geometry is far smaller than the
microwave wavelength.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import GeometryError, TimingError

if TYPE_CHECKING:  # pragma: no cover - annotation only
    from .spin_dynamics import PulseSequence

MU0 = 4.0e-7 * math.pi
TESLA_TO_GAUSS = 1e4
DEFAULT_FREQUENCY = 1.76e9

# Default evaluation point on the sample surface.  The probe holds the CPW
# one fiber diameter above the chip; the cavity sits near the diced front
# edge rather than exactly under the pin center, so the canonical point
# carries a lateral offset (a centered point sees a pure in-plane field).
SAMPLE_STANDOFF = 125e-6
SAMPLE_X_OFFSET = 50e-6


@dataclass(frozen=True)
class CpwGeometry:
    center_width: float = 50e-6
    gap: float = 5e-6
    ground_width: float = 500e-6
    metal_thickness: float = 1e-6
    standoff_dz: float = SAMPLE_STANDOFF
    characteristic_impedance: float = 50.0

    def __post_init__(self):
        for name in ("center_width", "gap", "ground_width", "metal_thickness",
                     "characteristic_impedance"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        if self.standoff_dz < 0:
            raise ValueError("standoff must be >= 0")

    def conductor_spans(self):
        w2 = self.center_width / 2.0
        g0 = w2 + self.gap
        return [(-w2, w2), (g0, g0 + self.ground_width),
                (-g0 - self.ground_width, -g0)]


@dataclass(frozen=True)
class AcFieldVector:
    """AC magnetic field in spherical magnitude-angle form.

    theta is measured from the sample normal (z), phi from x in the sample
    plane.  An AC field is defined up to sign; vectors are canonicalized to
    the Bz >= 0 hemisphere.
    """

    magnitude_B: float
    polar_theta_deg: float
    azimuth_phi_deg: float
    reference_power: float
    frequency: float = DEFAULT_FREQUENCY

    def __post_init__(self):
        if self.magnitude_B < 0:
            raise ValueError("field magnitude must be >= 0")
        if not 0.0 <= self.polar_theta_deg <= 180.0:
            raise ValueError("theta must lie in [0, 180] degrees")
        if not -180.0 < self.azimuth_phi_deg <= 180.0:
            raise ValueError("phi must lie in (-180, 180] degrees")

    def direction(self) -> np.ndarray:
        th = math.radians(self.polar_theta_deg)
        ph = math.radians(self.azimuth_phi_deg)
        return np.array([math.sin(th) * math.cos(ph),
                         math.sin(th) * math.sin(ph),
                         math.cos(th)])


@dataclass(frozen=True)
class ThermalModel:
    slope_mk_per_mw: float = 3.6
    base_temperature: float = 540.0
    stage_cooling_power: float = 0.07

    def __post_init__(self):
        if self.slope_mk_per_mw < 0:
            raise ValueError("heating slope must be >= 0")


@dataclass(frozen=True)
class HeatingReport:
    rise_mk: float
    naive_bound_mk: float
    final_temperature_mk: float


# ---------------------------------------------------------------------------
# Current and filaments


def peak_current(power: float, impedance: float) -> float:
    """Peak sinusoidal current on a matched line, sqrt(2 P / Z0)."""
    if power < 0:
        raise ValueError("power must be >= 0")
    if impedance <= 0:
        raise ValueError("impedance must be positive")
    return math.sqrt(2.0 * power / impedance)


def _filament_positions(lo, hi, n, distribution):
    if distribution == "uniform":
        return np.linspace(lo, hi, n, endpoint=False) + (hi - lo) / (2.0 * n)
    if distribution == "edge":
        # Chebyshev nodes realize the 1/sqrt(1-(2x/w)^2) edge crowding with
        # equal filament currents.
        j = np.arange(n)
        return 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(
            math.pi * (j + 0.5) / n)
    raise ValueError("unknown current distribution %r" % distribution)


def filaments(geometry: CpwGeometry, power: float, n_filaments: int = 64,
              distribution: str = "uniform"):
    """Filament x-positions and signed currents; net current is zero."""
    ipk = peak_current(power, geometry.characteristic_impedance)
    spans = geometry.conductor_spans()
    xs, cur = [], []
    for k, (lo, hi) in enumerate(spans):
        pos = _filament_positions(lo, hi, n_filaments, distribution)
        sign = 1.0 if k == 0 else -0.5
        xs.append(pos)
        cur.append(np.full(n_filaments, sign * ipk / n_filaments))
    return np.concatenate(xs), np.concatenate(cur)


def field_components(geometry: CpwGeometry, power: float, point,
                     n_filaments: int = 64, distribution: str = "uniform"):
    """(Bx, By, Bz) in gauss at `point` = (x, y, z) from the pin center."""
    x, y, z = point
    zf = geometry.metal_thickness / 2.0
    if 0.0 <= z <= geometry.metal_thickness:
        for lo, hi in geometry.conductor_spans():
            if lo <= x <= hi:
                raise GeometryError("point (%.3g, %.3g, %.3g) lies inside a "
                                    "conductor" % (x, y, z))
    xs, cur = filaments(geometry, power, n_filaments, distribution)
    dx = x - xs
    dz = z - zf
    r2 = dx**2 + dz**2
    pref = MU0 * cur / (2.0 * math.pi * r2)
    bx = np.sum(pref * dz)
    bz = np.sum(pref * -dx)
    return bx * TESLA_TO_GAUSS, 0.0, bz * TESLA_TO_GAUSS


def _spherical(bx, by, bz, power, frequency):
    mag = math.sqrt(bx**2 + by**2 + bz**2)
    if mag == 0.0:
        return AcFieldVector(0.0, 90.0, 0.0, power, frequency)
    atol = 1e-12 * mag
    if bz < -atol or (abs(bz) <= atol and bx < 0):
        bx, by, bz = -bx, -by, -bz
    theta = math.degrees(math.acos(max(-1.0, min(1.0, bz / mag))))
    phi = math.degrees(math.atan2(by, bx))
    if phi <= -180.0:
        phi += 360.0
    return AcFieldVector(mag, theta, phi, power, frequency)


def field_at_point(geometry: CpwGeometry, power: float, point,
                   n_filaments: int = 64, distribution: str = "uniform",
                   frequency: float = DEFAULT_FREQUENCY) -> AcFieldVector:
    """AC field vector at a 3D offset from the pin-center surface point."""
    bx, by, bz = field_components(geometry, power, point, n_filaments,
                                  distribution)
    return _spherical(bx, by, bz, power, frequency)


def sample_point(geometry: CpwGeometry, x_offset: float = SAMPLE_X_OFFSET):
    """The canonical sample-surface evaluation point."""
    return (x_offset, 0.0, -geometry.standoff_dz)


def field_profile(geometry: CpwGeometry, power: float, dz_range,
                  n_filaments: int = 64, distribution: str = "uniform"):
    """(dz, |B| in gauss) on the symmetry axis below the pin."""
    dz = np.asarray(dz_range, dtype=float)
    if np.any(dz <= 0):
        raise ValueError("dz values must be positive")
    mags = np.empty_like(dz)
    for i, d in enumerate(dz):
        bx, by, bz = field_components(geometry, power, (0.0, 0.0, -d),
                                      n_filaments, distribution)
        mags[i] = math.sqrt(bx**2 + by**2 + bz**2)
    return dz, mags


# ---------------------------------------------------------------------------
# Budgets


def insertion_loss_budget(segments):
    """Sum per-segment dB losses; returns (total_db, linear_transmission)."""
    total = 0.0
    for label, loss_db in segments:
        if loss_db < 0:
            raise ValueError("segment %r has negative loss" % (label,))
        total += loss_db
    return total, 10.0 ** (-total / 10.0)


def heating(model: ThermalModel, average_power_mw: float) -> HeatingReport:
    """Stage temperature rise for an absorbed average power (mW)."""
    if average_power_mw < 0:
        raise ValueError("power must be >= 0")
    rise = model.slope_mk_per_mw * average_power_mw
    naive = (average_power_mw / model.stage_cooling_power
             if model.stage_cooling_power > 0 else math.inf)
    return HeatingReport(rise_mk=rise, naive_bound_mk=naive,
                         final_temperature_mk=model.base_temperature + rise)


def duty_cycle_power(sequence: "PulseSequence", peak_power_w: float):
    """(average power in mW, duty cycle) of a repeated pulse sequence."""
    on_time = sequence.pi_pulse_count * sequence.pi_duration
    if on_time > sequence.repetition_period:
        raise TimingError(
            "pulse on-time %.3g s exceeds the repetition period %.3g s"
            % (on_time, sequence.repetition_period))
    duty = on_time / sequence.repetition_period
    return peak_power_w * duty * 1e3, duty


# ---------------------------------------------------------------------------
# Export


def export_field_map_csv(geometry: CpwGeometry, power: float, points, path,
                         n_filaments: int = 64, distribution: str = "uniform"):
    """CSV of cartesian field components at a list of points."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_m", "y_m", "z_m", "Bx_G", "By_G", "Bz_G"])
        for p in points:
            bx, by, bz = field_components(geometry, power, p, n_filaments,
                                          distribution)
            writer.writerow([repr(float(p[0])), repr(float(p[1])),
                             repr(float(p[2])), repr(bx), repr(by), repr(bz)])
