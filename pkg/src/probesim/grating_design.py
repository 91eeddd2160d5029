"""Apodized subwavelength grating synthesis and coupling-efficiency budget.

The grating is described period by period: each period carries an effective
material index realized by a triangular photonic-crystal hole pattern, a pitch
chosen to keep the diffraction angle constant, and the hole diameter that
realizes the index.  A simple effective-medium mixing rule maps hole size to
index; it is pluggable so a higher-order rule can be swapped in.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ApodizationError, GeometryError, ModeError

# Default material and geometry values for the flagship coupler design.
N_SILICON = 3.48
N_YSO = 1.78
N_AIR = 1.0
N_FIBER = 1.47
DEVICE_THICKNESS = 220e-9
DESIGN_WAVELENGTH = 1536e-9
LATTICE_CONSTANT = 215e-9
TARGET_ANGLE_DEG = 11.3
FIRST_PERIOD_INDEX = 3.05
INDEX_STEP = -0.054
PERIOD_COUNT = 20
DUTY_CYCLE = 0.5
WAVEGUIDE_WIDTH = 12.6e-6
TAPER_TRANSMISSION = 0.962


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class GratingSpec:
    """Geometric description of the apodized subwavelength coupler."""

    lattice_constant_a: float = LATTICE_CONSTANT
    n_si: float = N_SILICON
    first_period_index_n1: float = FIRST_PERIOD_INDEX
    index_step_dn: float = INDEX_STEP
    period_count: int = PERIOD_COUNT
    duty_cycle_D: float = DUTY_CYCLE
    design_wavelength: float = DESIGN_WAVELENGTH
    target_angle_deg: float = TARGET_ANGLE_DEG
    waveguide_width_wy: float = WAVEGUIDE_WIDTH

    def __post_init__(self):
        if not self.lattice_constant_a < self.design_wavelength:
            raise GeometryError(
                "lattice constant %.3g m is not subwavelength (wavelength %.3g m)"
                % (self.lattice_constant_a, self.design_wavelength)
            )
        if not 0.0 < self.duty_cycle_D < 1.0:
            raise ValueError("duty cycle must lie in (0, 1)")
        if self.period_count < 1:
            raise ValueError("period_count must be >= 1")


@dataclass(frozen=True)
class GratingPeriod:
    """One period of the apodized schedule."""

    index_ni: float
    pitch_m: float
    hole_diameter_m: float
    duty_cycle: float


@dataclass(frozen=True)
class ApodizationSchedule:
    """Per-period index / pitch / hole-diameter records, input end first."""

    periods: tuple[GratingPeriod, ...]

    def __post_init__(self):
        for i, p in enumerate(self.periods):
            if p.pitch_m <= 0:
                raise ApodizationError("period %d has non-positive pitch" % (i + 1))
            if not 0.0 < p.duty_cycle < 1.0:
                raise ApodizationError("period %d duty cycle outside (0, 1)" % (i + 1))

    def __len__(self):
        return len(self.periods)

    @property
    def total_length(self) -> float:
        return float(sum(p.pitch_m for p in self.periods))

    @property
    def indices(self) -> np.ndarray:
        return np.array([p.index_ni for p in self.periods])

    @property
    def pitches(self) -> np.ndarray:
        return np.array([p.pitch_m for p in self.periods])


@dataclass(frozen=True)
class EfficiencyBudget:
    """Multiplicative coupling-efficiency breakdown."""

    directionality_D: float
    overlap_x_Ox: float
    overlap_y_Oy: float
    taper_transmission: float
    interface_transmission: float
    total_eta: float


# ---------------------------------------------------------------------------
# Effective-medium mapping between hole diameter and index


def triangular_fill_fraction(d_over_a: float) -> float:
    """Hole area fraction of a triangular lattice with one hole per cell."""
    return math.pi * d_over_a**2 / (2.0 * math.sqrt(3.0))


def permittivity_mixing(fill: float, n_si: float, n_fill: float) -> float:
    """Zeroth-order mixing: average the permittivities by fill fraction."""
    eps = fill * n_fill**2 + (1.0 - fill) * n_si**2
    return math.sqrt(eps)


def index_mixing(fill: float, n_si: float, n_fill: float) -> float:
    """Alternative rule: average the refractive indices by fill fraction."""
    return fill * n_fill + (1.0 - fill) * n_si


def effective_index_from_hole(d_over_a, n_si=N_SILICON, n_fill=N_AIR,
                              rule=permittivity_mixing):
    """Effective index of the hole-patterned silicon slab.

    Parameters
    ----------
    d_over_a : float
        Hole diameter over lattice constant, in [0, 1).
    n_si, n_fill : float
        Indices of the patterned slab material and the hole filling.
    rule : callable(fill, n_si, n_fill) -> n_eff
        Mixing rule; `permittivity_mixing` by default.
    """
    if d_over_a < 0.0 or d_over_a >= 1.0:
        raise GeometryError(
            "d/a = %.4g: holes must satisfy 0 <= d/a < 1 (adjacent holes touch at 1)"
            % d_over_a
        )
    if n_fill < 1.0:
        raise ValueError("hole filling index must be >= 1")
    return rule(triangular_fill_fraction(d_over_a), n_si, n_fill)


def hole_for_effective_index(n_eff, n_si=N_SILICON, n_fill=N_AIR):
    """Invert `effective_index_from_hole` (permittivity rule) for d/a."""
    if not n_fill <= n_eff <= n_si:
        raise GeometryError(
            "target index %.4g outside the reachable range [%.4g, %.4g]"
            % (n_eff, n_fill, n_si)
        )
    fill = (n_si**2 - n_eff**2) / (n_si**2 - n_fill**2)
    d_over_a = math.sqrt(2.0 * math.sqrt(3.0) * fill / math.pi)
    if d_over_a >= 1.0:
        raise GeometryError(
            "index %.4g needs d/a = %.3f >= 1 (holes would overlap)" % (n_eff, d_over_a)
        )
    return d_over_a


# ---------------------------------------------------------------------------
# Slab waveguide fundamental TE mode


def slab_modal_index(core_index, core_thickness, wavelength,
                     substrate_index, cladding_index, tol=1e-9):
    """Effective index of the fundamental TE slab mode.

    Solves the asymmetric three-layer phase condition

        k_t d - atan(gamma_s / k_t) - atan(gamma_c / k_t) = 0

    by bisection on the effective index, to `tol`.

    Raises
    ------
    ModeError
        If the core does not exceed both bounding indices or the fundamental
        mode is cut off at this thickness.
    """
    n_lo = max(substrate_index, cladding_index)
    if core_index <= n_lo:
        raise ModeError(
            "core index %.4g does not exceed bounding indices (max %.4g)"
            % (core_index, n_lo)
        )
    k0 = 2.0 * math.pi / wavelength

    def phase(n_eff):
        kt = k0 * math.sqrt(max(core_index**2 - n_eff**2, 0.0))
        gs = k0 * math.sqrt(max(n_eff**2 - substrate_index**2, 0.0))
        gc = k0 * math.sqrt(max(n_eff**2 - cladding_index**2, 0.0))
        if kt == 0.0:
            return -math.pi
        return kt * core_thickness - math.atan(gs / kt) - math.atan(gc / kt)

    lo = n_lo * (1.0 + 1e-12) + 1e-12
    hi = core_index * (1.0 - 1e-12)
    if phase(lo) <= 0.0:
        raise ModeError(
            "fundamental TE mode is cut off: core %.4g, thickness %.3g m, "
            "wavelength %.3g m" % (core_index, core_thickness, wavelength)
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phase(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def make_guided_index_model(core_thickness=DEVICE_THICKNESS,
                            wavelength=DESIGN_WAVELENGTH,
                            substrate_index=N_YSO,
                            cladding_index=N_AIR):
    """Map a slab material index to its fundamental TE modal index.

    Below the fundamental-mode cutoff the returned model falls back to the
    larger bounding index: the mode index approaches that limit continuously
    at cutoff, and segments this weak are short radiative sections of a
    grating rather than standalone guides.
    """
    floor = max(substrate_index, cladding_index)

    def model(material_index: float) -> float:
        try:
            return slab_modal_index(material_index, core_thickness, wavelength,
                                    substrate_index, cladding_index)
        except ModeError:
            return floor

    return model


# ---------------------------------------------------------------------------
# Schedule synthesis


def build_schedule(spec: GratingSpec, guided_index_model) -> ApodizationSchedule:
    """Synthesize the apodized schedule for `spec`.

    Each period index follows the linear ladder n_i = n_1 + (i-1) dn.  The
    pitch solves the first-order grating equation

        pitch_i * (n_mode_i - sin(theta_d)) = wavelength

    where n_mode_i duty-cycle-averages the modal indices of the patterned and
    unpatterned segments given by `guided_index_model`.  Hole diameters come
    from the inverse effective-medium lookup.
    """
    lam = spec.design_wavelength
    sin_t = math.sin(math.radians(spec.target_angle_deg))
    duty = spec.duty_cycle_D
    n_mode_si = guided_index_model(spec.n_si)

    periods = []
    n_mode_max = 0.0
    for i in range(1, spec.period_count + 1):
        ni = spec.first_period_index_n1 + (i - 1) * spec.index_step_dn
        if not 1.0 < ni <= spec.n_si:
            raise ApodizationError(
                "period %d index %.4g leaves the physical range (1, %.4g]"
                % (i, ni, spec.n_si)
            )
        n_mode = duty * guided_index_model(ni) + (1.0 - duty) * n_mode_si
        n_mode_max = max(n_mode_max, n_mode)
        if n_mode <= sin_t:
            raise ApodizationError(
                "period %d modal index %.4g cannot phase-match %.1f deg"
                % (i, n_mode, spec.target_angle_deg)
            )
        pitch = lam / (n_mode - sin_t)
        d_over_a = hole_for_effective_index(ni, spec.n_si, N_AIR)
        periods.append(GratingPeriod(
            index_ni=ni,
            pitch_m=pitch,
            hole_diameter_m=d_over_a * spec.lattice_constant_a,
            duty_cycle=duty,
        ))

    # Subwavelength guard: the photonic-crystal pitch must stay below the
    # guided wavelength everywhere, or the pattern diffracts in plane.
    if spec.lattice_constant_a >= lam / n_mode_max:
        raise GeometryError(
            "lattice constant %.3g m is not subwavelength against the guided "
            "wavelength %.3g m" % (spec.lattice_constant_a, lam / n_mode_max)
        )
    return ApodizationSchedule(periods=tuple(periods))


def first_period_index_for_pitch(pitch, spec: GratingSpec, guided_index_model,
                                 bracket=(1.001, None), tol=1e-12):
    """Material index whose duty-averaged modal index phase-matches `pitch`.

    Utility for reproducing the non-apodized starting design: returns n such
    that pitch * (n_mode(n) - sin(theta_d)) = wavelength.
    """
    lam = spec.design_wavelength
    sin_t = math.sin(math.radians(spec.target_angle_deg))
    duty = spec.duty_cycle_D
    n_mode_si = guided_index_model(spec.n_si)
    target = lam / pitch + sin_t

    def f(n):
        return duty * guided_index_model(n) + (1.0 - duty) * n_mode_si - target

    lo = bracket[0]
    hi = bracket[1] if bracket[1] is not None else spec.n_si
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ApodizationError(
            "no material index in [%.3g, %.3g] phase-matches pitch %.3g m"
            % (lo, hi, pitch)
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) * flo <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Efficiency budget


def fresnel_interface_transmission(n: float) -> float:
    """Power transmission of a normal-incidence interface against air."""
    r = (n - 1.0) / (n + 1.0)
    return 1.0 - r * r


def compose_budget(directionality, overlap_x, overlap_y, taper,
                   interface) -> EfficiencyBudget:
    """Multiply the five efficiency factors into a total."""
    factors = {
        "directionality": directionality,
        "overlap_x": overlap_x,
        "overlap_y": overlap_y,
        "taper": taper,
        "interface": interface,
    }
    for name, value in factors.items():
        if not 0.0 <= value <= 1.0:
            raise ValueError("%s = %.4g outside [0, 1]" % (name, value))
    total = directionality * overlap_x * overlap_y * taper * interface
    return EfficiencyBudget(
        directionality_D=directionality,
        overlap_x_Ox=overlap_x,
        overlap_y_Oy=overlap_y,
        taper_transmission=taper,
        interface_transmission=interface,
        total_eta=total,
    )


# ---------------------------------------------------------------------------
# Schedule CSV round trip


def export_schedule_csv(schedule: ApodizationSchedule, path):
    """Write the schedule as CSV; floats use repr so imports are bit-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "n_i", "pitch_m", "hole_diameter_m", "duty"])
        for i, p in enumerate(schedule.periods, start=1):
            writer.writerow([i, repr(p.index_ni), repr(p.pitch_m),
                             repr(p.hole_diameter_m), repr(p.duty_cycle)])


def import_schedule_csv(path) -> ApodizationSchedule:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["period", "n_i", "pitch_m", "hole_diameter_m", "duty"]:
        raise ValueError("%s is not a schedule CSV" % path)
    periods = tuple(
        GratingPeriod(index_ni=float(r[1]), pitch_m=float(r[2]),
                      hole_diameter_m=float(r[3]), duty_cycle=float(r[4]))
        for r in rows[1:]
    )
    return ApodizationSchedule(periods=periods)


def default_grating_spec(**overrides) -> GratingSpec:
    """The flagship coupler design parameters."""
    return GratingSpec(**overrides)
