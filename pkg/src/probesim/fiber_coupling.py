"""Angle-polished fiber model: exit-ray geometry, Gaussian fiber mode,
overlap integrals against grating fields, and 6-DOF misalignment sweeps.

The transverse problem separates: the grating controls the profile along the
propagation direction (x), while the lateral direction (y) is a waveguide
cosine mode coupling to the fiber Gaussian.  Angular misalignments act as
thin-phase ramps; out-of-plane offsets Fresnel-propagate the grating field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from . import grating_design
from .errors import DegenerateInputError, RefractionError, SweepError
from .fdtd2d import FieldMap2D

ANGLE_SWEEP_LIMIT_DEG = 5.0
OFFSET_SWEEP_LIMIT = 30e-6


@dataclass(frozen=True)
class FiberSpec:
    """Angle-polished single-mode fiber."""

    mode_field_diameter: float = 10.4e-6
    core_index: float = grating_design.N_FIBER
    polish_angle_deg: float = 41.2

    def __post_init__(self):
        if self.mode_field_diameter <= 0:
            raise ValueError("mode_field_diameter must be positive")
        if not 0.0 < self.polish_angle_deg < 90.0:
            raise ValueError("polish angle must lie in (0, 90) degrees")


@dataclass(frozen=True)
class FiberPose:
    """6-DOF pose relative to the nominal working point (all zeros)."""

    offset_x: float = 0.0
    offset_y: float = 0.0
    offset_z: float = 0.0
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0
    rotation_deg: float = 0.0


@dataclass(frozen=True)
class CouplingResult:
    eta: float
    component_breakdown: grating_design.EfficiencyBudget


@dataclass(frozen=True)
class SweepCurve:
    """One alignment-tolerance curve: efficiency vs a single DOF offset."""

    dof: str
    offsets: np.ndarray
    eta: np.ndarray


# ---------------------------------------------------------------------------
# Polish geometry


def incidence_angle_from_polish(polish_angle_deg, n_fiber=grating_design.N_FIBER):
    """Exit angle in air (degrees from normal) of the retro-reflected beam.

    The guided ray reflects off the polished facet and leaves through the
    glass-air interface at asin(n_fiber * sin(90 deg - 2 * polish_angle)).
    """
    theta_p = math.radians(polish_angle_deg)
    # Total internal reflection must hold at the polished facet.
    facet_incidence = math.pi / 2.0 - theta_p
    critical = math.asin(1.0 / n_fiber)
    if facet_incidence < critical:
        raise RefractionError(
            "polish angle %.2f deg leaves the facet below the critical angle "
            "(%.2f deg): the beam refracts out instead of reflecting"
            % (polish_angle_deg, math.degrees(math.pi / 2 - critical))
        )
    s = n_fiber * math.sin(math.pi / 2.0 - 2.0 * theta_p)
    if abs(s) > 1.0:
        raise RefractionError(
            "n sin(90 - 2*%.2f deg) = %.3f: no propagating exit ray"
            % (polish_angle_deg, s)
        )
    return math.degrees(math.asin(s))


# ---------------------------------------------------------------------------
# Field overlap machinery


def _resample_onto(field: FieldMap2D, coords: np.ndarray) -> np.ndarray:
    if field.sample_coordinates.shape == coords.shape and np.allclose(
            field.sample_coordinates, coords, rtol=0, atol=1e-15):
        return field.complex_amplitude
    re = np.interp(coords, field.sample_coordinates, field.complex_amplitude.real,
                   left=0.0, right=0.0)
    im = np.interp(coords, field.sample_coordinates, field.complex_amplitude.imag,
                   left=0.0, right=0.0)
    return re + 1j * im


def overlap(field_a: FieldMap2D, field_b: FieldMap2D) -> float:
    """Normalized power overlap |<a, b>|^2 / (<a, a><b, b>) on a common grid."""
    x = field_a.sample_coordinates
    a = field_a.complex_amplitude
    b = _resample_onto(field_b, x)
    pa = np.trapezoid(np.abs(a) ** 2, x)
    pb = np.trapezoid(np.abs(b) ** 2, x)
    if pa <= 0.0 or pb <= 0.0:
        raise DegenerateInputError("overlap of a zero-power field is undefined")
    cross = np.trapezoid(a * np.conj(b), x)
    return float(np.abs(cross) ** 2 / (pa * pb))


def power_centroid(field: FieldMap2D) -> float:
    """Center of gravity of |amplitude|^2 along the monitor line."""
    x = field.sample_coordinates
    w = np.abs(field.complex_amplitude) ** 2
    total = np.trapezoid(w, x)
    if total <= 0.0:
        raise DegenerateInputError("power centroid of a zero field is undefined")
    return float(np.trapezoid(w * x, x) / total)


def fiber_mode(spec: FiberSpec, pose: FiberPose, plane: FieldMap2D,
               nominal_center=None, nominal_angle_deg=None) -> FieldMap2D:
    """Fiber Gaussian projected on the monitor plane, tilt phase included.

    The nominal spot centers on the power centroid of `plane` and the nominal
    tilt is the polish-determined exit angle; the pose adds translation and a
    pitch phase ramp.  Unit-power normalized.
    """
    if nominal_center is None:
        nominal_center = power_centroid(plane)
    if nominal_angle_deg is None:
        nominal_angle_deg = incidence_angle_from_polish(
            spec.polish_angle_deg, spec.core_index)
    x = plane.sample_coordinates
    lam = 299792458.0 / plane.frequency
    k = 2.0 * math.pi / lam
    w0 = spec.mode_field_diameter / 2.0
    x0 = nominal_center + pose.offset_x
    tilt = math.radians(nominal_angle_deg + pose.pitch_deg)
    amp = np.exp(-((x - x0) / w0) ** 2) * np.exp(1j * k * math.sin(tilt) * (x - x0))
    norm = math.sqrt(np.trapezoid(np.abs(amp) ** 2, x))
    return FieldMap2D(
        plane_position=plane.plane_position,
        sample_coordinates=x,
        complex_amplitude=amp / norm,
        frequency=plane.frequency,
    )


def overlap_y(waveguide_width, mfd, offset=0.0, tilt_ky=0.0, npts=8001):
    """Lateral overlap of the waveguide cosine mode with the fiber Gaussian.

    The fundamental lateral mode is cos(pi y / w_y) inside the width and zero
    outside (evanescent tails neglected).  `offset` displaces the Gaussian,
    `tilt_ky` adds a linear phase ramp exp(i k_y y).
    """
    if waveguide_width <= 0 or mfd <= 0:
        raise ValueError("waveguide width and MFD must be positive")
    w0 = mfd / 2.0
    span = max(waveguide_width / 2.0, 3.0 * w0) + abs(offset)
    y = np.linspace(-span, span, npts)
    mode = np.where(np.abs(y) <= waveguide_width / 2.0,
                    np.cos(np.pi * y / waveguide_width), 0.0)
    gauss = np.exp(-((y - offset) / w0) ** 2) * np.exp(1j * tilt_ky * y)
    num = np.abs(np.trapezoid(mode * np.conj(gauss), y)) ** 2
    den = np.trapezoid(mode**2, y) * np.trapezoid(np.abs(gauss) ** 2, y)
    return float(num / den)


# ---------------------------------------------------------------------------
# Fresnel (angular-spectrum) propagation of the monitor-line field


def angular_spectrum_propagate(field: FieldMap2D, dz: float,
                               medium_index=1.0) -> FieldMap2D:
    """Propagate the complex line field by `dz` along +z in a uniform medium."""
    x = field.sample_coordinates
    steps = np.diff(x)
    if not np.allclose(steps, steps[0], rtol=1e-6):
        raise ValueError("angular-spectrum propagation needs a uniform grid")
    dx = float(steps[0])
    n = x.size
    pad = 2 * n
    amp = np.zeros(n + 2 * pad, dtype=complex)
    amp[pad:pad + n] = field.complex_amplitude
    kx = 2.0 * math.pi * np.fft.fftfreq(amp.size, d=dx)
    lam = 299792458.0 / field.frequency
    k = 2.0 * math.pi * medium_index / lam
    kz = np.sqrt((k**2 - kx**2).astype(complex))
    # Decaying evanescent branch for propagation toward +z.
    kz = np.where(kz.imag < 0, -kz, kz)
    spec = np.fft.fft(amp) * np.exp(1j * kz * dz)
    out = np.fft.ifft(spec)[pad:pad + n]
    return FieldMap2D(
        plane_position=field.plane_position + dz,
        sample_coordinates=x,
        complex_amplitude=out,
        frequency=field.frequency,
    )


def _gaussian_overlap_1d(alpha1, alpha2):
    """Power overlap of exp(-alpha1 x^2) with exp(-alpha2 x^2) (complex alphas)."""
    return float(2.0 * math.sqrt(alpha1.real * alpha2.real)
                 / abs(alpha1 + np.conj(alpha2)))


def matched_gaussian_waist(waveguide_width, wavelength=None):
    """Waist of the Gaussian that best overlaps the cosine lateral mode."""
    res = minimize_scalar(
        lambda w: -overlap_y(waveguide_width, 2.0 * w, npts=2001),
        bounds=(0.05 * waveguide_width, 2.0 * waveguide_width), method="bounded",
        options={"xatol": 1e-10})
    return float(res.x)


def lateral_overlap_vs_z(waveguide_width, mfd, z, wavelength):
    """Lateral overlap factor after the beams separate by `z`.

    The cosine near field is represented by its overlap-matched Gaussian and
    propagated analytically; the result is referenced to the exact cosine
    overlap at z = 0 so only the z-dependence comes from the Gaussian model.
    """
    w_fiber = mfd / 2.0
    w_eff = matched_gaussian_waist(waveguide_width)
    k = 2.0 * math.pi / wavelength
    zr = k * w_eff**2 / 2.0
    wz = w_eff * math.sqrt(1.0 + (z / zr) ** 2)
    inv_r = z / (z**2 + zr**2) if z != 0 else 0.0
    alpha_g = 1.0 / wz**2 - 0.5j * k * inv_r
    alpha_f = 1.0 / w_fiber**2 + 0.0j
    ratio = (_gaussian_overlap_1d(alpha_g, alpha_f)
             / _gaussian_overlap_1d(1.0 / w_eff**2 + 0.0j, alpha_f))
    return overlap_y(waveguide_width, mfd) * ratio


# ---------------------------------------------------------------------------
# Tolerance sweeps


def _eta_components(spec, nominal_field, pose, waveguide_width, fiber_plane=None):
    """(eta_x, eta_y) for a pose, thin-phase model."""
    grating = fiber_plane if fiber_plane is not None else nominal_field
    fib = fiber_mode(spec, pose, grating,
                     nominal_center=power_centroid(nominal_field))
    eta_x = overlap(grating, fib)
    lam = 299792458.0 / nominal_field.frequency
    k = 2.0 * math.pi / lam
    nominal_tilt = math.radians(incidence_angle_from_polish(
        spec.polish_angle_deg, spec.core_index))
    # Lateral tilt: fiber-axis rotation swings the beam sideways at full k,
    # yaw only rotates the in-plane k-component (weaker by sin(tilt)).
    ky = k * (math.sin(math.radians(pose.rotation_deg)) * math.cos(nominal_tilt)
              + math.sin(math.radians(pose.yaw_deg)) * math.sin(nominal_tilt))
    eta_y = overlap_y(waveguide_width, spec.mode_field_diameter,
                      offset=pose.offset_y, tilt_ky=ky)
    return eta_x, eta_y


def _reoptimized_eta(spec, nominal_field, pose, waveguide_width):
    """Translation-reoptimized efficiency at a fixed angular pose."""
    def neg_eta_x(x0):
        p = replace(pose, offset_x=x0)
        fib = fiber_mode(spec, p, nominal_field)
        return -overlap(nominal_field, fib)

    def neg_eta_y(y0):
        _, ey = _eta_components(spec, nominal_field,
                                replace(pose, offset_y=y0), waveguide_width)
        return -ey

    bound = 10e-6
    rx = minimize_scalar(neg_eta_x, bounds=(-bound, bound), method="bounded",
                         options={"xatol": 1e-10})
    ry = minimize_scalar(neg_eta_y, bounds=(-bound, bound), method="bounded",
                         options={"xatol": 1e-10})
    if not (rx.success and ry.success):
        raise SweepError("translation re-optimization failed at pose %r" % (pose,))
    return float(-rx.fun * -ry.fun)


def tolerance_sweep(spec: FiberSpec, nominal_field: FieldMap2D, dof: str,
                    sweep_range, steps: int,
                    waveguide_width=grating_design.WAVEGUIDE_WIDTH,
                    wavelength=None) -> SweepCurve:
    """Efficiency curve against one degree of freedom.

    Angular DOFs re-optimize the transverse position at every point; the
    curve is normalized so its peak equals the zero-pose efficiency.
    """
    lo, hi = sweep_range
    angular = dof in ("yaw", "pitch", "rotation")
    if angular and max(abs(lo), abs(hi)) > ANGLE_SWEEP_LIMIT_DEG:
        raise ValueError("angle sweep beyond +/- %g deg exceeds the thin-phase "
                         "model validity" % ANGLE_SWEEP_LIMIT_DEG)
    if dof in ("x", "y", "z") and max(abs(lo), abs(hi)) > OFFSET_SWEEP_LIMIT:
        raise ValueError("offset sweep beyond +/- %g m exceeds the model "
                         "validity" % OFFSET_SWEEP_LIMIT)
    if dof == "z" and lo < 0:
        raise ValueError("z sweep requires the fiber above the grating (z >= 0)")

    offsets = np.linspace(lo, hi, steps)
    eta = np.empty_like(offsets)
    ex0, ey0 = _eta_components(spec, nominal_field, FiberPose(), waveguide_width)
    eta_nominal = ex0 * ey0

    for i, val in enumerate(offsets):
        if dof == "x":
            pose = FiberPose(offset_x=val)
            ex, ey = _eta_components(spec, nominal_field, pose, waveguide_width)
            eta[i] = ex * ey
        elif dof == "y":
            pose = FiberPose(offset_y=val)
            ex, ey = _eta_components(spec, nominal_field, pose, waveguide_width)
            eta[i] = ex * ey
        elif dof == "z":
            eta[i] = _eta_at_height(spec, nominal_field, val, waveguide_width)
        elif dof == "pitch":
            eta[i] = _reoptimized_eta(spec, nominal_field,
                                      FiberPose(pitch_deg=val), waveguide_width)
        elif dof == "yaw":
            eta[i] = _reoptimized_eta(spec, nominal_field,
                                      FiberPose(yaw_deg=val), waveguide_width)
        elif dof == "rotation":
            eta[i] = _reoptimized_eta(spec, nominal_field,
                                      FiberPose(rotation_deg=val), waveguide_width)
        else:
            raise ValueError("unknown dof %r" % dof)

    peak = float(eta.max())
    if peak <= 0.0:
        raise SweepError("sweep produced no coupling anywhere in range")
    return SweepCurve(dof=dof, offsets=offsets, eta=eta * (eta_nominal / peak))


def _eta_at_height(spec, nominal_field, z, waveguide_width):
    lam = 299792458.0 / nominal_field.frequency
    moved = angular_spectrum_propagate(nominal_field, z)
    fib = fiber_mode(spec, FiberPose(), moved,
                     nominal_center=power_centroid(nominal_field))
    # Recenter on the walked-off beam: the fiber tracks transversally.
    def neg(x0):
        f = fiber_mode(spec, FiberPose(offset_x=x0), moved,
                       nominal_center=power_centroid(nominal_field))
        return -overlap(moved, f)
    res = minimize_scalar(neg, bounds=(-30e-6, 30e-6), method="bounded",
                          options={"xatol": 1e-10})
    eta_x = float(-res.fun) if res.success else overlap(moved, fib)
    eta_y = lateral_overlap_vs_z(waveguide_width, spec.mode_field_diameter, z, lam)
    return eta_x * eta_y


def z_dependence(spec: FiberSpec, nominal_field: FieldMap2D, z_range,
                 steps=31, waveguide_width=grating_design.WAVEGUIDE_WIDTH
                 ) -> SweepCurve:
    """Efficiency against out-of-plane separation (fiber above grating)."""
    lo, hi = z_range
    if lo < 0:
        raise ValueError("z_dependence requires z >= 0")
    zs = np.linspace(lo, hi, steps)
    eta = np.array([_eta_at_height(spec, nominal_field, z, waveguide_width)
                    for z in zs])
    return SweepCurve(dof="z", offsets=zs, eta=eta)


def gaussian_curve_diameter(offsets, eta):
    """1/e^2 diameter of a Gaussian fitted to an efficiency curve.

    Fits ln(eta/peak) = -d^2 / sigma^2 by linear least squares over points
    above 2 percent of the peak; the 1/e^2 diameter is 2 * sqrt(2) * sigma.
    """
    offsets = np.asarray(offsets, dtype=float)
    eta = np.asarray(eta, dtype=float)
    peak = eta.max()
    center = offsets[np.argmax(eta)]
    mask = eta > 0.02 * peak
    d2 = (offsets[mask] - center) ** 2
    y = np.log(eta[mask] / peak)
    denom = float(np.dot(d2, d2))
    if denom == 0.0:
        raise ValueError("degenerate sweep: all offsets coincide")
    slope = float(np.dot(d2, y)) / denom
    if slope >= 0.0:
        raise ValueError("curve does not decay away from the peak")
    sigma = math.sqrt(-1.0 / slope)
    return 2.0 * math.sqrt(2.0) * sigma


# ---------------------------------------------------------------------------
# Composite result


def coupling_result(spec: FiberSpec, nominal_field: FieldMap2D,
                    directionality, taper=grating_design.TAPER_TRANSMISSION,
                    interface=None,
                    waveguide_width=grating_design.WAVEGUIDE_WIDTH,
                    pose: FiberPose = FiberPose()) -> CouplingResult:
    """End-to-end efficiency for a pose, with its multiplicative breakdown."""
    if interface is None:
        interface = grating_design.fresnel_interface_transmission(spec.core_index)
    eta_x, eta_y = _eta_components(spec, nominal_field, pose, waveguide_width)
    budget = grating_design.compose_budget(directionality, eta_x, eta_y,
                                           taper, interface)
    return CouplingResult(eta=budget.total_eta, component_breakdown=budget)
