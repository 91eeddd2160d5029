"""Reflection-spectrum models and fits: one-sided cavity dip, interference
fringes between the coupler back-reflection and the cavity, and the sqrt(R)
one-way efficiency estimator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import ExtractionError, FitError

C0 = 299792458.0

# Off-resonant reflectance level corresponding to a one-way efficiency of
# 0.462 via eta = sqrt(R); used as the default measured-baseline scale.
MEASURED_BASELINE_R = 0.2134


@dataclass(frozen=True)
class CavitySpec:
    """One-port cavity: resonance, quality factor, and input coupling share."""

    resonance_wavelength: float = 1536e-9
    quality_factor: float = 6e4
    coupling_ratio: float = 0.5

    def __post_init__(self):
        if self.quality_factor <= 0:
            raise ValueError("quality factor must be positive")
        if not 0.0 <= self.coupling_ratio <= 1.0:
            raise ValueError("coupling ratio must lie in [0, 1]")

    @property
    def kappa(self) -> float:
        """Energy decay rate (angular FWHM), omega_0 / Q."""
        omega0 = 2.0 * math.pi * C0 / self.resonance_wavelength
        return omega0 / self.quality_factor


@dataclass(frozen=True)
class FringeSpec:
    """Two-mirror composition: coupler back-reflection against the cavity.

    `gc_reflectivity` is either a constant fraction or a callable of
    wavelength; `path_length` and `group_index` set the round-trip phase.
    """

    gc_reflectivity: object = 0.005
    path_length: float = 185e-6
    group_index: float = 4.0

    def __post_init__(self):
        if self.path_length <= 0:
            raise ValueError("path length must be positive")

    def r_gc(self, wavelength) -> np.ndarray:
        if callable(self.gc_reflectivity):
            r = np.asarray(self.gc_reflectivity(wavelength), dtype=float)
        else:
            r = np.full_like(np.asarray(wavelength, dtype=float),
                             float(self.gc_reflectivity))
        if np.any(r < 0) or np.any(r >= 1):
            raise ValueError("coupler reflectivity must lie in [0, 1)")
        return r


@dataclass(eq=False)
class ReflectionSpectrum:
    wavelengths: np.ndarray
    reflectance: np.ndarray

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=float)
        self.reflectance = np.asarray(self.reflectance, dtype=float)
        if self.wavelengths.shape != self.reflectance.shape:
            raise ValueError("wavelength and reflectance arrays differ in length")
        if np.any(self.reflectance < -1e-12) or np.any(self.reflectance > 1 + 1e-12):
            raise ValueError("reflectance outside [0, 1]")


# ---------------------------------------------------------------------------
# Forward models


def cavity_amplitude(cavity: CavitySpec, wavelength) -> np.ndarray:
    """Complex reflection amplitude r = 1 - 2(k_in/k) / (1 + 2i delta / k)."""
    lam = np.asarray(wavelength, dtype=float)
    omega = 2.0 * math.pi * C0 / lam
    omega0 = 2.0 * math.pi * C0 / cavity.resonance_wavelength
    x = 2.0 * (omega - omega0) / cavity.kappa
    return 1.0 - 2.0 * cavity.coupling_ratio / (1.0 + 1j * x)


def cavity_reflectance(cavity: CavitySpec, wavelength):
    """Measured power reflectance of the one-port cavity."""
    r = cavity_amplitude(cavity, wavelength)
    out = np.abs(r) ** 2
    return float(out) if np.isscalar(wavelength) else out


def fringe_spectrum(fringes: FringeSpec, cavity: CavitySpec, wavelengths,
                    efficiency_scale: float = 1.0) -> ReflectionSpectrum:
    """Reflection spectrum with standing-wave fringes against the cavity.

    The coupler back-reflects amplitude r1 = sqrt(R_GC) on the waveguide
    side; light bouncing between it and the cavity resums to

        R(lambda) = scale * |r_cav|^2 / |1 - r1 r_cav e^{i psi}|^2

    with round-trip phase psi = 4 pi n_g L / lambda.  `efficiency_scale` is
    the measured off-resonant baseline (one-way efficiency squared); 1 by
    default so the R_GC = 0 limit returns the bare cavity spectrum.  The
    reduced model assumes weak back-reflection; outputs clip at unity.
    """
    if not 0.0 <= efficiency_scale <= 1.0:
        raise ValueError("efficiency scale must lie in [0, 1]")
    lam = np.asarray(wavelengths, dtype=float)
    r1 = np.sqrt(fringes.r_gc(lam))
    r2 = cavity_amplitude(cavity, lam)
    psi = 4.0 * math.pi * fringes.group_index * fringes.path_length / lam
    denom = 1.0 - r1 * r2 * np.exp(1j * psi)
    refl = efficiency_scale * np.abs(r2) ** 2 / np.abs(denom) ** 2
    return ReflectionSpectrum(wavelengths=lam, reflectance=np.minimum(refl, 1.0))


def fringe_period(wavelength, path_length, group_index) -> float:
    """Free spectral range of the standing-wave fringes."""
    return wavelength**2 / (2.0 * group_index * path_length)


def eta_from_reflection(off_resonant_reflectance) -> float:
    """One-way coupling efficiency from the off-resonant reflectance."""
    r = float(off_resonant_reflectance)
    if not 0.0 <= r <= 1.0:
        raise ValueError("reflectance must lie in [0, 1]")
    return math.sqrt(r)


# ---------------------------------------------------------------------------
# Lorentzian dip fit


def _dip_model(params, lam):
    lam0, q, eta, base = params
    omega = 2.0 * math.pi * C0 / lam
    omega0 = 2.0 * math.pi * C0 / lam0
    x = 2.0 * q * (omega - omega0) / omega0
    r = 1.0 - 2.0 * eta / (1.0 + 1j * x)
    return base * np.abs(r) ** 2, r, x, omega, omega0


def _dip_residuals(params, lam, data):
    model, _, _, _, _ = _dip_model(params, lam)
    return model - data


def _dip_jacobian(params, lam, data):
    lam0, q, eta, base = params
    model, r, x, omega, omega0 = _dip_model(params, lam)
    denom = 1.0 + 1j * x
    dr_deta = -2.0 / denom
    dr_dx = 2.0j * eta / denom**2
    # x = 2 q (omega/omega0 - 1); omega0 = 2 pi c / lam0.
    dx_dq = 2.0 * (omega / omega0 - 1.0)
    dx_dlam0 = 2.0 * q * omega / (omega0 * lam0)
    re = lambda dr: 2.0 * base * (np.conj(r) * dr).real
    jac = np.empty((lam.size, 4))
    jac[:, 0] = re(dr_dx * dx_dlam0)
    jac[:, 1] = re(dr_dx * dx_dq)
    jac[:, 2] = re(dr_deta)
    jac[:, 3] = model / base
    return jac


def fit_lorentzian(spectrum: ReflectionSpectrum):
    """Fit the one-port cavity model to a measured dip.

    Returns (resonance_wavelength, quality_factor, coupling_ratio,
    rms_residual).  The baseline is a free multiplicative parameter.
    Raises FitError when no dip is present or the fit does not converge.
    """
    lam = spectrum.wavelengths
    data = spectrum.reflectance
    if data.min() > 0.95:
        raise FitError("no dip detected: minimum reflectance %.3f > 0.95"
                       % data.min())

    i_min = int(np.argmin(data))
    lam0 = lam[i_min]
    edge = max(3, lam.size // 10)
    base = float(np.median(np.concatenate([data[:edge], data[-edge:]])))
    base = max(base, data.min() + 1e-6)
    depth_ratio = max(data[i_min] / base, 0.0)
    eta0 = (1.0 - math.sqrt(depth_ratio)) / 2.0
    half = 0.5 * (base + data[i_min])
    below = np.where(data < half)[0]
    if below.size >= 2:
        fwhm = abs(lam[below[-1]] - lam[below[0]])
    else:
        fwhm = abs(lam[1] - lam[0]) * 3
    q0 = lam0 / max(fwhm, 1e-15)

    result = least_squares(
        _dip_residuals, x0=[lam0, q0, eta0, base], jac=_dip_jacobian,
        args=(lam, data), method="lm", xtol=1e-10, ftol=1e-10, gtol=1e-12,
        max_nfev=200 * 4)
    if not result.success:
        raise FitError("dip fit did not converge: final residual %.3g"
                       % float(np.sqrt(np.mean(result.fun**2))))
    lam_fit, q_fit, eta_fit, _ = result.x
    rms = float(np.sqrt(np.mean(result.fun**2)))
    return float(lam_fit), float(q_fit), float(eta_fit), rms


# ---------------------------------------------------------------------------
# Bandwidth extraction


def one_db_bandwidth(wavelengths, values) -> float:
    """Width of the band where `values` stays within 1 dB of its peak."""
    lam = np.asarray(wavelengths, dtype=float)
    val = np.asarray(values, dtype=float)
    order = np.argsort(lam)
    lam, val = lam[order], val[order]
    peak = val.max()
    level = peak * 10.0 ** (-0.1)
    above = val >= level

    i_pk = int(np.argmax(val))
    if above[0] and above[-1]:
        raise ExtractionError("curve never drops 1 dB below the peak in band")

    def crossing(i, j):
        # linear interpolation of the level crossing between samples i, j
        return lam[i] + (level - val[i]) * (lam[j] - lam[i]) / (val[j] - val[i])

    lo = lam[0]
    for i in range(i_pk, 0, -1):
        if not above[i - 1]:
            lo = crossing(i - 1, i)
            break
    hi = lam[-1]
    for i in range(i_pk, lam.size - 1):
        if not above[i + 1]:
            hi = crossing(i + 1, i)
            break
    return float(hi - lo)


# ---------------------------------------------------------------------------
# CSV round trip


def export_spectrum_csv(spectrum: ReflectionSpectrum, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength_nm", "reflectance"])
        for lam, r in zip(spectrum.wavelengths, spectrum.reflectance):
            writer.writerow([repr(lam * 1e9), repr(r)])


def import_spectrum_csv(path) -> ReflectionSpectrum:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["wavelength_nm", "reflectance"]:
        raise ValueError("%s is not a spectrum CSV" % path)
    lam = np.array([float(r[0]) * 1e-9 for r in rows[1:]])
    refl = np.array([float(r[1]) for r in rows[1:]])
    return ReflectionSpectrum(wavelengths=lam, reflectance=refl)
