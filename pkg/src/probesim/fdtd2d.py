"""2D finite-difference time-domain solver for the grating coupler.

Transverse-electric field set (Ey, Hx, Hz) on a Yee grid in the xz-plane:
x runs along the waveguide, z is the stacking direction.  The guided slab
mode is injected as a soft line source; convolutional PML terminates all
four sides.  Flux monitors are normalized against a straight-waveguide
reference run, and the back-reflection is isolated by projecting the
reference-subtracted field onto the guided mode profile.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import grating_design
from .errors import SizingError, StabilityError, ExtractionError, ModeError

C0 = 299792458.0
ETA0 = 376.73031346177066  # vacuum impedance, ohms
EPS0 = 8.8541878128e-12

# Layout margins around the grating (meters).
_SOURCE_MARGIN = 0.6e-6
_REFL_MARGIN = 0.8e-6
_INPUT_GUIDE = 1.2e-6
_TRANS_MARGIN = 0.8e-6
_EDGE_PAD = 0.6e-6
_SUBSTRATE_DEPTH = 1.2e-6
_MONITOR_HEIGHT = 1.0e-6
_DOWN_MONITOR_DEPTH = 0.7e-6
_TOP_PAD = 0.6e-6


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class LayerStack:
    """Layers bottom (substrate) to top (cladding); outer layers semi-infinite."""

    layers: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.layers) < 2:
            raise ValueError("a stack needs at least substrate and cladding")
        for n, t in self.layers:
            if n < 1.0:
                raise ValueError("refractive index %.3g below 1" % n)
            if t != math.inf and t <= 0.0:
                raise ValueError("finite layer thickness must be positive")
        if self.layers[0][1] != math.inf or self.layers[-1][1] != math.inf:
            raise ValueError("substrate and cladding must be semi-infinite")

    @property
    def substrate_index(self) -> float:
        return self.layers[0][0]

    @property
    def cladding_index(self) -> float:
        return self.layers[-1][0]

    @property
    def finite_layers(self) -> tuple[tuple[float, float], ...]:
        return self.layers[1:-1]

    @property
    def core_thickness(self) -> float:
        return float(sum(t for _, t in self.finite_layers))


def default_stack() -> LayerStack:
    """Silicon device layer transferred onto YSO, air above."""
    return LayerStack(layers=(
        (grating_design.N_YSO, math.inf),
        (grating_design.N_SILICON, grating_design.DEVICE_THICKNESS),
        (grating_design.N_AIR, math.inf),
    ))


@dataclass(frozen=True)
class SimDomain:
    extent_x: float
    extent_z: float
    grid_step: float = 20e-9
    pml_cells: int = 10
    courant_factor: float = 0.5
    max_steps: int = 60000
    shutoff_threshold: float = 1e-5

    def __post_init__(self):
        if self.pml_cells < 8:
            raise ValueError("pml_cells must be >= 8")
        if not 0.0 < self.courant_factor <= 1.0 / math.sqrt(2.0):
            raise ValueError("courant_factor must lie in (0, 1/sqrt(2)] in 2D")
        for extent in (self.extent_x, self.extent_z):
            ratio = extent / self.grid_step
            if abs(ratio - round(ratio)) > 1e-6:
                raise ValueError("grid_step must divide the domain extents")

    @property
    def nx(self) -> int:
        return int(round(self.extent_x / self.grid_step)) + 1

    @property
    def nz(self) -> int:
        return int(round(self.extent_z / self.grid_step)) + 1

    @property
    def dt(self) -> float:
        return self.courant_factor * self.grid_step / C0


@dataclass(eq=False)
class FieldMap2D:
    """Complex field sampled along a monitor line at one frequency."""

    plane_position: float
    sample_coordinates: np.ndarray
    complex_amplitude: np.ndarray
    frequency: float

    def __post_init__(self):
        self.sample_coordinates = np.asarray(self.sample_coordinates, dtype=float)
        self.complex_amplitude = np.asarray(self.complex_amplitude, dtype=complex)
        if self.sample_coordinates.shape != self.complex_amplitude.shape:
            raise ValueError("coordinate and amplitude arrays differ in length")
        if np.any(np.diff(self.sample_coordinates) <= 0):
            raise ValueError("sample coordinates must be strictly increasing")


@dataclass(frozen=True)
class FluxReport:
    up_fraction: float
    down_fraction: float
    reflected_fraction: float
    transmitted_fraction: float
    frequency: float
    converged: bool = True

    @property
    def closure(self) -> float:
        return (self.up_fraction + self.down_fraction
                + self.reflected_fraction + self.transmitted_fraction)


@dataclass(frozen=True)
class ModeSource:
    """Fundamental TE slab mode, Gaussian pulse in time."""

    stack: LayerStack
    center_wavelength: float = grating_design.DESIGN_WAVELENGTH
    bandwidth: float = 200e-9
    amplitude: float = 1.0

    @property
    def sigma_f(self) -> float:
        return C0 * (self.bandwidth / 2.0) / self.center_wavelength**2

    def spectral_support(self, wavelength: float) -> bool:
        f = C0 / wavelength
        f0 = C0 / self.center_wavelength
        return abs(f - f0) <= 2.5 * self.sigma_f


@dataclass(frozen=True)
class Monitor:
    """A straight monitor line.

    Horizontal kinds ('up', 'down'): position is z, (lo, hi) is the x span.
    Vertical kinds ('reflection', 'transmission'): position is x, (lo, hi)
    is the z span.
    """

    kind: str
    position: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("up", "down", "reflection", "transmission"):
            raise ValueError("unknown monitor kind %r" % self.kind)


@dataclass(frozen=True)
class Layout:
    """Grid-snapped positions of the source, grating, and monitors."""

    source_x: float
    refl_x: float
    grating_x0: float
    grating_x1: float
    trans_x: float
    device_base_z: float
    device_top_z: float
    up_z: float
    down_z: float


# ---------------------------------------------------------------------------
# Geometry


def _snap(value: float, step: float) -> float:
    return round(value / step) * step


def plan_layout(domain: SimDomain, stack: LayerStack,
                grating_length: float) -> Layout:
    dx = domain.grid_step
    pml = domain.pml_cells * dx
    source_x = _snap(pml + _SOURCE_MARGIN, dx)
    refl_x = _snap(source_x + _REFL_MARGIN, dx)
    grating_x0 = _snap(refl_x + _INPUT_GUIDE, dx)
    grating_x1 = grating_x0 + grating_length
    trans_x = _snap(grating_x1 + _TRANS_MARGIN, dx)
    needed = trans_x + _EDGE_PAD + pml
    if needed > domain.extent_x + 1e-12:
        raise SizingError(
            "schedule does not fit: domain extent_x = %.3g m, need %.3g m "
            "(short by %.3g m)" % (domain.extent_x, needed,
                                   needed - domain.extent_x))
    device_base_z = _snap(pml + _SUBSTRATE_DEPTH, dx)
    device_top_z = device_base_z + stack.core_thickness
    up_z = _snap(device_top_z + _MONITOR_HEIGHT, dx)
    down_z = _snap(device_base_z - _DOWN_MONITOR_DEPTH, dx)
    needed_z = up_z + _TOP_PAD + pml
    if needed_z > domain.extent_z + 1e-12:
        raise SizingError(
            "stack does not fit: domain extent_z = %.3g m, need %.3g m "
            "(short by %.3g m)" % (domain.extent_z, needed_z,
                                   needed_z - domain.extent_z))
    return Layout(source_x=source_x, refl_x=refl_x, grating_x0=grating_x0,
                  grating_x1=grating_x1, trans_x=trans_x,
                  device_base_z=device_base_z, device_top_z=device_top_z,
                  up_z=up_z, down_z=down_z)


def default_domain(schedule, stack: LayerStack,
                   grid_step=20e-9, **kwargs) -> SimDomain:
    """Domain just large enough for the schedule with standard margins."""
    glen = schedule.total_length if schedule is not None and len(schedule) else 0.0
    pml_cells = kwargs.pop("pml_cells", 10)
    pml = pml_cells * grid_step
    ex = (pml + _SOURCE_MARGIN + _REFL_MARGIN + _INPUT_GUIDE + glen
          + _TRANS_MARGIN + _EDGE_PAD + pml)
    ez = (pml + _SUBSTRATE_DEPTH + stack.core_thickness + _MONITOR_HEIGHT
          + _TOP_PAD + pml)
    nx = math.ceil(ex / grid_step) + 4
    nz = math.ceil(ez / grid_step) + 4
    return SimDomain(extent_x=nx * grid_step, extent_z=nz * grid_step,
                     grid_step=grid_step, pml_cells=pml_cells, **kwargs)


def build_permittivity(stack: LayerStack, schedule, domain: SimDomain,
                       swg_first: bool = True) -> np.ndarray:
    """Relative permittivity on the Yee grid (nx, nz), nodes at i*dx, k*dz.

    Outside the grating the device layer is unpatterned; inside, each period
    splits into a patterned segment of index n_i covering `duty * pitch` and
    an unpatterned remainder.  `swg_first` puts the patterned segment on the
    input side of each period.
    """
    glen = schedule.total_length if schedule is not None and len(schedule) else 0.0
    layout = plan_layout(domain, stack, glen)
    dx = domain.grid_step
    nx, nz = domain.nx, domain.nz
    z = np.arange(nz) * dx

    # Background layering.
    eps_col = np.full(nz, stack.substrate_index**2)
    z0 = layout.device_base_z
    for n, t in stack.finite_layers:
        sel = (z >= z0 - 1e-15) & (z < z0 + t - 1e-15)
        eps_col[sel] = n**2
        z0 += t
    eps_col[z >= z0 - 1e-15] = stack.cladding_index**2
    eps = np.tile(eps_col, (nx, 1))

    if schedule is None or not len(schedule):
        return eps

    dev_sel = (z >= layout.device_base_z - 1e-15) & (z < layout.device_top_z - 1e-15)
    x = np.arange(nx) * dx
    x_start = layout.grating_x0
    for p in schedule.periods:
        seg = p.duty_cycle * p.pitch_m
        if swg_first:
            lo, hi = x_start, x_start + seg
        else:
            lo, hi = x_start + (p.pitch_m - seg), x_start + p.pitch_m
        cols = (x >= lo - 1e-15) & (x < hi - 1e-15)
        eps[np.ix_(cols, dev_sel)] = p.index_ni**2
        x_start += p.pitch_m
    return eps


# ---------------------------------------------------------------------------
# Slab mode profile for injection and projection


def slab_mode_profile(stack: LayerStack, z: np.ndarray, device_base_z: float,
                      wavelength: float) -> tuple[np.ndarray, float]:
    """Fundamental TE mode profile Ey(z) and its effective index.

    Requires a three-layer stack (one finite core).
    """
    if len(stack.finite_layers) != 1:
        raise ModeError("mode injection requires a single-core stack")
    n_core, t_core = stack.finite_layers[0]
    n_eff = grating_design.slab_modal_index(
        n_core, t_core, wavelength, stack.substrate_index, stack.cladding_index)
    k0 = 2.0 * math.pi / wavelength
    kt = k0 * math.sqrt(n_core**2 - n_eff**2)
    gs = k0 * math.sqrt(n_eff**2 - stack.substrate_index**2)
    gc = k0 * math.sqrt(n_eff**2 - stack.cladding_index**2)
    phi_s = math.atan2(gs, kt)
    z0, z1 = device_base_z, device_base_z + t_core
    prof = np.empty_like(z)
    below = z < z0
    inside = (z >= z0) & (z <= z1)
    above = z > z1
    prof[below] = math.cos(phi_s) * np.exp(gs * (z[below] - z0))
    prof[inside] = np.cos(kt * (z[inside] - z0) - phi_s)
    top = math.cos(kt * t_core - phi_s)
    prof[above] = top * np.exp(-gc * (z[above] - z1))
    norm = math.sqrt(np.trapezoid(prof**2, z))
    return prof / norm, n_eff


# ---------------------------------------------------------------------------
# CPML coefficients


def _cpml_profiles(npml: int, dx: float, dt: float, m: float = 3.0):
    """(b, a) recursion coefficients for the low-side PML strips.

    The E strip of width npml pairs slice index j with the field node j+1
    (node 0 is the PEC wall); the H strip pairs j with the half-node j+1/2.
    High-side strips use the same arrays reversed.
    """
    sigma_max = 0.8 * (m + 1.0) / (ETA0 * dx)

    def coeffs(depth):
        sigma = sigma_max * depth**m
        b = np.exp(-sigma * dt / EPS0)
        return b, b - 1.0

    d_e = (npml - 1.0 - np.arange(npml)) / npml
    d_h = (npml - 0.5 - np.arange(npml)) / npml
    return coeffs(d_e), coeffs(d_h)


class _Dft:
    """Running DFT of a field line at a set of angular frequencies."""

    def __init__(self, omegas: np.ndarray, npts: int):
        self.omegas = omegas
        self.acc = np.zeros((omegas.size, npts), dtype=complex)

    def add(self, values: np.ndarray, t: float, dt: float):
        self.acc += np.exp(1j * self.omegas * t)[:, None] * values[None, :] * dt


# ---------------------------------------------------------------------------
# Core engine


class _LineSet:
    """Cell-index description of the four standard monitor lines."""

    def __init__(self, monitors, domain: SimDomain):
        dx = domain.grid_step
        self.lines = {}
        kinds = set()
        for mon in monitors:
            kinds.add(mon.kind)
            i0 = int(round(mon.lo / dx))
            i1 = int(round(mon.hi / dx))
            ipos = int(round(mon.position / dx))
            self.lines[mon.kind] = (ipos, i0, i1)
        missing = {"up", "down", "reflection", "transmission"} - kinds
        if missing:
            raise ValueError("monitors missing: %s" % ", ".join(sorted(missing)))


def _simulate(eps: np.ndarray, domain: SimDomain, source_profile: np.ndarray,
              source_ix: int, omega0: float, tau: float, omegas: np.ndarray,
              lines: _LineSet, amplitude: float = 1.0):
    """Run the time stepping; return per-line DFTs and convergence info."""
    nx, nz = eps.shape
    dx = domain.grid_step
    dt = domain.dt
    npml = domain.pml_cells

    ey = np.zeros((nx, nz))
    hx = np.zeros((nx, nz - 1))
    hz = np.zeros((nx - 1, nz))
    ce = (C0 * dt) / eps
    cdt = C0 * dt

    (be, ae), (bh, ah) = _cpml_profiles(npml, dx, dt)
    be_r, ae_r, bh_r, ah_r = be[::-1], ae[::-1], bh[::-1], ah[::-1]

    # psi accumulators live only on the PML strips.
    psi_hx_zlo = np.zeros((nx, npml))
    psi_hx_zhi = np.zeros((nx, npml))
    psi_hz_xlo = np.zeros((npml, nz))
    psi_hz_xhi = np.zeros((npml, nz))
    psi_ey_zlo = np.zeros((nx, npml))
    psi_ey_zhi = np.zeros((nx, npml))
    psi_ey_xlo = np.zeros((npml, nz))
    psi_ey_xhi = np.zeros((npml, nz))
    curl = np.zeros((nx, nz))

    dfts_e = {}
    dfts_h = {}
    for kind, (ipos, i0, i1) in lines.lines.items():
        npts = i1 - i0 + 1
        dfts_e[kind] = _Dft(omegas, npts)
        dfts_h[kind] = _Dft(omegas, npts)

    t0 = 5.0 * tau
    source_off_step = int(math.ceil((t0 + 6.0 * tau) / dt))
    peak_energy = 0.0
    converged = False
    n_steps = domain.max_steps

    for n in range(domain.max_steps):
        t_h = (n + 0.5) * dt

        # H update: d(eta0 H)/dt = +- c * dE/dx.
        dey_dz = (ey[:, 1:] - ey[:, :-1]) / dx
        psi_hx_zlo = bh[None, :] * psi_hx_zlo + ah[None, :] * dey_dz[:, :npml]
        psi_hx_zhi = bh_r[None, :] * psi_hx_zhi + ah_r[None, :] * dey_dz[:, -npml:]
        hx += cdt * dey_dz
        hx[:, :npml] += cdt * psi_hx_zlo
        hx[:, -npml:] += cdt * psi_hx_zhi

        dey_dx = (ey[1:, :] - ey[:-1, :]) / dx
        psi_hz_xlo = bh[:, None] * psi_hz_xlo + ah[:, None] * dey_dx[:npml, :]
        psi_hz_xhi = bh_r[:, None] * psi_hz_xhi + ah_r[:, None] * dey_dx[-npml:, :]
        hz -= cdt * dey_dx
        hz[:npml, :] -= cdt * psi_hz_xlo
        hz[-npml:, :] -= cdt * psi_hz_xhi

        # E update.
        t_e = (n + 1.0) * dt
        curl.fill(0.0)
        dhx_dz = (hx[:, 1:] - hx[:, :-1]) / dx     # drives Ey node k = j + 1
        dhz_dx = (hz[1:, :] - hz[:-1, :]) / dx     # drives Ey node i = j + 1
        curl[:, 1:-1] += dhx_dz
        curl[1:-1, :] -= dhz_dx

        psi_ey_zlo = be[None, :] * psi_ey_zlo + ae[None, :] * dhx_dz[:, :npml]
        psi_ey_zhi = be_r[None, :] * psi_ey_zhi + ae_r[None, :] * dhx_dz[:, -npml:]
        curl[:, 1:npml + 1] += psi_ey_zlo
        curl[:, -npml - 1:-1] += psi_ey_zhi

        psi_ey_xlo = be[:, None] * psi_ey_xlo + ae[:, None] * dhz_dx[:npml, :]
        psi_ey_xhi = be_r[:, None] * psi_ey_xhi + ae_r[:, None] * dhz_dx[-npml:, :]
        curl[1:npml + 1, :] -= psi_ey_xlo
        curl[-npml - 1:-1, :] -= psi_ey_xhi

        ey += ce * curl
        ey[0, :] = ey[-1, :] = 0.0
        ey[:, 0] = ey[:, -1] = 0.0

        # Soft mode source.
        g = amplitude * math.exp(-((t_e - t0) / tau) ** 2) \
            * math.sin(omega0 * (t_e - t0))
        ey[source_ix, :] += g * source_profile

        # Monitor DFTs (E at integer steps, H at half steps).
        for kind, (ipos, i0, i1) in lines.lines.items():
            if kind in ("up", "down"):
                dfts_e[kind].add(ey[i0:i1 + 1, ipos], t_e, dt)
                h_avg = 0.5 * (hx[i0:i1 + 1, ipos - 1] + hx[i0:i1 + 1, ipos])
                dfts_h[kind].add(h_avg, t_h, dt)
            else:
                dfts_e[kind].add(ey[ipos, i0:i1 + 1], t_e, dt)
                h_avg = 0.5 * (hz[ipos - 1, i0:i1 + 1] + hz[ipos, i0:i1 + 1])
                dfts_h[kind].add(h_avg, t_h, dt)

        if n % 100 == 99:
            energy = float(np.sum(ey * ey) + np.sum(hx * hx) + np.sum(hz * hz))
            peak_energy = max(peak_energy, energy)
            if peak_energy > 0 and energy > 1e9 * peak_energy:
                raise StabilityError(
                    "field norm diverged at step %d; Courant factor %.3f "
                    "(2D stability bound 1/sqrt(2))"
                    % (n, domain.courant_factor))
            if (n > source_off_step and peak_energy > 0
                    and energy < domain.shutoff_threshold * peak_energy):
                converged = True
                n_steps = n + 1
                break

    if not converged:
        warnings.warn("FDTD run hit max_steps before reaching the shutoff "
                      "threshold; results may not be fully converged")
    return dfts_e, dfts_h, converged, n_steps


def _flux(e_acc: np.ndarray, h_acc: np.ndarray, dx: float) -> np.ndarray:
    """Time-averaged Poynting flux per frequency through a line.

    For horizontal lines pass the Hx DFT: S_z = -Re(Ey Hx*)/2.  For vertical
    lines pass the Hz DFT: S_x = +Re(Ey Hz*)/2.  Caller fixes the sign.
    """
    return 0.5 * np.sum((e_acc * np.conj(h_acc)).real, axis=1) * dx


def standard_monitors(domain: SimDomain, stack: LayerStack,
                      grating_length: float) -> list[Monitor]:
    layout = plan_layout(domain, stack, grating_length)
    dx = domain.grid_step
    z_lo = (domain.pml_cells + 2) * dx
    z_hi = domain.extent_z - (domain.pml_cells + 2) * dx
    return [
        Monitor("reflection", layout.refl_x, z_lo, z_hi),
        Monitor("transmission", layout.trans_x, z_lo, z_hi),
        Monitor("up", layout.up_z, layout.refl_x, layout.trans_x),
        Monitor("down", layout.down_z, layout.refl_x, layout.trans_x),
    ]


def run_fdtd(eps: np.ndarray, domain: SimDomain, source: ModeSource,
             monitors: list[Monitor], wavelength: float | None = None,
             _multi=None):
    """Simulate `eps`, normalize against the straight-waveguide reference.

    Returns (FluxReport, [FieldMap2D]) at the requested wavelength (source
    center by default).  The FieldMap2D is the reference-subtracted upward
    field on the 'up' monitor.
    """
    wavelengths = _multi if _multi is not None else [
        wavelength if wavelength is not None else source.center_wavelength]
    for lam in wavelengths:
        if not source.spectral_support(lam):
            raise ValueError(
                "wavelength %.4g m outside the source spectral support "
                "(center %.4g m, bandwidth %.4g m)"
                % (lam, source.center_wavelength, source.bandwidth))

    dx = domain.grid_step
    omegas = 2.0 * math.pi * C0 / np.asarray(wavelengths, dtype=float)
    omega0 = 2.0 * math.pi * C0 / source.center_wavelength
    tau = math.sqrt(2.0) / (2.0 * math.pi * source.sigma_f)

    lines = _LineSet(monitors, domain)
    layout = plan_layout(domain, source.stack, 0.0)
    source_ix = int(round(layout.source_x / dx))

    z = np.arange(domain.nz) * dx
    profile, _ = slab_mode_profile(source.stack, z, layout.device_base_z,
                                   source.center_wavelength)

    eps_ref = build_permittivity(source.stack, None, domain)
    ref_e, ref_h, _, _ = _simulate(eps_ref, domain, profile, source_ix,
                                   omega0, tau, omegas, lines,
                                   source.amplitude)
    dev_e, dev_h, converged, _ = _simulate(eps, domain, profile, source_ix,
                                           omega0, tau, omegas, lines,
                                           source.amplitude)

    # Injected power: reference flux through the transmission line.
    p_inc = _flux(ref_e["transmission"].acc, ref_h["transmission"].acc, dx)

    # Mode-decomposed reflection at the reflection line.
    _, r0, r1 = lines.lines["reflection"]
    phi = profile[r0:r1 + 1]
    phi_norm = np.trapezoid(phi * phi, dx=dx)
    a_inc = np.trapezoid(ref_e["reflection"].acc * phi[None, :],
                         dx=dx, axis=1) / phi_norm
    scat_refl = dev_e["reflection"].acc - ref_e["reflection"].acc
    a_back = np.trapezoid(scat_refl * phi[None, :], dx=dx, axis=1) / phi_norm
    refl = np.abs(a_back / a_inc) ** 2

    # Scattered-field flux up and down, total-field flux transmitted.
    # Horizontal lines: S_z = -Re(Ey Hx*)/2, i.e. minus the raw line flux;
    # 'up' counts +z power, 'down' counts -z power.
    up = -_flux_scattered(dev_e["up"], ref_e["up"], dev_h["up"], ref_h["up"], dx)
    down = _flux_scattered(dev_e["down"], ref_e["down"], dev_h["down"],
                           ref_h["down"], dx)
    trans = _flux(dev_e["transmission"].acc, dev_h["transmission"].acc, dx)

    reports = []
    fields = []
    _, u0, u1 = lines.lines["up"]
    up_x = np.arange(u0, u1 + 1) * dx
    up_scat = dev_e["up"].acc - ref_e["up"].acc
    for j, lam in enumerate(wavelengths):
        reports.append(FluxReport(
            up_fraction=float(up[j] / p_inc[j]),
            down_fraction=float(down[j] / p_inc[j]),
            reflected_fraction=float(refl[j]),
            transmitted_fraction=float(trans[j] / p_inc[j]),
            frequency=float(C0 / lam),
            converged=converged,
        ))
        fields.append(FieldMap2D(
            plane_position=layout.up_z,
            sample_coordinates=up_x,
            complex_amplitude=up_scat[j],
            frequency=float(C0 / lam),
        ))
    if _multi is None:
        return reports[0], fields
    return reports, fields


def _flux_scattered(dev_e, ref_e, dev_h, ref_h, dx):
    e = dev_e.acc - ref_e.acc
    h = dev_h.acc - ref_h.acc
    return 0.5 * np.sum((e * np.conj(h)).real, axis=1) * dx


def frequency_sweep(schedule, stack: LayerStack, domain: SimDomain,
                    wavelengths, source: ModeSource | None = None,
                    return_fields: bool = False):
    """Per-wavelength flux reports from a single broadband run."""
    if source is None:
        source = ModeSource(stack=stack)
    eps = build_permittivity(stack, schedule, domain)
    glen = schedule.total_length if schedule is not None and len(schedule) else 0.0
    monitors = standard_monitors(domain, stack, glen)
    reports, fields = run_fdtd(eps, domain, source, monitors,
                               _multi=list(wavelengths))
    if return_fields:
        return reports, fields
    return reports


# ---------------------------------------------------------------------------
# Diffraction angle


def extract_diffraction_angle(field: FieldMap2D) -> float:
    """Beam angle from the peak of the spatial-frequency spectrum (degrees).

    Positive angles tilt toward increasing x (the output-taper direction).
    """
    x = field.sample_coordinates
    steps = np.diff(x)
    if not np.allclose(steps, steps[0], rtol=1e-6):
        raise ValueError("angle extraction needs a uniform grid")
    dx = float(steps[0])
    amp = field.complex_amplitude
    n = amp.size
    nfft = 16 * int(2 ** math.ceil(math.log2(max(n, 16))))
    spec = np.fft.fft(amp, n=nfft)
    power = np.abs(spec) ** 2
    kx = 2.0 * math.pi * np.fft.fftfreq(nfft, d=dx)
    k0 = 2.0 * math.pi * field.frequency / C0

    peak = int(np.argmax(power))
    if abs(kx[peak]) > k0:
        raise ExtractionError(
            "spatial spectrum peaks outside the propagating window "
            "(|kx| = %.3g > k0 = %.3g): evanescent-dominated field"
            % (abs(kx[peak]), k0))

    # Parabolic refinement around the peak.
    dk = kx[1] - kx[0]
    pm = power[(peak - 1) % nfft]
    pp = power[(peak + 1) % nfft]
    denom = pm - 2.0 * power[peak] + pp
    frac = 0.0 if denom == 0 else 0.5 * (pm - pp) / denom
    k_peak = kx[peak] + frac * dk
    s = k_peak / k0
    if abs(s) > 1.0:
        raise ExtractionError("refined peak outside the propagating window")
    return math.degrees(math.asin(s))


# ---------------------------------------------------------------------------
# Grid and field export


def save_grid_csv(grid: np.ndarray, grid_step: float, path):
    """CSV export: header row of x coordinates, one row per z line."""
    nx, nz = grid.shape
    x = np.arange(nx) * grid_step
    with open(path, "w") as fh:
        fh.write(",".join(repr(v) for v in x) + "\n")
        for k in range(nz):
            fh.write(",".join(repr(v) for v in grid[:, k]) + "\n")


def load_grid_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        rows = [line.strip().split(",") for line in fh if line.strip()]
    x = np.array([float(v) for v in rows[0]])
    grid = np.array([[float(v) for v in row] for row in rows[1:]]).T
    return grid, x


def _binary_header(text: str) -> bytes:
    raw = text.encode("ascii")[:80]
    return raw + b" " * (80 - len(raw))


def save_grid_binary(grid: np.ndarray, grid_step: float, path,
                     description="permittivity"):
    """Little-endian float64 dump with an 80-byte ASCII header."""
    nx, nz = grid.shape
    header = _binary_header("probesim grid %s nx=%d nz=%d step=%.9e"
                            % (description, nx, nz, grid_step))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(grid, dtype="<f8").tobytes())


def load_grid_binary(path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        header = fh.read(80).decode("ascii")
        data = np.frombuffer(fh.read(), dtype="<f8")
    fields = dict(part.split("=") for part in header.split() if "=" in part)
    nx, nz = int(fields["nx"]), int(fields["nz"])
    return data.reshape(nx, nz), float(fields["step"])


def save_field_csv(fmap: FieldMap2D, path):
    """Header comments, coordinate header row, then real and imag rows."""
    with open(path, "w") as fh:
        fh.write("# plane_position_m=%s\n" % repr(fmap.plane_position))
        fh.write("# frequency_hz=%s\n" % repr(fmap.frequency))
        fh.write(",".join(repr(v) for v in fmap.sample_coordinates) + "\n")
        fh.write(",".join(repr(v) for v in fmap.complex_amplitude.real) + "\n")
        fh.write(",".join(repr(v) for v in fmap.complex_amplitude.imag) + "\n")


def load_field_csv(path) -> FieldMap2D:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, val = line[1:].split("=")
                meta[key.strip()] = float(val)
            else:
                rows.append([float(v) for v in line.split(",")])
    coords, re, im = (np.array(r) for r in rows[:3])
    return FieldMap2D(plane_position=meta["plane_position_m"],
                      sample_coordinates=coords,
                      complex_amplitude=re + 1j * im,
                      frequency=meta["frequency_hz"])


def save_field_binary(fmap: FieldMap2D, path, description="field"):
    n = fmap.sample_coordinates.size
    header = _binary_header(
        "probesim field %s n=%d freq=%.9e plane=%.9e"
        % (description, n, fmap.frequency, fmap.plane_position))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(fmap.sample_coordinates, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(fmap.complex_amplitude.real, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(fmap.complex_amplitude.imag, dtype="<f8").tobytes())


def load_field_binary(path) -> FieldMap2D:
    with open(path, "rb") as fh:
        header = fh.read(80).decode("ascii")
        data = np.frombuffer(fh.read(), dtype="<f8")
    fields = dict(part.split("=") for part in header.split() if "=" in part)
    n = int(fields["n"])
    coords, re, im = data[:n], data[n:2 * n], data[2 * n:3 * n]
    return FieldMap2D(plane_position=float(fields["plane"]),
                      sample_coordinates=coords,
                      complex_amplitude=re + 1j * im,
                      frequency=float(fields["freq"]))
