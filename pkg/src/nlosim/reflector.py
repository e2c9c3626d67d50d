"""Pre-configured reflector synthesis and its reflection behaviour.

A design fixes one phase per meta-atom at manufacturing time.  Three kinds
are supported: a modular layout whose modules linearly fan their reflection
angles across the region of interest, a lens that conjugates the exact
two-leg propagation phase toward a focus, and a plain specular mirror.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import PolarPoint, SceneGeometry, incidence_point, reflector_atoms
from .waveform import Codebook


@dataclass(frozen=True)
class ReflectorDesign:
    """Immutable per-atom phase configuration plus its module bookkeeping."""

    design_kind: str                      # "modular" | "lens" | "mirror"
    wavelength: float
    module_count: int
    module_length: float                  # A / N
    meta_atom_spacing: float              # wavelength / 4
    atom_indices: np.ndarray              # global m
    atom_positions: np.ndarray            # x = m * d
    meta_atom_phases: np.ndarray          # radians, stored mod 2*pi
    module_of_atom: np.ndarray            # module index per atom
    module_centers: np.ndarray
    module_reflection_angles: np.ndarray
    module_incidence_angles: np.ndarray
    center_reflection_angle: float
    reflection_span: float
    focus: tuple[float, float] | None = None

    def __post_init__(self):
        for arr in (self.atom_indices, self.atom_positions, self.meta_atom_phases,
                    self.module_of_atom, self.module_centers,
                    self.module_reflection_angles, self.module_incidence_angles):
            arr.flags.writeable = False

    @property
    def reflector_length(self) -> float:
        return self.module_count * self.module_length

    def atom_mask(self, atom_indices) -> np.ndarray:
        """Boolean mask over the design's atoms for a set of global indices."""
        return np.isin(self.atom_indices, atom_indices)

    def module_pattern_width(self, n: int) -> float:
        """First-null half width (in sin units) of module n's reflection lobe."""
        return self.wavelength / (2.0 * self.module_length
                                  * np.cos(self.module_reflection_angles[n]))


def _roi_reflection_geometry(geom: SceneGeometry) -> tuple[float, float]:
    """(center angle, angular span) of the ROI seen from the reflector center."""
    corners = geom.roi_corners()
    angles = np.arctan2(corners[:, 0], corners[:, 1])
    center = float(np.arctan2(geom.roi_center[0], geom.roi_center[1]))
    return center, float(angles.max() - angles.min())


def _module_layout(geom: SceneGeometry, wavelength: float, n_modules: int):
    m, x_m, d = reflector_atoms(geom, wavelength)
    if n_modules < 1:
        raise ValueError("need at least one module")
    if n_modules > m.size:
        raise ValueError("more modules than meta-atoms")
    a = geom.reflector_length
    a_mod = a / n_modules
    half = geom.reflector_half_length
    module_of_atom = np.clip(((x_m + half) / a_mod).astype(int), 0, n_modules - 1)
    centers = -half + (np.arange(n_modules) + 0.5) * a_mod
    return m, x_m, d, a_mod, module_of_atom, centers


def _nearest_beam_angles(centers: np.ndarray, profile: Codebook, geom: SceneGeometry):
    beam_angles = profile.angles()
    beam_x = incidence_point(beam_angles, geom)
    nearest = np.abs(beam_x[None, :] - centers[:, None]).argmin(axis=1)
    return beam_angles[nearest]


def design_modular(
    geom: SceneGeometry,
    n_modules: int,
    incidence_profile: Codebook,
    wavelength: float,
    reflection_center: float | None = None,
    reflection_span: float | None = None,
) -> ReflectorDesign:
    """Modules whose reflection angles fan linearly across the ROI.

    Module n, centered at x_n, reflects toward center + (span/A) * x_n; its
    atoms carry the linear phase of the generalized reflection law for the
    incidence angle of the codebook beam whose center lands nearest to x_n.
    Module offsets anchor each linear piece to the continuous profile
    k * (incident path - integral of sin(reflection angle)), so the screen
    stays phase-continuous across module boundaries and the modules add up
    coherently over the sweep (a lens is the exact-profile limit of this
    construction).  A single module degenerates to an anomalous mirror
    aimed at the ROI center.
    """
    roi_center, roi_span = _roi_reflection_geometry(geom)
    if reflection_center is None:
        reflection_center = roi_center
    if reflection_span is None:
        reflection_span = roi_span
    m, x_m, d, a_mod, module_of_atom, centers = _module_layout(geom, wavelength, n_modules)
    a = geom.reflector_length
    theta_o = reflection_center + (reflection_span / a) * centers
    theta_i = _nearest_beam_angles(centers, incidence_profile, geom)
    k0 = 2.0 * np.pi / wavelength
    bs = np.asarray(geom.bs_position, dtype=float)
    fan_slope = reflection_span / a
    if abs(fan_slope) > 1e-12:
        out_integral = (np.cos(reflection_center)
                        - np.cos(reflection_center + fan_slope * centers)) / fan_slope
    else:
        out_integral = np.sin(reflection_center) * centers
    anchor = k0 * (np.hypot(centers - bs[0], bs[1]) - out_integral)
    slope = np.sin(theta_i[module_of_atom]) - np.sin(theta_o[module_of_atom])
    offsets = x_m - centers[module_of_atom]
    phases = np.mod(anchor[module_of_atom] + k0 * offsets * slope, 2.0 * np.pi)
    return ReflectorDesign(
        design_kind="modular", wavelength=wavelength, module_count=n_modules,
        module_length=a_mod, meta_atom_spacing=d, atom_indices=m,
        atom_positions=x_m, meta_atom_phases=phases, module_of_atom=module_of_atom,
        module_centers=centers, module_reflection_angles=theta_o,
        module_incidence_angles=theta_i, center_reflection_angle=reflection_center,
        reflection_span=reflection_span,
    )


def design_mirror(
    geom: SceneGeometry,
    incidence_profile: Codebook,
    wavelength: float,
    n_modules: int = 1,
) -> ReflectorDesign:
    """Specular plane: zero phases, each module returns its beam at theta_i."""
    m, x_m, d, a_mod, module_of_atom, centers = _module_layout(geom, wavelength, n_modules)
    theta_i = _nearest_beam_angles(centers, incidence_profile, geom)
    return ReflectorDesign(
        design_kind="mirror", wavelength=wavelength, module_count=n_modules,
        module_length=a_mod, meta_atom_spacing=d, atom_indices=m,
        atom_positions=x_m, meta_atom_phases=np.zeros_like(x_m),
        module_of_atom=module_of_atom, module_centers=centers,
        module_reflection_angles=theta_i.copy(), module_incidence_angles=theta_i,
        center_reflection_angle=float(np.mean(theta_i)), reflection_span=0.0,
    )


def design_lens(
    geom: SceneGeometry,
    focus_xy,
    wavelength: float,
    n_modules: int = 1,
) -> ReflectorDesign:
    """Phases that conjugate the exact BS -> atom -> focus propagation phase.

    Every atom's reflection then adds up coherently at the focus, which is
    the upper bound any static configuration can reach there.
    """
    focus_xy = np.asarray(focus_xy, dtype=float)
    if focus_xy[1] <= 0:
        raise ValueError("focus must lie in the y > 0 half-plane")
    m, x_m, d, a_mod, module_of_atom, centers = _module_layout(geom, wavelength, n_modules)
    bs = np.asarray(geom.bs_position, dtype=float)
    leg_in = np.hypot(x_m - bs[0], bs[1])
    leg_out = np.hypot(focus_xy[0] - x_m, focus_xy[1])
    phases = np.mod(2.0 * np.pi / wavelength * (leg_in + leg_out), 2.0 * np.pi)
    theta_o = np.arctan2(focus_xy[0] - centers, focus_xy[1])
    theta_i = np.arctan2(centers - bs[0], bs[1])
    return ReflectorDesign(
        design_kind="lens", wavelength=wavelength, module_count=n_modules,
        module_length=a_mod, meta_atom_spacing=d, atom_indices=m,
        atom_positions=x_m, meta_atom_phases=phases, module_of_atom=module_of_atom,
        module_centers=centers, module_reflection_angles=theta_o,
        module_incidence_angles=theta_i,
        center_reflection_angle=float(np.arctan2(focus_xy[0], focus_xy[1])),
        reflection_span=0.0, focus=(float(focus_xy[0]), float(focus_xy[1])),
    )


def reflection_gain(
    design: ReflectorDesign,
    atom_indices: np.ndarray,
    theta_i: float,
    pixel_xy,
    geom: SceneGeometry,
) -> np.ndarray:
    """Coherent gain of the illuminated atoms toward one or many pixels.

    The double sum over atom pairs factorizes into the square of a single
    sum over the exact per-atom path phases (BS -> atom -> pixel),
    referenced to the two-leg path through the beam's incidence point so
    the propagation delay keeps carrying that reference.  Vectorized over
    pixels; returns complex gain(s).
    """
    mask = design.atom_mask(atom_indices)
    if not mask.any():
        raise ValueError("empty illuminated atom set")
    pixel_xy = np.asarray(pixel_xy, dtype=float)
    single = pixel_xy.ndim == 1
    px = np.atleast_2d(pixel_xy)
    x_l = incidence_point(theta_i, geom)
    bs = np.asarray(geom.bs_position, dtype=float)
    x_m = design.atom_positions[mask]
    d_in_ref = np.hypot(x_l - bs[0], bs[1])
    d_out_ref = np.hypot(px[:, 0] - x_l, px[:, 1])
    leg_in = np.hypot(x_m - bs[0], bs[1]) - d_in_ref
    # (pixels, atoms) path table; footprints are a few hundred atoms at most
    leg_out = np.hypot(px[:, 0, None] - x_m[None, :], px[:, 1, None]) - d_out_ref[:, None]
    k0 = 2.0 * np.pi / design.wavelength
    coeff = np.exp(1j * design.meta_atom_phases[mask])
    ssum = np.exp(-1j * k0 * (leg_in[None, :] + leg_out)) @ coeff
    g = ssum**2
    return g[0] if single else g


def reflection_gain_double_sum(
    design: ReflectorDesign,
    atom_indices: np.ndarray,
    theta_i: float,
    pixel_xy,
    geom: SceneGeometry,
) -> complex:
    """Brute-force pair sum over (m, m'); oracle for the factorized form."""
    mask = design.atom_mask(atom_indices)
    pixel_xy = np.asarray(pixel_xy, dtype=float)
    x_l = incidence_point(theta_i, geom)
    bs = np.asarray(geom.bs_position, dtype=float)
    x_m = design.atom_positions[mask]
    path = (np.hypot(x_m - bs[0], bs[1]) - np.hypot(x_l - bs[0], bs[1])
            + np.hypot(pixel_xy[0] - x_m, pixel_xy[1])
            - np.hypot(pixel_xy[0] - x_l, pixel_xy[1]))
    phases = design.meta_atom_phases[mask]
    k0 = 2.0 * np.pi / design.wavelength
    total = 0.0 + 0.0j
    for pm, pth in zip(phases, path):
        total += np.sum(np.exp(1j * (pm + phases)) * np.exp(-1j * k0 * (pth + path)))
    return total


def exact_reflection_gain(
    design: ReflectorDesign,
    atom_indices: np.ndarray,
    target_xy,
    geom: SceneGeometry,
) -> complex:
    """Gain with exact spherical per-atom path phases (no plane-wave step).

    Independent check used by the lens tests and the gain oracle; equals
    the square of the single sum of per-atom residual phases.
    """
    mask = design.atom_mask(atom_indices)
    if not mask.any():
        raise ValueError("empty illuminated atom set")
    target_xy = np.asarray(target_xy, dtype=float)
    bs = np.asarray(geom.bs_position, dtype=float)
    x_m = design.atom_positions[mask]
    leg_in = np.hypot(x_m - bs[0], bs[1])
    leg_out = np.hypot(target_xy[0] - x_m, target_xy[1])
    k0 = 2.0 * np.pi / design.wavelength
    ssum = np.sum(np.exp(1j * (design.meta_atom_phases[mask] - k0 * (leg_in + leg_out))))
    return ssum**2


def module_pattern(design: ReflectorDesign, n: int, psi) -> np.ndarray:
    """Normalized reflection pattern of module n toward angle psi."""
    if not 0 <= n < design.module_count:
        raise IndexError("module index out of range")
    width = design.module_pattern_width(n)
    u = (np.sin(psi) - np.sin(design.module_reflection_angles[n])) / width
    return np.sinc(u)


@dataclass(frozen=True)
class EffectiveAperture:
    """Reflector portion that coherently contributes to one target's image."""

    interval: tuple[float, float]
    length: float
    module_set: frozenset[int]
    effective_beam_count: int | None = None
    note: str | None = None


def effective_aperture_discrete(design: ReflectorDesign, target: PolarPoint) -> EffectiveAperture:
    """Modules whose reflection lobes cover the target direction."""
    txy = target.to_xy()
    psi_n = np.arctan2(txy[0] - design.module_centers, txy[1])
    widths = np.array([design.module_pattern_width(n) for n in range(design.module_count)])
    selected = np.flatnonzero(np.abs(psi_n - design.module_reflection_angles) <= widths)
    if selected.size == 0:
        return EffectiveAperture((0.0, 0.0), 0.0, frozenset(), note="no module covers target")
    half_mod = design.module_length / 2.0
    lo = design.module_centers[selected.min()] - half_mod
    hi = design.module_centers[selected.max()] + half_mod
    return EffectiveAperture(
        (float(lo), float(hi)),
        float(selected.size * design.module_length),
        frozenset(int(n) for n in selected),
    )


def effective_aperture_closed_form(design: ReflectorDesign, target: PolarPoint) -> EffectiveAperture:
    """Continuous-aperture endpoints for the linear modular fan.

    Valid for "modular" designs only.  Endpoints can hit the physical
    reflector ends (lens limit) or cross for extreme pointing; both cases
    clip and carry a note instead of guessing.
    """
    if design.design_kind != "modular":
        raise ValueError("closed form applies to modular designs")
    a = design.reflector_length
    half = a / 2.0
    psi0, r0 = target.angle, target.radius
    theta_c = design.center_reflection_angle
    beam = design.wavelength / (2.0 * design.module_length * np.cos(theta_c))
    slope = design.reflection_span / a
    curv = np.cos(psi0) / r0
    note = None
    lo_den = slope * (1.0 + beam * np.tan(theta_c)) + curv
    hi_den = slope * (1.0 - beam * np.tan(theta_c)) + curv
    if lo_den <= 0 or hi_den <= 0:
        lo, hi = -half, half
        note = "unbounded aperture"
    else:
        lo = ((psi0 - theta_c) - beam) / lo_den
        hi = ((psi0 - theta_c) + beam) / hi_den
        if hi < lo:
            lo, hi = hi, lo
            note = "endpoints crossed"
        lo = max(lo, -half)
        hi = min(hi, half)
        if hi < lo:
            lo = hi = 0.0
            note = "aperture off the reflector"
    modules = frozenset(
        int(n) for n, c in enumerate(design.module_centers) if lo - 1e-12 <= c <= hi + 1e-12
    )
    return EffectiveAperture((float(lo), float(hi)), float(hi - lo), modules, note=note)


def effective_aperture(design: ReflectorDesign, target: PolarPoint) -> EffectiveAperture:
    """Closed form where available, discrete module criterion otherwise."""
    if design.design_kind == "modular":
        return effective_aperture_closed_form(design, target)
    if design.design_kind == "lens":
        half = design.reflector_length / 2.0
        return EffectiveAperture((-half, half), design.reflector_length,
                                 frozenset(range(design.module_count)))
    return effective_aperture_discrete(design, target)


def effective_beam_mask(
    aperture: EffectiveAperture,
    codebook: Codebook,
    geom: SceneGeometry,
) -> np.ndarray:
    """Beams whose incidence points fall inside the effective interval."""
    x = incidence_point(codebook.angles(), geom)
    lo, hi = aperture.interval
    return (x >= lo) & (x <= hi)


def export_design_csv(design: ReflectorDesign, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["atom_index", "x_m", "phase_rad"])
        for m, x, p in zip(design.atom_indices, design.atom_positions, design.meta_atom_phases):
            writer.writerow([int(m), repr(float(x)), repr(float(p))])
