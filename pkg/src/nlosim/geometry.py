"""Scene geometry: base station, reflector segment, region of interest.

Conventions: the reflector occupies y = 0, x in [-A/2, A/2]; the base
station sits at [-d_x, d_y] with d_y > 0; every angle is measured from
the reflector normal (the y axis), positive toward +x, in radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class SceneGeometry:
    """Positions and extents everything else derives from (SI units)."""

    bs_position: tuple[float, float]     # [-d_x, d_y], meters
    reflector_half_length: float         # A/2, meters
    roi_center: tuple[float, float]      # meters
    roi_size: tuple[float, float]        # (width_x, depth_y), meters

    def __post_init__(self):
        if self.bs_position[1] <= 0:
            raise ValueError("base station must be strictly off the reflector plane (d_y > 0)")
        if self.reflector_half_length <= 0:
            raise ValueError("reflector length must be positive")
        if self.roi_center[1] - self.roi_size[1] / 2 <= 0:
            raise ValueError("ROI must lie strictly in the y > 0 half-plane")

    @property
    def d_x(self) -> float:
        return -self.bs_position[0]

    @property
    def d_y(self) -> float:
        return self.bs_position[1]

    @property
    def reflector_length(self) -> float:
        return 2.0 * self.reflector_half_length

    def roi_corners(self) -> np.ndarray:
        """Four ROI corner points, shape (4, 2)."""
        cx, cy = self.roi_center
        hx, hy = self.roi_size[0] / 2, self.roi_size[1] / 2
        return np.array([[cx - hx, cy - hy], [cx + hx, cy - hy],
                         [cx + hx, cy + hy], [cx - hx, cy + hy]])

    def roi_probe_points(self) -> np.ndarray:
        """Corners plus edge midpoints, shape (8, 2); enough extrema probes
        for a convex box when the probed quantity is monotone along edges."""
        c = self.roi_corners()
        mids = 0.5 * (c + np.roll(c, -1, axis=0))
        return np.vstack([c, mids])


@dataclass(frozen=True)
class PolarPoint:
    """Point in reflector-centered polar coordinates."""

    radius: float   # meters, from the reflector center
    angle: float    # radians, from the reflector normal

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if abs(self.angle) >= np.pi / 2:
            raise ValueError("angle must satisfy |angle| < pi/2")

    def to_xy(self) -> np.ndarray:
        return np.array([self.radius * np.sin(self.angle),
                         self.radius * np.cos(self.angle)])

    @staticmethod
    def from_xy(xy) -> "PolarPoint":
        x, y = float(xy[0]), float(xy[1])
        return PolarPoint(radius=float(np.hypot(x, y)), angle=float(np.arctan2(x, y)))


@dataclass(frozen=True)
class TargetState:
    """Point scatterer: polar position, (radial, transverse) velocity, RCS."""

    position: PolarPoint
    velocity_radial: float = 0.0       # m/s, positive receding
    velocity_transverse: float = 0.0   # m/s, across the radial direction
    rcs: float = 1.0                   # m^2
    scattering_phase: float = 0.0      # radians in [0, 2*pi)
    reflection_coefficient: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.rcs < 0:
            raise ValueError("rcs must be non-negative")
        if not (0.0 <= self.scattering_phase < 2 * np.pi):
            raise ValueError("scattering_phase must lie in [0, 2*pi)")

    def velocity_xy(self) -> np.ndarray:
        """Cartesian velocity from (radial, transverse) components."""
        psi = self.position.angle
        u_r = np.array([np.sin(psi), np.cos(psi)])
        u_t = np.array([-np.cos(psi), np.sin(psi)])
        return self.velocity_radial * u_r + self.velocity_transverse * u_t

    def reflectivity(self) -> complex:
        """Complex amplitude sqrt(rcs) * exp(j*phase) * reflection coefficient."""
        return np.sqrt(self.rcs) * np.exp(1j * self.scattering_phase) * self.reflection_coefficient


def incidence_point(theta_i, geom: SceneGeometry):
    """x coordinate where a beam steered at theta_i crosses the reflector plane.

    Pure map; the caller decides whether the point falls on the physical
    segment [-A/2, A/2].
    """
    theta_i = np.asarray(theta_i, dtype=float)
    return geom.d_y * np.tan(theta_i) - geom.d_x


def tx_angle_for_point(x_on_plane, geom: SceneGeometry):
    """Inverse of incidence_point: steering angle whose beam center hits x."""
    return np.arctan2(np.asarray(x_on_plane, dtype=float) + geom.d_x, geom.d_y)


def reflection_angle_to_target(theta_i, target_xy, geom: SceneGeometry):
    """Reflection angle that sends the beam hitting at theta_i onto the target."""
    target_xy = np.asarray(target_xy, dtype=float)
    if np.any(target_xy[..., 1] <= 0):
        raise ValueError("target must lie in the y > 0 half-plane")
    x_l = incidence_point(theta_i, geom)
    return np.arctan2(target_xy[..., 0] - x_l, target_xy[..., 1])


def incident_path_length(theta_i, geom: SceneGeometry):
    """Distance from the base station to the beam's incidence point."""
    x_l = incidence_point(theta_i, geom)
    return np.hypot(x_l + geom.d_x, geom.d_y)


def two_way_delay(beam_incidence_x, pixel_xy, geom: SceneGeometry):
    """Round-trip delay BS -> reflector point -> pixel -> reflector point -> BS."""
    pixel_xy = np.asarray(pixel_xy, dtype=float)
    beam_incidence_x = np.asarray(beam_incidence_x, dtype=float)
    d_in = np.hypot(beam_incidence_x + geom.d_x, geom.d_y)
    d_out = np.hypot(pixel_xy[..., 0] - beam_incidence_x, pixel_xy[..., 1])
    return 2.0 * (d_in + d_out) / SPEED_OF_LIGHT


def reflector_atoms(geom: SceneGeometry, wavelength: float):
    """Meta-atom index grid on the reflector.

    Atoms sit at x = m*d with d = wavelength/4 and m = -M/2+1 .. M/2
    (M even), so the grid is shared by every module that reasons about
    the reflector surface.

    Returns (m_indices, x_positions, spacing).
    """
    d = wavelength / 4.0
    m_count = int(round(geom.reflector_length / d))
    m_count -= m_count % 2
    if m_count < 2:
        raise ValueError("reflector too short for the meta-atom grid")
    m = np.arange(-m_count // 2 + 1, m_count // 2 + 1)
    return m, m * d, d


def parabolic_outgoing_distance(x_on_reflector, target: PolarPoint):
    """Second-order expansion of |target - (x, 0)| around the reflector center.

    Analysis-side approximation only; echo synthesis always uses exact
    distances so that predictions can be tested against an independent path.
    """
    x = np.asarray(x_on_reflector, dtype=float)
    r0, psi0 = target.radius, target.angle
    return r0 - np.sin(psi0) * x + (np.cos(psi0) ** 2 / (2.0 * r0)) * x**2
