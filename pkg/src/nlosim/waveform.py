"""OFDM waveform parameters and the base-station beam codebooks.

Two codebooks exist: the standard sector sweep (one beam per antenna over
120 deg) and a denser set of beams aimed at the reflector, whose angular
step obeys an anti-aliasing bound derived from the propagation-phase rate
of change across the region of interest.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    SceneGeometry,
    incidence_point,
    reflector_atoms,
    tx_angle_for_point,
)

SECTOR_WIDTH = 2.0 * np.pi / 3.0  # 120 deg sweep sector
SYMBOLS_PER_SLOT = 14
PILOT_SYMBOLS = 4


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM numerology and link parameters.

    subcarrier spacing is tied to the numerology exponent mu by
    15 kHz * 2**mu; the slot lasts 1/2**mu ms and the pilot block spans
    4 of its 14 symbols.
    """

    carrier_frequency: float      # Hz
    subcarrier_count: int
    numerology: int
    tx_power: float = 1.0         # W
    pilot_duration: float | None = None  # s, defaults to 4 symbols

    def __post_init__(self):
        if self.carrier_frequency <= 0 or self.subcarrier_count < 1:
            raise ValueError("carrier frequency and subcarrier count must be positive")
        if not 0 <= self.numerology <= 6:
            raise ValueError("numerology out of range")
        if self.tx_power <= 0:
            raise ValueError("tx power must be positive")
        if self.pilot_duration is not None and not (0 < self.pilot_duration < self.slot_duration):
            raise ValueError("pilot duration must lie inside one slot")

    @property
    def subcarrier_spacing(self) -> float:
        return 15e3 * 2**self.numerology

    @property
    def bandwidth(self) -> float:
        return self.subcarrier_count * self.subcarrier_spacing

    @property
    def slot_duration(self) -> float:
        return 1e-3 / 2**self.numerology

    @property
    def pilot_time(self) -> float:
        if self.pilot_duration is not None:
            return self.pilot_duration
        return PILOT_SYMBOLS * self.slot_duration / SYMBOLS_PER_SLOT

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def subcarrier_frequencies(self) -> np.ndarray:
        """Absolute subcarrier frequencies f0 + q*df, q = 1..Q."""
        q = np.arange(1, self.subcarrier_count + 1)
        return self.carrier_frequency + q * self.subcarrier_spacing


@dataclass(frozen=True)
class BsArray:
    """Half-wavelength uniform linear array at the base station."""

    element_count: int
    element_spacing: float  # meters, wavelength/2

    def __post_init__(self):
        if self.element_count < 2:
            raise ValueError("array needs at least 2 elements")
        if self.element_spacing <= 0:
            raise ValueError("element spacing must be positive")

    @property
    def aperture(self) -> float:
        return self.element_count * self.element_spacing

    @staticmethod
    def for_wavelength(element_count: int, wavelength: float) -> "BsArray":
        return BsArray(element_count, wavelength / 2.0)

    @staticmethod
    def for_aperture(aperture: float, wavelength: float) -> "BsArray":
        k = max(2, int(round(aperture / (wavelength / 2.0))))
        return BsArray(k, wavelength / 2.0)

    def beamwidth(self, theta_i: float) -> float:
        """Half-power beamwidth toward theta_i, radians."""
        wavelength = 2.0 * self.element_spacing
        return wavelength / (self.aperture * np.cos(theta_i))


class BeamKind(enum.Enum):
    STANDARD_3GPP = "3gpp"
    IMAGING = "imaging"


@dataclass(frozen=True)
class Codebook:
    """Ordered transmit directions with provenance.

    entries are sorted by angle; the imaging subset is uniformly spaced
    over [center - span/2, center + span/2].
    """

    entries: tuple[tuple[float, BeamKind], ...]
    angular_step_imaging: float | None = None
    angular_span_imaging: float | None = None
    center_imaging: float | None = None

    def __len__(self):
        return len(self.entries)

    def angles(self) -> np.ndarray:
        return np.array([a for a, _ in self.entries])

    def kinds(self) -> list[BeamKind]:
        return [k for _, k in self.entries]

    def imaging_angles(self) -> np.ndarray:
        return np.array([a for a, k in self.entries if k is BeamKind.IMAGING])

    def slots(self) -> np.ndarray:
        """Centered slot indices, one per entry in sweep order."""
        n = len(self.entries)
        return np.arange(n) - n // 2

    def merge(self, other: "Codebook", tol: float = 1e-9) -> "Codebook":
        """Union of two codebooks, sorted by angle, duplicates dropped."""
        merged = sorted(self.entries + other.entries, key=lambda e: e[0])
        out: list[tuple[float, BeamKind]] = []
        for ang, kind in merged:
            if out and abs(ang - out[-1][0]) <= tol:
                continue
            out.append((ang, kind))
        imaging = self if self.angular_step_imaging is not None else other
        return Codebook(
            tuple(out),
            angular_step_imaging=imaging.angular_step_imaging,
            angular_span_imaging=imaging.angular_span_imaging,
            center_imaging=imaging.center_imaging,
        )


def make_3gpp_codebook(array: BsArray) -> Codebook:
    """One orthogonal beam per antenna, uniformly covering the 120 deg sector."""
    k = array.element_count
    step = SECTOR_WIDTH / k
    angles = -SECTOR_WIDTH / 2.0 + (np.arange(k) + 0.5) * step
    return Codebook(tuple((float(a), BeamKind.STANDARD_3GPP) for a in angles))


def phase_rate_vs_txangle(theta_i, pixel_xy, geom: SceneGeometry, cfg: OfdmConfig):
    """Rate of change of the two-way carrier phase w.r.t. the transmit angle.

    The phase is 4*pi/lambda * (incident + outgoing path length) with the
    incidence point sliding along the reflector as theta_i varies.
    """
    theta_i = np.asarray(theta_i, dtype=float)
    pixel_xy = np.asarray(pixel_xy, dtype=float)
    x = pixel_xy[..., 0]
    y = pixel_xy[..., 1]
    u = x + geom.d_x - geom.d_y * np.tan(theta_i)  # pixel x relative to incidence point
    lead = 4.0 * np.pi * geom.d_y / (cfg.wavelength * np.cos(theta_i) ** 2)
    return lead * (np.sin(theta_i) - u / np.hypot(y, u))


def reflector_subtend(geom: SceneGeometry) -> tuple[float, float]:
    """(center angle, span) of the interval of Tx angles hitting the reflector."""
    lo = tx_angle_for_point(-geom.reflector_half_length, geom)
    hi = tx_angle_for_point(geom.reflector_half_length, geom)
    return 0.5 * (lo + hi), hi - lo


def imaging_sampling_bound(
    geom: SceneGeometry,
    cfg: OfdmConfig,
    span: float | None = None,
    roi_points: np.ndarray | None = None,
) -> float:
    """Largest angular step that keeps image grating lobes out of the ROI.

    Aliased image replicas form when the phase rate differs across the ROI
    by 2*pi per beam step; bounding the worst per-angle spread times the
    step by pi keeps them out with a factor-two margin.  The spread is
    probed at both ends of the swept span, over the ROI corners and edge
    midpoints (the rate is monotone along the box edges, so the probe set
    captures the extrema).  A pixel-independent drift of the rate across
    the span shifts every pixel alike and is deliberately not counted.
    """
    center, full_span = reflector_subtend(geom)
    if span is None:
        span = full_span
    if span <= 0:
        raise ValueError("span must be positive")
    if roi_points is None:
        roi_points = geom.roi_probe_points()
    roi_points = np.asarray(roi_points, dtype=float)
    if roi_points.ndim != 2 or len(roi_points) < 2:
        raise ValueError("degenerate ROI")
    span_x = np.ptp(roi_points[:, 0])
    span_y = np.ptp(roi_points[:, 1])
    if span_x == 0 and span_y == 0:
        raise ValueError("degenerate ROI (zero area)")
    rate_hi = phase_rate_vs_txangle(center + span / 2.0, roi_points, geom, cfg)
    rate_lo = phase_rate_vs_txangle(center - span / 2.0, roi_points, geom, cfg)
    spread = max(np.ptp(rate_hi), np.ptp(rate_lo))
    return float(np.pi / spread)


def make_imaging_codebook(
    geom: SceneGeometry,
    cfg: OfdmConfig,
    oversample: float = 1.0,
    step: float | None = None,
    span_padding: float = 0.0,
) -> Codebook:
    """Uniform beam fan whose centers span the reflector end to end.

    The step comes from the anti-aliasing bound (optionally densified by
    ``oversample``); entry count is ceil(span/step) + 1.  ``span_padding``
    (radians, per side) aims extra beams past the reflector ends so their
    clipped footprints keep the edge atoms as well lit as the middle;
    the default follows the exact subtended extent.
    """
    center, span = reflector_subtend(geom)
    if step is None:
        step = imaging_sampling_bound(geom, cfg, span=span)
    step /= oversample
    span += 2.0 * span_padding
    n = int(np.ceil(span / step)) + 1
    angles = np.linspace(center - span / 2.0, center + span / 2.0, n)
    return Codebook(
        tuple((float(a), BeamKind.IMAGING) for a in angles),
        angular_step_imaging=float(span / (n - 1)) if n > 1 else float(step),
        angular_span_imaging=float(span),
        center_imaging=float(center),
    )


def ia_durations(array: BsArray, imaging: Codebook, cfg: OfdmConfig):
    """(standard sweep time, extended sweep time, overhead ratio).

    The extended sweep re-uses the standard beams that already hit the
    reflector, so it adds L imaging slots on top of K - K_overlap ones.
    """
    k = array.element_count
    t_3gpp = k * cfg.slot_duration
    l_img = len(imaging.imaging_angles())
    span = imaging.angular_span_imaging or 0.0
    k_overlap = int(np.floor(k * span / SECTOR_WIDTH))
    t_ia = (l_img + (k - k_overlap)) * cfg.slot_duration
    return t_3gpp, t_ia, t_ia / t_3gpp


@dataclass(frozen=True)
class BeamFootprint:
    """Reflector interval lit by one beam plus the meta-atoms inside it."""

    interval: tuple[float, float]   # clipped to the reflector, meters
    length: float
    atom_indices: np.ndarray        # global atom indices m

    @property
    def hits_reflector(self) -> bool:
        return self.length > 0 and self.atom_indices.size > 0


def beam_footprint(theta_i: float, array: BsArray, geom: SceneGeometry) -> BeamFootprint:
    """Projection of the beam onto the reflector, clipped to its extent.

    The projected length is d_y * beamwidth / (sin * cos); near boresight
    the projection formula blows up and the whole reflector is returned.
    """
    wavelength = 2.0 * array.element_spacing
    x_c = incidence_point(theta_i, geom)
    sc = np.sin(theta_i) * np.cos(theta_i)
    if abs(sc) < 1e-9:
        lo, hi = -geom.reflector_half_length, geom.reflector_half_length
    else:
        theta_bs = array.beamwidth(theta_i)
        half = abs(geom.d_y * theta_bs / sc) / 2.0
        lo, hi = x_c - half, x_c + half
    lo = max(lo, -geom.reflector_half_length)
    hi = min(hi, geom.reflector_half_length)
    m, x_m, _ = reflector_atoms(geom, wavelength)
    if hi <= lo:
        return BeamFootprint((lo, lo), 0.0, m[:0])
    inside = (x_m >= lo) & (x_m <= hi)
    return BeamFootprint((float(lo), float(hi)), float(hi - lo), m[inside])


def export_codebook_csv(codebook: Codebook, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["angle_deg", "kind"])
        for ang, kind in codebook.entries:
            writer.writerow([repr(np.degrees(ang)), kind.value])
