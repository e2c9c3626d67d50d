"""Image formation by conjugate-phase matched filtering over subcarriers
and beams (back-projection), plus the motion-distortion predictions used
to interpret images of moving targets.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, resolution
from .channel import EchoTensor, beta, doppler_exact, pilot_symbols, synthesize
from .geometry import (
    SPEED_OF_LIGHT,
    PolarPoint,
    SceneGeometry,
    TargetState,
    incidence_point,
)
from .reflector import ReflectorDesign, effective_aperture, effective_beam_mask, reflection_gain
from .waveform import BsArray, Codebook, OfdmConfig

GAIN_FLOOR_DB = -20.0   # beams this far under the per-pixel best gain are skipped

_IMG_MAGIC = b"NLIM"
_IMG_HEADER = struct.Struct("<4sqqddddB")


@dataclass(frozen=True)
class GridSpec:
    """Sampling axes for an image; polar axes are (radius, angle)."""

    coordinates: str            # "polar" | "cartesian"
    axis1: np.ndarray
    axis2: np.ndarray

    def __post_init__(self):
        if self.coordinates not in ("polar", "cartesian"):
            raise ValueError("coordinates must be 'polar' or 'cartesian'")
        self.axis1.flags.writeable = False
        self.axis2.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.axis1), len(self.axis2)

    def pixels_xy(self) -> np.ndarray:
        """Flattened pixel coordinates, shape (n1*n2, 2), axis1-major."""
        a1, a2 = np.meshgrid(self.axis1, self.axis2, indexing="ij")
        if self.coordinates == "polar":
            x = a1 * np.sin(a2)
            y = a1 * np.cos(a2)
        else:
            x, y = a1, a2
        return np.column_stack([x.ravel(), y.ravel()])


@dataclass
class ImageGrid:
    """Complex reflectivity estimate over a spatial grid."""

    coordinates: str
    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray
    hypothesis_velocity: tuple[float, float] = (0.0, 0.0)
    empty_pixels: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def magnitude_db(self, floor_db: float = -200.0) -> np.ndarray:
        mag = np.abs(self.values)
        ref = mag.max() if mag.max() > 0 else 1.0
        return 20.0 * np.log10(np.maximum(mag / ref, 10.0 ** (floor_db / 20.0)))

    def peak_index(self) -> tuple[int, int]:
        return np.unravel_index(np.argmax(np.abs(self.values)), self.values.shape)


def polar_window(center: PolarPoint, r_half: float, psi_half: float,
                 dr: float, dpsi: float) -> GridSpec:
    """Polar grid centered on a point with given half extents and spacings."""
    n_r = max(3, int(np.ceil(2 * r_half / dr)) + 1)
    n_p = max(3, int(np.ceil(2 * psi_half / dpsi)) + 1)
    r_axis = center.radius + np.linspace(-r_half, r_half, n_r)
    p_axis = center.angle + np.linspace(-psi_half, psi_half, n_p)
    return GridSpec("polar", r_axis, p_axis)


def auto_polar_grid(
    target: PolarPoint,
    design: ReflectorDesign,
    codebook: Codebook,
    cfg: OfdmConfig,
    array: BsArray,
    geom: SceneGeometry,
    oversample: float = 3.0,
    window_cells: float = 4.0,
) -> GridSpec:
    """Window of a few resolution cells around a target, sampled at
    (predicted resolution) / oversample along each axis."""
    a_eff = resolution.aperture_for_resolution(design, target, array, geom)
    rep = resolution.nf_resolution(target, a_eff, cfg)
    dpsi = rep.rho_psi_nf / np.cos(target.angle)   # sin-units -> radians at the target
    return polar_window(target, window_cells * rep.rho_R_nf, window_cells * dpsi,
                        rep.rho_R_nf / oversample, dpsi / oversample)


class _BeamTables:
    """Per-(pixel, beam) quantities shared by the imaging operations.

    The matched-filter weight is the conjugate of the modeled echo
    amplitude; correlating against it and then dividing by the model's L2
    norm per pixel gives a statistic whose noise variance is the sample
    noise power everywhere and whose noise-free argmax sits at the target.
    """

    def __init__(self, echoes: EchoTensor, pixels_xy: np.ndarray,
                 design: ReflectorDesign, cfg: OfdmConfig, array: BsArray,
                 geom: SceneGeometry, gain_floor_db: float | None):
        used_cols = [i for i, rec in enumerate(echoes.per_beam) if rec.hits_reflector]
        if not used_cols:
            raise ValueError("no beam in the tensor illuminates the reflector")
        n_pix = len(pixels_xy)
        n_used = len(used_cols)
        tau = np.empty((n_pix, n_used))
        gain = np.empty((n_pix, n_used), dtype=np.complex128)
        amp = np.empty((n_pix, n_used))
        for j, col in enumerate(used_cols):
            rec = echoes.per_beam[col]
            d_out = np.hypot(pixels_xy[:, 0] - rec.incidence_x, pixels_xy[:, 1])
            tau[:, j] = 2.0 * (rec.incident_distance + d_out) / SPEED_OF_LIGHT
            gain[:, j] = reflection_gain(design, rec.atom_indices(), rec.angle,
                                         pixels_xy, geom)
            amp[:, j] = beta(rec.incident_distance, d_out, cfg, array)
        mag = np.abs(gain)
        if gain_floor_db is None:
            keep = mag > 0
        else:
            floor = mag.max(axis=1, keepdims=True) * 10.0 ** (gain_floor_db / 20.0)
            keep = mag >= floor
        amp0 = np.sqrt(cfg.tx_power / cfg.subcarrier_count)
        weight = np.where(keep, amp0 * amp * np.conj(gain), 0.0)
        self.used_cols = used_cols
        self.records = [echoes.per_beam[c] for c in used_cols]
        self.pixels_xy = pixels_xy
        self.tau = tau
        self.weight = weight
        self.keep = keep
        # per-(pixel, used beam) squared norm of the modeled echo over q
        self.beam_norm_sq = np.where(keep, cfg.tx_power * (amp * mag) ** 2, 0.0)

    def matched_beam_sums(self, echoes: EchoTensor, cfg: OfdmConfig, seed: int) -> np.ndarray:
        """Correlation with the modeled echo per (pixel, used beam)."""
        pilots = pilot_symbols(cfg, echoes.beam_count, seed)
        coeff = (echoes.samples * np.conj(pilots))[:, self.used_cols]
        u = 2.0 * np.pi * cfg.subcarrier_spacing * self.tau
        phi0 = 2.0 * np.pi * cfg.carrier_frequency * self.tau
        return kernels.beam_pixel_sums(coeff, u, phi0, self.weight)


def _doppler_factors(tables: _BeamTables, xi, cfg: OfdmConfig) -> np.ndarray:
    """Test-phase Doppler factor exp(-j*2*pi*nu(x, xi)*t) per (pixel, beam),
    the conjugate of the synthesized slow-time factor."""
    xi = np.asarray(xi, dtype=float)
    if not xi.any():
        return np.ones((len(tables.pixels_xy), len(tables.records)))
    out = np.empty((len(tables.pixels_xy), len(tables.records)), dtype=np.complex128)
    for j, rec in enumerate(tables.records):
        nu = doppler_exact(xi, tables.pixels_xy, rec.incidence_x, cfg.wavelength)
        out[:, j] = np.exp(-2j * np.pi * nu * rec.slot * cfg.slot_duration)
    return out


def backproject(
    echoes: EchoTensor,
    grid: GridSpec,
    xi,
    design: ReflectorDesign,
    codebook: Codebook,
    cfg: OfdmConfig,
    array: BsArray,
    geom: SceneGeometry,
    normalization: str = "whitened",
    gain_floor_db: float | None = GAIN_FLOOR_DB,
) -> ImageGrid:
    """Coherent image of the scene under test velocity xi (Cartesian m/s).

    Each used beam's echo is correlated against the modeled response at the
    pixel, compensated for the Doppler a pixel moving at xi would show, and
    summed over beams.  Beams whose gain at a pixel sits below the
    per-pixel floor are skipped there.  Normalizations: "whitened" divides
    by the model norm so the noise variance is the sample noise power at
    every pixel and the amplitude reflects collected echo energy;
    "calibrated" divides by the squared norm so the peak estimates the
    target reflectivity; "raw" keeps the plain correlation sum.
    """
    if normalization not in ("whitened", "calibrated", "raw"):
        raise ValueError("normalization must be 'whitened', 'calibrated' or 'raw'")
    pixels = grid.pixels_xy()
    tables = _BeamTables(echoes, pixels, design, cfg, array, geom, gain_floor_db)
    beams = tables.matched_beam_sums(echoes, cfg, echoes.rng_seed)
    total = np.sum(beams * _doppler_factors(tables, xi, cfg), axis=1)
    empty = ~tables.keep.any(axis=1)
    norm_sq = tables.beam_norm_sq.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        if normalization == "whitened":
            total = np.where(empty, 0.0, total / np.sqrt(norm_sq))
        elif normalization == "calibrated":
            total = np.where(empty, 0.0, total / norm_sq)
        else:
            total = np.where(empty, 0.0, total)
    xi = np.asarray(xi, dtype=float)
    return ImageGrid(grid.coordinates, grid.axis1, grid.axis2,
                     total.reshape(grid.shape), (float(xi[0]), float(xi[1])),
                     empty.reshape(grid.shape))


def single_beam_images(
    echoes: EchoTensor,
    grid: GridSpec,
    design: ReflectorDesign,
    codebook: Codebook,
    cfg: OfdmConfig,
    array: BsArray,
    geom: SceneGeometry,
    gain_floor_db: float | None = GAIN_FLOOR_DB,
    normalization: str = "whitened",
) -> list[ImageGrid]:
    """Low-resolution per-beam images (subcarrier sum only), one per slot.

    Per-beam whitening divides by each beam's own model norm, preserving
    the phase while making the noise floor uniform.  Beams that miss the
    reflector yield all-zero images so the list stays aligned with the
    tensor's beam axis.
    """
    if normalization not in ("whitened", "raw"):
        raise ValueError("normalization must be 'whitened' or 'raw'")
    pixels = grid.pixels_xy()
    tables = _BeamTables(echoes, pixels, design, cfg, array, geom, gain_floor_db)
    beams = tables.matched_beam_sums(echoes, cfg, echoes.rng_seed)
    if normalization == "whitened":
        with np.errstate(divide="ignore", invalid="ignore"):
            beams = np.where(tables.keep, beams / np.sqrt(tables.beam_norm_sq), 0.0)
    images = []
    by_col = {col: j for j, col in enumerate(tables.used_cols)}
    for col in range(echoes.beam_count):
        if col in by_col:
            vals = beams[:, by_col[col]].reshape(grid.shape)
            empty = ~tables.keep[:, by_col[col]].reshape(grid.shape)
        else:
            vals = np.zeros(grid.shape, dtype=np.complex128)
            empty = np.ones(grid.shape, dtype=bool)
        images.append(ImageGrid(grid.coordinates, grid.axis1, grid.axis2, vals,
                                (0.0, 0.0), empty))
    return images


def point_response(
    echoes: EchoTensor,
    point_xy,
    design: ReflectorDesign,
    cfg: OfdmConfig,
    array: BsArray,
    geom: SceneGeometry,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-beam whitened image value at a single point (no gain floor).

    Each valid value has noise variance equal to the tensor's noise power.
    Returns (values, valid) arrays over the full beam axis; beams missing
    the reflector are zero with valid=False.
    """
    pixels = np.asarray(point_xy, dtype=float).reshape(1, 2)
    tables = _BeamTables(echoes, pixels, design, cfg, array, geom, gain_floor_db=None)
    beams = tables.matched_beam_sums(echoes, cfg, echoes.rng_seed)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        beams = np.where(tables.keep[0], beams / np.sqrt(tables.beam_norm_sq[0]), 0.0)
    values = np.zeros(echoes.beam_count, dtype=np.complex128)
    valid = np.zeros(echoes.beam_count, dtype=bool)
    for j, col in enumerate(tables.used_cols):
        values[col] = beams[j]
        valid[col] = tables.keep[0, j]
    return values, valid


def saf(
    target: PolarPoint,
    design: ReflectorDesign,
    codebook: Codebook,
    cfg: OfdmConfig,
    array: BsArray,
    geom: SceneGeometry,
    oversample: float = 3.0,
    window_cells: float = 4.0,
) -> ImageGrid:
    """Noiseless image of an ideal unit point target, peak-normalized.

    Its main-lobe widths are the measured spatial resolution.
    """
    scene = [TargetState(target, rcs=1.0)]
    echoes = synthesize(scene, design, codebook, cfg, array, geom, seed=0, noise=False)
    grid = auto_polar_grid(target, design, codebook, cfg, array, geom,
                           oversample=oversample, window_cells=window_cells)
    img = backproject(echoes, grid, (0.0, 0.0), design, codebook, cfg, array, geom)
    peak = np.abs(img.values).max()
    if peak > 0:
        img.values = img.values / peak
    return img


def sweep_velocity(codebook: Codebook, geom: SceneGeometry, cfg: OfdmConfig) -> float:
    """Average speed of the beam incidence point along the reflector."""
    angles = codebook.imaging_angles()
    if angles.size < 2:
        raise ValueError("need at least two imaging beams")
    x = incidence_point(np.sort(angles), geom)
    return float(np.mean(np.diff(x)) / cfg.slot_duration)


def apparent_azimuth(psi0: float, v_radial: float, v_sweep: float) -> float:
    """Azimuth where an uncompensated radial velocity relocates the peak."""
    return float(np.arcsin(np.sin(psi0) - v_radial / v_sweep))


@dataclass(frozen=True)
class MovingImagePrediction:
    peak: PolarPoint
    defocus: float                  # peak amplitude relative to the static case
    apparent_angle: float           # first-order shifted azimuth
    range_migration_warning: bool


def predict_moving_image(
    target: TargetState,
    design: ReflectorDesign,
    codebook: Codebook,
    cfg: OfdmConfig,
    geom: SceneGeometry,
    array: BsArray,
    far_field: bool = False,
    psi_candidates: np.ndarray | None = None,
) -> MovingImagePrediction:
    """Predicted peak location and amplitude loss for an uncompensated
    moving target.

    Evaluates the beam sum of the linear-plus-quadratic Doppler phase over
    the effective beams at candidate azimuths (radius separates out); the
    far-field branch uses the closed sinc form instead.
    """
    r0, psi0 = target.position.radius, target.position.angle
    v_r, v_t = target.velocity_radial, target.velocity_transverse
    lam = cfg.wavelength
    t_slot = cfg.slot_duration
    v_sw = sweep_velocity(codebook, geom, cfg)

    aperture = effective_aperture(design, target.position)
    mask = effective_beam_mask(aperture, codebook, geom)
    slots = codebook.slots()[mask]
    l_eff = max(int(mask.sum()), 1)

    a_eff = resolution.aperture_for_resolution(design, target.position, array, geom)
    rep = resolution.nf_resolution(target.position, a_eff, cfg)
    speed = float(np.hypot(*target.velocity_xy()))
    dwell = len(codebook) * t_slot
    migration = speed * dwell > 0.25 * min(rep.rho_R_nf, r0 * rep.rho_psi_nf)

    psi_hat = apparent_azimuth(psi0, v_r, v_sw)
    if psi_candidates is None:
        half = 3.0 * abs(psi_hat - psi0) + 6.0 * rep.rho_psi_nf / np.cos(psi0)
        psi_candidates = psi0 + np.linspace(-half, half, 601)

    if far_field:
        u = 2.0 * l_eff * t_slot * (v_sw * (np.sin(psi0) - np.sin(psi_candidates)) - v_r) / lam
        response = np.abs(np.sinc(u))
    else:
        lin = (v_sw * (np.sin(psi0) - np.sin(psi_candidates)) - v_r)[:, None] * slots[None, :] * t_slot
        quad = (
            v_sw**2 * (np.cos(psi0) ** 2 / (2 * r0) - np.cos(psi_candidates) ** 2 / (2 * r0))
            - (v_t / r0) * np.cos(psi0) * v_sw
        )[:, None] * (slots[None, :] * t_slot) ** 2
        response = np.abs(np.exp(4j * np.pi / lam * (lin + quad)).sum(axis=1)) / l_eff

    best = int(np.argmax(response))
    return MovingImagePrediction(
        peak=PolarPoint(r0, float(psi_candidates[best])),
        defocus=float(response[best]),
        apparent_angle=psi_hat,
        range_migration_warning=bool(migration),
    )


def save_image_csv(image: ImageGrid, path) -> None:
    """axis1, axis2, magnitude_dB, phase_rad rows; '.' decimal, UTF-8."""
    mag_db = image.magnitude_db()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis1", "axis2", "magnitude_db", "phase_rad"])
        for i, a1 in enumerate(image.axis1):
            for j, a2 in enumerate(image.axis2):
                writer.writerow([repr(float(a1)), repr(float(a2)),
                                 repr(float(mag_db[i, j])),
                                 repr(float(np.angle(image.values[i, j])))])


def save_image_binary(image: ImageGrid, path) -> None:
    """Same container style as the echo tensor: fixed header + c16 payload."""
    n1, n2 = image.shape
    coord_flag = 0 if image.coordinates == "polar" else 1
    a1_step = float(image.axis1[1] - image.axis1[0]) if n1 > 1 else 0.0
    a2_step = float(image.axis2[1] - image.axis2[0]) if n2 > 1 else 0.0
    header = _IMG_HEADER.pack(_IMG_MAGIC, n1, n2, float(image.axis1[0]), a1_step,
                              float(image.axis2[0]), a2_step, coord_flag)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(image.values, dtype="<c16").tobytes())


def load_image_binary(path) -> ImageGrid:
    raw = Path(path).read_bytes()
    magic, n1, n2, a1_0, a1_d, a2_0, a2_d, coord_flag = _IMG_HEADER.unpack_from(raw)
    if magic != _IMG_MAGIC:
        raise ValueError(f"{path}: not an image file")
    values = np.frombuffer(raw, dtype="<c16", offset=_IMG_HEADER.size,
                           count=n1 * n2).reshape(n1, n2).copy()
    axis1 = a1_0 + a1_d * np.arange(n1)
    axis2 = a2_0 + a2_d * np.arange(n2)
    return ImageGrid("polar" if coord_flag == 0 else "cartesian", axis1, axis2, values)


def save_gnuplot_matrix(image: ImageGrid, path) -> None:
    """Nonuniform-matrix file: first row holds axis2, first column axis1."""
    mag_db = image.magnitude_db()
    with open(path, "w", encoding="utf-8") as fh:
        header = [str(len(image.axis2))] + [repr(float(a)) for a in image.axis2]
        fh.write(" ".join(header) + "\n")
        for i, a1 in enumerate(image.axis1):
            row = [repr(float(a1))] + [repr(float(v)) for v in mag_db[i]]
            fh.write(" ".join(row) + "\n")
