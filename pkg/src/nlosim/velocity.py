"""Velocity-vector estimation from the phase history of per-beam images.

A target moving radially ramps the per-beam image phase linearly with the
slot index; a transverse velocity bends it quadratically through the
wavefront curvature.  Weighted least squares on [1, l, l^2] recovers both,
with the intercept absorbing the target's own scattering phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import EchoTensor, doppler_exact
from .geometry import PolarPoint, SceneGeometry
from .imaging import GridSpec, backproject, point_response, single_beam_images, sweep_velocity
from .reflector import ReflectorDesign, effective_aperture, effective_beam_mask
from .waveform import BsArray, Codebook, OfdmConfig


@dataclass(frozen=True)
class PhaseTrack:
    """Unwrapped per-beam phase samples at one anchor point."""

    beam_indices: np.ndarray      # centered slot indices
    unwrapped_phase: np.ndarray   # radians; meaningful inside the mask
    weights: np.ndarray           # per-sample phase variance, 1/(2*SNR)
    effective_mask: np.ndarray
    unwrap_suspicious: bool = False


@dataclass(frozen=True)
class VelocityEstimate:
    v_radial: float
    v_transverse: float
    a1: float                     # radians per slot index
    a2: float                     # radians per squared slot index
    covariance: np.ndarray        # 2x2, (v_radial, v_transverse)
    crb: np.ndarray               # 2x2 lower bound, same ordering
    anchor: PolarPoint
    residual: float = np.nan      # weighted mean squared fit residual
    history: tuple = field(default=(), repr=False)
    note: str | None = None

    def velocity_xy(self) -> np.ndarray:
        psi = self.anchor.angle
        u_r = np.array([np.sin(psi), np.cos(psi)])
        u_t = np.array([-np.cos(psi), np.sin(psi)])
        return self.v_radial * u_r + self.v_transverse * u_t


def _unwrap_in_mask(phase: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, bool]:
    """Sequential 2*pi correction inside the (contiguous) effective mask."""
    out = phase.copy()
    idx = np.flatnonzero(mask)
    suspicious = False
    for a, b in zip(idx[:-1], idx[1:]):
        step = out[b] - out[a]
        out[b] -= 2.0 * np.pi * np.round(step / (2.0 * np.pi))
        if abs(out[b] - out[a]) > 0.9 * np.pi:
            suspicious = True
    return out, suspicious


def coarse_position(
    images: list,
    effective_mask: np.ndarray | None = None,
    detection_threshold_db: float = 8.0,
) -> PolarPoint:
    """Average of per-beam argmax positions over detectable beams.

    A beam counts as detecting the target when its image peak clears the
    beam's median level by the threshold.
    """
    positions = []
    for i, img in enumerate(images):
        if effective_mask is not None and not effective_mask[i]:
            continue
        mag = np.abs(img.values)
        peak = mag.max()
        med = np.median(mag)
        if peak <= 0 or med <= 0:
            continue
        if 20.0 * np.log10(peak / med) < detection_threshold_db:
            continue
        i0, j0 = np.unravel_index(np.argmax(mag), mag.shape)
        if img.coordinates == "polar":
            r, p = img.axis1[i0], img.axis2[j0]
            positions.append([r * np.sin(p), r * np.cos(p)])
        else:
            positions.append([img.axis1[i0], img.axis2[j0]])
    if not positions:
        raise ValueError("target not detectable pre-stack")
    mean_xy = np.mean(positions, axis=0)
    return PolarPoint.from_xy(mean_xy)


def coarse_positions(
    images: list,
    n_targets: int,
    effective_mask: np.ndarray | None = None,
    detection_threshold_db: float = 8.0,
    suppress_cells: int = 3,
) -> list[PolarPoint]:
    """Local maxima of the beam-averaged magnitude, strongest first."""
    stack = []
    for i, img in enumerate(images):
        if effective_mask is None or effective_mask[i]:
            stack.append(np.abs(img.values))
    if not stack:
        raise ValueError("no usable beams")
    mean_mag = np.mean(stack, axis=0)
    med = np.median(mean_mag)
    work = mean_mag.copy()
    found = []
    tmpl = images[0]
    for _ in range(n_targets):
        i0, j0 = np.unravel_index(np.argmax(work), work.shape)
        if med > 0 and 20.0 * np.log10(work[i0, j0] / med) < detection_threshold_db:
            break
        if tmpl.coordinates == "polar":
            r, p = tmpl.axis1[i0], tmpl.axis2[j0]
            found.append(PolarPoint(float(r), float(p)))
        else:
            found.append(PolarPoint.from_xy((tmpl.axis1[i0], tmpl.axis2[j0])))
        work[max(0, i0 - suppress_cells):i0 + suppress_cells + 1,
             max(0, j0 - suppress_cells):j0 + suppress_cells + 1] = 0.0
    if not found:
        raise ValueError("target not detectable pre-stack")
    return found


def track_from_values(
    beam_values: np.ndarray,
    slots: np.ndarray,
    snr_db: np.ndarray,
    effective_mask: np.ndarray,
) -> PhaseTrack:
    """Build the unwrapped, weighted phase track from per-beam samples."""
    snr_lin = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    with np.errstate(divide="ignore"):
        weights = np.where(snr_lin > 0, 1.0 / (2.0 * snr_lin), np.inf)
    phase = np.angle(beam_values)
    unwrapped, suspicious = _unwrap_in_mask(phase, effective_mask)
    return PhaseTrack(np.asarray(slots), unwrapped, weights,
                      np.asarray(effective_mask, dtype=bool), suspicious)


def extract_phase_track(
    images: list,
    anchor: PolarPoint,
    snr_db: np.ndarray,
    effective_mask: np.ndarray,
    slots: np.ndarray | None = None,
) -> PhaseTrack:
    """Sample each per-beam image at the anchor and unwrap along slots."""
    tmpl = images[0]
    if tmpl.coordinates == "polar":
        i0 = int(np.argmin(np.abs(tmpl.axis1 - anchor.radius)))
        j0 = int(np.argmin(np.abs(tmpl.axis2 - anchor.angle)))
    else:
        axy = anchor.to_xy()
        i0 = int(np.argmin(np.abs(tmpl.axis1 - axy[0])))
        j0 = int(np.argmin(np.abs(tmpl.axis2 - axy[1])))
    values = np.array([img.values[i0, j0] for img in images])
    if slots is None:
        slots = np.arange(len(images)) - len(images) // 2
    return track_from_values(values, slots, snr_db, effective_mask)


def fit_velocity(
    track: PhaseTrack,
    anchor: PolarPoint,
    v_sweep: float,
    cfg: OfdmConfig,
) -> VelocityEstimate:
    """Weighted least squares of the quadratic phase model.

    Regressors are [1, l, l^2]; the intercept absorbs the constant target
    phase, and the reported covariance/CRB is for the slope and curvature
    marginal of it, mapped to (v_radial, v_transverse).  A receding target
    loses carrier phase as its path grows, so the slope maps with a minus:
    v_radial = -lambda * a1 / (4*pi*T), and likewise for the curvature.
    """
    mask = track.effective_mask & np.isfinite(track.weights)
    if mask.sum() < 3:
        raise ValueError("need at least three effective phase samples")
    ell = track.beam_indices[mask].astype(float)
    phi = track.unwrapped_phase[mask]
    var = track.weights[mask]
    design = np.column_stack([np.ones_like(ell), ell, ell**2])
    w = 1.0 / var
    normal = design.T @ (design * w[:, None])
    try:
        cov_a = np.linalg.inv(normal)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular phase regression (collinear samples)") from exc
    coeffs = cov_a @ (design.T @ (phi * w))
    resid = phi - design @ coeffs
    wmsr = float(np.average(resid**2, weights=w))

    lam, t_slot = cfg.wavelength, cfg.slot_duration
    scale_r = -lam / (4.0 * np.pi * t_slot)
    scale_t = (-lam * anchor.radius
               / (4.0 * np.pi * t_slot * (v_sweep * t_slot) * np.cos(anchor.angle)))
    jac = np.diag([scale_r, scale_t])
    cov_v = jac @ cov_a[1:, 1:] @ jac.T
    return VelocityEstimate(
        v_radial=float(scale_r * coeffs[1]),
        v_transverse=float(scale_t * coeffs[2]),
        a1=float(coeffs[1]),
        a2=float(coeffs[2]),
        covariance=cov_v,
        crb=cov_v.copy(),
        anchor=anchor,
        residual=wmsr,
    )


def _estimated_snr_db(beam_values: np.ndarray, noise_var) -> np.ndarray:
    """Data-driven per-beam SNR at the anchor (no target knowledge needed)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.abs(beam_values) ** 2 / noise_var - 1.0
    snr = np.where(np.isfinite(snr), np.maximum(snr, 1e-3), 1e-3)
    return 10.0 * np.log10(snr)


def _trim_mask(mask: np.ndarray, snr_db: np.ndarray, drop_db: float = 20.0) -> np.ndarray:
    """Largest contiguous run of beams within drop_db of the best one.

    Low-SNR samples in the unwrap chain would propagate bogus 2*pi branches
    into every later sample, so they are excluded before unwrapping.
    """
    mask = mask.copy()
    if not mask.any():
        return mask
    mask &= snr_db >= snr_db[mask].max() - drop_db
    best_run, run_start, n = (0, 0), None, len(mask)
    for i in range(n + 1):
        if i < n and mask[i]:
            if run_start is None:
                run_start = i
        elif run_start is not None:
            if i - run_start > best_run[1] - best_run[0]:
                best_run = (run_start, i)
            run_start = None
    out = np.zeros_like(mask)
    out[best_run[0]:best_run[1]] = True
    return out


def estimate_velocity(
    echoes: EchoTensor,
    design: ReflectorDesign,
    codebook: Codebook,
    cfg: OfdmConfig,
    array: BsArray,
    geom: SceneGeometry,
    coarse_grid: GridSpec,
    n_targets: int = 1,
    detection_threshold_db: float = 8.0,
    snr_db: np.ndarray | None = None,
) -> list[VelocityEstimate]:
    """Coarse position -> phase track -> weighted fit, per detected target.

    Per-beam SNR weights default to a data-driven estimate at the anchor;
    pass snr_db to use model values instead.
    """
    images = single_beam_images(echoes, coarse_grid, design, codebook, cfg, array, geom)
    v_sw = sweep_velocity(codebook, geom, cfg)
    slots = np.array([rec.slot for rec in echoes.per_beam])
    anchors = coarse_positions(images, n_targets,
                               detection_threshold_db=detection_threshold_db)
    estimates = []
    for anchor in anchors:
        aperture = effective_aperture(design, anchor)
        mask = effective_beam_mask(aperture, codebook, geom)
        mask &= np.array([rec.hits_reflector for rec in echoes.per_beam])
        values, valid = point_response(echoes, anchor.to_xy(), design, cfg, array, geom)
        mask &= valid
        if snr_db is None:
            # whitened point responses all share the tensor's noise power
            weights_db = _estimated_snr_db(values, echoes.noise_power)
        else:
            weights_db = np.asarray(snr_db, dtype=float)
        mask = _trim_mask(mask, weights_db)
        track = track_from_values(values, slots, weights_db, mask)
        estimates.append(fit_velocity(track, anchor, v_sw, cfg))
    return estimates


def iterate_refine(
    echoes: EchoTensor,
    initial: VelocityEstimate,
    rounds: int,
    design: ReflectorDesign,
    codebook: Codebook,
    cfg: OfdmConfig,
    array: BsArray,
    geom: SceneGeometry,
    refine_grid: GridSpec | None = None,
    snr_db: np.ndarray | None = None,
) -> VelocityEstimate:
    """Re-anchor on the Doppler-corrected coherent image and refit.

    Each round forms the image compensated with the current velocity, takes
    its argmax as the new anchor, and refits the phase track there.  If the
    fit residual grows two rounds in a row the best estimate so far is
    returned with a note.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    current = initial
    best = initial
    history = [initial]
    grow_streak = 0
    v_sw = sweep_velocity(codebook, geom, cfg)
    slots = np.array([rec.slot for rec in echoes.per_beam])
    for _ in range(rounds - 1):
        grid = refine_grid
        if grid is None:
            from .imaging import auto_polar_grid

            grid = auto_polar_grid(current.anchor, design, codebook, cfg, array, geom)
        img = backproject(echoes, grid, current.velocity_xy(), design, codebook,
                          cfg, array, geom)
        i0, j0 = img.peak_index()
        anchor = PolarPoint(float(img.axis1[i0]), float(img.axis2[j0]))
        aperture = effective_aperture(design, anchor)
        mask = effective_beam_mask(aperture, codebook, geom)
        mask &= np.array([rec.hits_reflector for rec in echoes.per_beam])
        values, valid = point_response(echoes, anchor.to_xy(), design, cfg, array, geom)
        mask &= valid
        if snr_db is None:
            weights_db = _estimated_snr_db(values, echoes.noise_power)
        else:
            weights_db = np.asarray(snr_db, dtype=float)
        mask = _trim_mask(mask, weights_db)
        track = track_from_values(values, slots, weights_db, mask)
        current = fit_velocity(track, anchor, v_sw, cfg)
        history.append(current)
        if current.residual > history[-2].residual:
            grow_streak += 1
            if grow_streak >= 2:
                return replace(best, history=tuple(history),
                               note="diverged; best round returned")
        else:
            grow_streak = 0
        if current.residual <= best.residual or not np.isfinite(best.residual):
            best = current
    return replace(current, history=tuple(history))
