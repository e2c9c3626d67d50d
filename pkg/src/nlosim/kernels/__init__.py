"""Hot inner loop of image formation: the subcarrier sum per (pixel, beam).

A compiled backend is used when the extension built; otherwise the numpy
fallback takes over.  Set NLOSIM_PURE_PYTHON=1 to force the fallback (the
two are interchangeable and tested for equality).
"""

import os

import numpy as np

from . import _backend_py

_force_py = os.environ.get("NLOSIM_PURE_PYTHON", "0") not in ("", "0")
if _force_py:
    _backend = _backend_py
    COMPILED = False
else:
    try:
        from . import _backend_cy as _backend  # type: ignore[no-redef]
        COMPILED = True
    except ImportError:
        _backend = _backend_py
        COMPILED = False

BACKEND_NAME = "compiled" if COMPILED else "numpy"


def beam_pixel_sums(coeff, u, phi0, weight):
    """Per-(pixel, beam) matched-filter sums over subcarriers.

    Parameters
    ----------
    coeff : (Q, L) complex
        Received samples after pilot compensation.
    u : (P, L) float
        Phase advance per subcarrier index at each pixel/beam.
    phi0 : (P, L) float
        Carrier phase at each pixel/beam.
    weight : (P, L) complex
        Per-contribution weight; an exact zero skips the pixel/beam pair.

    Returns
    -------
    (P, L) complex array.
    """
    coeff = np.ascontiguousarray(coeff, dtype=np.complex128)
    u = np.ascontiguousarray(u, dtype=np.float64)
    phi0 = np.ascontiguousarray(phi0, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.complex128)
    if coeff.ndim != 2 or u.ndim != 2:
        raise ValueError("coeff and u must be 2-D")
    if u.shape != phi0.shape or u.shape != weight.shape:
        raise ValueError("u, phi0 and weight must share one (pixels, beams) shape")
    if coeff.shape[1] != u.shape[1]:
        raise ValueError("beam axes of coeff and u disagree")
    if coeff.shape[0] < 1:
        raise ValueError("need at least one subcarrier")
    return np.asarray(_backend.beam_pixel_sums(coeff, u, phi0, weight))
