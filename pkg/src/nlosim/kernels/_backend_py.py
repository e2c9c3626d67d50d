"""Numpy fallback for the per-(pixel, beam) subcarrier reduction."""

import numpy as np


def beam_pixel_sums(coeff, u, phi0, weight):
    """out[p, l] = weight[p, l] * exp(j*phi0[p, l]) * sum_q coeff[q-1, l] * exp(j*q*u[p, l]).

    Horner recurrence over the subcarrier index keeps memory at O(P*L)
    instead of materializing the (P, Q) phase table per beam.
    """
    q_count = coeff.shape[0]
    z = np.exp(1j * u)
    s = np.broadcast_to(coeff[q_count - 1], z.shape).copy()
    for q in range(q_count - 2, -1, -1):
        s *= z
        s += coeff[q]
    s *= z  # simple subcarrier index starts at 1
    return weight * np.exp(1j * phi0) * s
