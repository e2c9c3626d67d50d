# Compiled per-(pixel, beam) subcarrier reduction; mirrors _backend_py.

import numpy as np

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)


def beam_pixel_sums(double complex[:, ::1] coeff,
                    double[:, ::1] u,
                    double[:, ::1] phi0,
                    double complex[:, ::1] weight):
    cdef Py_ssize_t q_count = coeff.shape[0]
    cdef Py_ssize_t n_beams = coeff.shape[1]
    cdef Py_ssize_t n_pix = u.shape[0]
    cdef Py_ssize_t p, l, q
    cdef double complex z, s, w
    cdef double complex j1 = 1j

    out = np.zeros((n_pix, n_beams), dtype=np.complex128)
    cdef double complex[:, ::1] out_v = out

    with nogil:
        for p in range(n_pix):
            for l in range(n_beams):
                w = weight[p, l]
                if w.real == 0.0 and w.imag == 0.0:
                    continue
                z = cexp(j1 * u[p, l])
                s = coeff[q_count - 1, l]
                for q in range(q_count - 2, -1, -1):
                    s = s * z + coeff[q, l]
                s = s * z
                out_v[p, l] = w * cexp(j1 * phi0[p, l]) * s
    return out
