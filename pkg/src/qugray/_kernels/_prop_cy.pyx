# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled piecewise-constant propagator.

Per step: assemble H_k, diagonalize with LAPACK zheev, accumulate
U <- exp(-i H_k dt) @ U. Buffers are allocated once per call; the loop body
is pure C plus one LAPACK call, which is where the pure-numpy path loses
time on temporary stacks.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin
from libc.stdlib cimport free, malloc
from scipy.linalg.cython_lapack cimport zheev

cnp.import_array()


cdef struct WorkSpace:
    double complex* h
    double complex* work
    double* rwork
    double* evals
    double complex* step
    double complex* acc
    int lwork


cdef int _ws_alloc(WorkSpace* ws, int d) nogil:
    ws.lwork = 4 * d
    ws.h = <double complex*> malloc(d * d * sizeof(double complex))
    ws.work = <double complex*> malloc(ws.lwork * sizeof(double complex))
    ws.rwork = <double*> malloc((3 * d - 2) * sizeof(double))
    ws.evals = <double*> malloc(d * sizeof(double))
    ws.step = <double complex*> malloc(d * d * sizeof(double complex))
    ws.acc = <double complex*> malloc(d * d * sizeof(double complex))
    if (ws.h == NULL or ws.work == NULL or ws.rwork == NULL or
            ws.evals == NULL or ws.step == NULL or ws.acc == NULL):
        return -1
    return 0


cdef void _ws_free(WorkSpace* ws) nogil:
    free(ws.h); free(ws.work); free(ws.rwork)
    free(ws.evals); free(ws.step); free(ws.acc)


cdef int _propagate_one(double* drift, double complex* coupling,
                        double* wave, double* noise, int M, int d,
                        double dt, double complex* out, WorkSpace* ws) nogil:
    """Accumulate the ordered product into out (row-major d x d)."""
    cdef int k, i, j, l, info
    cdef char jobz = b'V'
    cdef char uplo = b'L'
    cdef double complex phase, vil
    cdef double ang
    for i in range(d * d):
        out[i] = 0.0
    for i in range(d):
        out[i * d + i] = 1.0
    for k in range(M):
        # Column-major Hermitian H(t_k): transpose of the row-major build,
        # obtained by swapping the coupling indices.
        for j in range(d):
            for i in range(d):
                ws.h[j * d + i] = wave[k] * coupling[j * d + i].conjugate()
        for i in range(d):
            ws.h[i * d + i] = ws.h[i * d + i] + drift[i]
        if noise != NULL:
            for i in range(d):
                ws.h[i * d + i] = ws.h[i * d + i] + noise[k * d + i]
        zheev(&jobz, &uplo, &d, ws.h, &d, ws.evals, ws.work, &ws.lwork,
              ws.rwork, &info)
        if info != 0:
            return info
        # step := V diag(exp(-i w dt)) V^H, row-major. Eigenvector matrix V
        # sits column-major in ws.h: V[i, l] = ws.h[l * d + i].
        for i in range(d * d):
            ws.step[i] = 0.0
        for l in range(d):
            ang = -ws.evals[l] * dt
            phase = cos(ang) + 1j * sin(ang)
            for i in range(d):
                vil = ws.h[l * d + i] * phase
                for j in range(d):
                    ws.step[i * d + j] = ws.step[i * d + j] + \
                        vil * ws.h[l * d + j].conjugate()
        # acc := step @ out
        for i in range(d):
            for j in range(d):
                ws.acc[i * d + j] = 0.0
            for l in range(d):
                vil = ws.step[i * d + l]
                for j in range(d):
                    ws.acc[i * d + j] = ws.acc[i * d + j] + vil * out[l * d + j]
        for i in range(d * d):
            out[i] = ws.acc[i]
    return 0


def propagate_piecewise(drift_diag, coupling, wave, noise_diag, double dt):
    """Single-trajectory propagator; mirrors the pure-python signature."""
    cdef cnp.ndarray[double, ndim=1, mode="c"] drift = \
        np.ascontiguousarray(drift_diag, dtype=np.float64)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2, mode="c"] coup = \
        np.ascontiguousarray(coupling, dtype=np.complex128)
    cdef cnp.ndarray[double, ndim=1, mode="c"] wv = \
        np.ascontiguousarray(wave, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] noise
    cdef int d = drift.shape[0]
    cdef int M = wv.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2, mode="c"] out = \
        np.empty((d, d), dtype=np.complex128)
    cdef WorkSpace ws
    cdef int info
    if _ws_alloc(&ws, d) != 0:
        _ws_free(&ws)
        raise MemoryError("kernel workspace allocation failed")
    try:
        if noise_diag is not None:
            noise = np.ascontiguousarray(noise_diag, dtype=np.float64)
            info = _propagate_one(&drift[0], &coup[0, 0], &wv[0],
                                  &noise[0, 0], M, d, dt, &out[0, 0], &ws)
        else:
            info = _propagate_one(&drift[0], &coup[0, 0], &wv[0], NULL,
                                  M, d, dt, &out[0, 0], &ws)
    finally:
        _ws_free(&ws)
    if info != 0:
        raise RuntimeError(f"zheev failed with info={info}")
    return out


def propagate_piecewise_batch(drift_diag, coupling, wave, noise_diags, double dt):
    """(K, M, d) noise stack -> (K, d, d) propagators."""
    cdef cnp.ndarray[double, ndim=1, mode="c"] drift = \
        np.ascontiguousarray(drift_diag, dtype=np.float64)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2, mode="c"] coup = \
        np.ascontiguousarray(coupling, dtype=np.complex128)
    cdef cnp.ndarray[double, ndim=1, mode="c"] wv = \
        np.ascontiguousarray(wave, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] noise = \
        np.ascontiguousarray(noise_diags, dtype=np.float64)
    cdef int K = noise.shape[0]
    cdef int M = wv.shape[0]
    cdef int d = drift.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=3, mode="c"] out = \
        np.empty((K, d, d), dtype=np.complex128)
    cdef WorkSpace ws
    cdef int r, info = 0
    if _ws_alloc(&ws, d) != 0:
        _ws_free(&ws)
        raise MemoryError("kernel workspace allocation failed")
    try:
        with nogil:
            for r in range(K):
                info = _propagate_one(&drift[0], &coup[0, 0], &wv[0],
                                      &noise[r, 0, 0], M, d, dt,
                                      &out[r, 0, 0], &ws)
                if info != 0:
                    break
    finally:
        _ws_free(&ws)
    if info != 0:
        raise RuntimeError(f"zheev failed with info={info}")
    return out
