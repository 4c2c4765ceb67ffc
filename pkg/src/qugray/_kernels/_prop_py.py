"""Pure-numpy piecewise-constant propagator.

Strategy: batch the per-step Hermitian eigendecompositions (np.linalg.eigh
accepts stacked matrices), build all step unitaries at once, then combine
them with a pairwise tree product along the time axis. The tree keeps every
matmul batched while preserving chronological order exactly.
"""

import numpy as np


def _step_unitaries(h_stack, dt):
    """exp(-i H dt) for a (..., d, d) stack of Hermitian matrices."""
    evals, evecs = np.linalg.eigh(h_stack)
    phases = np.exp(-1j * dt * evals)
    return np.einsum("...ij,...j,...kj->...ik", evecs, phases, evecs.conj())


def _chain(unitaries):
    """Ordered product U[M-1] @ ... @ U[0] along axis -3, batched."""
    stack = unitaries
    leftovers = []
    while stack.shape[-3] > 1:
        if stack.shape[-3] % 2 == 1:
            leftovers.append(stack[..., -1, :, :])
            stack = stack[..., :-1, :, :]
        stack = np.matmul(stack[..., 1::2, :, :], stack[..., 0::2, :, :])
    out = stack[..., 0, :, :]
    for left in reversed(leftovers):
        out = np.matmul(left, out)
    return out


def _hamiltonian_stack(drift_diag, coupling, wave, noise_diag):
    """H_k = diag(drift + noise_k) + wave_k * coupling, shape (..., M, d, d)."""
    d = drift_diag.shape[0]
    if noise_diag is None:
        noise_diag = np.zeros((wave.shape[0], d))
    diag = drift_diag + noise_diag
    h = np.zeros(diag.shape[:-1] + (d, d), dtype=complex)
    h += wave[:, None, None] * coupling
    idx = np.arange(d)
    h[..., idx, idx] += diag
    return h


def propagate_piecewise(drift_diag, coupling, wave, noise_diag, dt):
    """Time-ordered product over one noise trajectory (or None for closed).

    drift_diag: (d,) float, coupling: (d, d) complex Hermitian,
    wave: (M,) float, noise_diag: (M, d) float or None. Returns (d, d).
    """
    h = _hamiltonian_stack(np.asarray(drift_diag, dtype=float),
                           np.asarray(coupling, dtype=complex),
                           np.asarray(wave, dtype=float),
                           None if noise_diag is None else np.asarray(noise_diag, dtype=float))
    return _chain(_step_unitaries(h, dt))


def propagate_piecewise_batch(drift_diag, coupling, wave, noise_diags, dt,
                              chunk=32):
    """Propagators for a (K, M, d) stack of noise trajectories -> (K, d, d).

    Chunked over realizations to bound the memory of the batched eigh.
    """
    noise_diags = np.asarray(noise_diags, dtype=float)
    K, M, d = noise_diags.shape
    out = np.empty((K, d, d), dtype=complex)
    drift_diag = np.asarray(drift_diag, dtype=float)
    coupling = np.asarray(coupling, dtype=complex)
    wave = np.asarray(wave, dtype=float)
    for start in range(0, K, chunk):
        stop = min(start + chunk, K)
        h = _hamiltonian_stack(drift_diag, coupling, wave,
                               noise_diags[start:stop])
        out[start:stop] = _chain(_step_unitaries(h, dt))
    return out
