import numpy as np
import pytest

from qugray import algebra
from qugray._kernels import _prop_py, backend, get_backends


def problem(d=3, M=37, K=5, seed=0):
    rng = np.random.default_rng(seed)
    drift = rng.normal(size=d) * 50.0
    a = np.zeros((d, d), dtype=complex)
    for n in range(1, d):
        a[n - 1, n] = np.sqrt(n)
    coupling = a + a.conj().T
    wave = rng.normal(size=M) * 5.0
    noise = rng.normal(size=(K, M, d))
    return drift, coupling, wave, noise


def sequential_oracle(drift, coupling, wave, noise_diag, dt):
    """Naive chronological product of per-step exponentials."""
    d = drift.size
    U = np.eye(d, dtype=complex)
    for k in range(wave.size):
        H = np.diag(drift + (noise_diag[k] if noise_diag is not None else 0.0)
                    ).astype(complex)
        H += wave[k] * coupling
        U = algebra.expm_skew(H, dt) @ U
    return U


class TestAgainstSequentialOracle:
    @pytest.mark.parametrize("d", [2, 3, 4])
    @pytest.mark.parametrize("M", [1, 2, 7, 64])
    def test_closed(self, d, M):
        drift, coupling, wave, _ = problem(d=d, M=M)
        dt = 1e-3
        oracle = sequential_oracle(drift, coupling, wave, None, dt)
        for name, impl in get_backends().items():
            got = impl.propagate_piecewise(drift, coupling, wave, None, dt)
            assert np.abs(got - oracle).max() < 1e-11, name

    def test_noisy_batch(self):
        drift, coupling, wave, noise = problem(M=33, K=4)
        dt = 2e-3
        for name, impl in get_backends().items():
            got = impl.propagate_piecewise_batch(drift, coupling, wave, noise,
                                                 dt)
            for r in range(noise.shape[0]):
                oracle = sequential_oracle(drift, coupling, wave, noise[r], dt)
                assert np.abs(got[r] - oracle).max() < 1e-11, name


class TestBackendAgreement:
    def test_backends_match(self):
        impls = get_backends()
        if len(impls) < 2:
            pytest.skip("compiled kernel unavailable")
        drift, coupling, wave, noise = problem(d=3, M=200, K=8)
        dt = 1e-3
        results = []
        for impl in impls.values():
            u0 = impl.propagate_piecewise(drift, coupling, wave, None, dt)
            us = impl.propagate_piecewise_batch(drift, coupling, wave, noise,
                                                dt)
            results.append((u0, us))
        assert np.abs(results[0][0] - results[1][0]).max() < 1e-12
        assert np.abs(results[0][1] - results[1][1]).max() < 1e-12

    def test_unitarity(self):
        drift, coupling, wave, noise = problem(d=5, M=300, K=3)
        for impl in get_backends().values():
            us = impl.propagate_piecewise_batch(drift, coupling, wave, noise,
                                                1e-3)
            for u in us:
                assert np.linalg.norm(u.conj().T @ u - np.eye(5)) < 1e-10

    def test_backend_reported(self):
        assert backend() in ("compiled", "python")

    def test_python_fallback_importable(self):
        # the fallback must stay importable even when the extension exists
        drift, coupling, wave, _ = problem(M=8)
        u = _prop_py.propagate_piecewise(drift, coupling, wave, None, 1e-3)
        assert u.shape == (3, 3)
