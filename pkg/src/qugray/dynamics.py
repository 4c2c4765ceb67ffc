"""Qudit Hamiltonian assembly, propagation, Monte-Carlo averaging, the
ground-truth noise-operator oracle, and dataset generation.

The Hamiltonian is the truncated anharmonic ladder

    H(t) = sum_j omega_j |j><j| + f(t) (a^dag + a) + sum_j g_j beta_j(t) |j><j|

propagated as a first-order product of step exponentials on the left-endpoint
grid (no midpoint rule, no rotating-wave approximation). Expectation vectors
are ordered initial-basis-major: for each basis element A_j, each of its
eigenvectors, each measured element A_i, giving d(d^2-1)^2 entries.
"""

import hashlib
import json
import multiprocessing
from dataclasses import dataclass

import numpy as np

from . import noisegen, pulses
from ._kernels import propagate_piecewise, propagate_piecewise_batch
from .algebra import gell_mann_basis
from .errors import DatasetIOError, InvalidConfigError, InvertibilityError

DATASET_ORDERING_VERSION = 1
# default split ratio: 8192 train / 1840 test at the full 10032-example scale
DEFAULT_TEST_FRACTION = 1840.0 / 10032.0


def dataset_split(n_examples, test_fraction=DEFAULT_TEST_FRACTION):
    n_test = int(round(n_examples * test_fraction))
    return n_examples - n_test, n_test


def annihilation(d):
    """Truncated annihilation operator, a|n> = sqrt(n)|n-1>."""
    a = np.zeros((d, d), dtype=complex)
    for n in range(1, d):
        a[n - 1, n] = np.sqrt(n)
    return a


@dataclass(frozen=True)
class SystemConfig:
    """Physical system + simulation grid. omega and g are per-level, rad/s."""

    dim: int
    omega: tuple
    carrier: pulses.CarrierSpec
    g: tuple
    noise: noisegen.NoiseSpec
    basis: str = "gell_mann"
    seed: int = 0
    n_max: int = 10

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(x) for x in self.omega))
        object.__setattr__(self, "g", tuple(float(x) for x in self.g))
        if self.dim < 2:
            raise InvalidConfigError("dim must be >= 2")
        if len(self.omega) != self.dim or len(self.g) != self.dim:
            raise InvalidConfigError("omega and g must have one entry per level")
        if len(self.carrier.scales) != self.dim - 1:
            raise InvalidConfigError("carrier needs dim - 1 channels")
        if self.noise.channels != self.dim:
            raise InvalidConfigError("noise needs one channel per level")
        if self.basis != "gell_mann":
            raise InvalidConfigError(
                f"unsupported basis {self.basis!r}; only 'gell_mann' carries "
                "the informationally complete measurement layout")

    @property
    def coupling(self):
        a = annihilation(self.dim)
        return a + a.conj().T

    def observable_basis(self):
        return gell_mann_basis(self.dim)

    @property
    def closed(self):
        return all(gj == 0.0 for gj in self.g)

    def a_max(self):
        """Dataset sampling bound, 2 pi / T per coefficient."""
        return pulses.max_amplitude(self.carrier.total_time, self.n_max,
                                    mode="total-envelope")

    def to_dict(self):
        return {
            "dim": self.dim,
            "omega_rad_s": list(self.omega),
            "g_rad_s": list(self.g),
            "carrier_scales": list(self.carrier.scales),
            "drive_freqs_rad_s": list(self.carrier.drive_freqs),
            "evolution_time_s": self.carrier.total_time,
            "time_steps": self.carrier.steps,
            "n_max": self.n_max,
            "alpha_1": self.noise.alpha1,
            "alpha_2": self.noise.alpha2,
            "noise_f_min_hz": self.noise.cutoff,
            "realisations": self.noise.realizations,
            "basis": self.basis,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        d = int(data["dim"])
        carrier = pulses.CarrierSpec(
            scales=data["carrier_scales"],
            drive_freqs=data["drive_freqs_rad_s"],
            total_time=float(data["evolution_time_s"]),
            steps=int(data["time_steps"]),
        )
        noise = noisegen.NoiseSpec(
            alpha1=float(data["alpha_1"]),
            alpha2=float(data["alpha_2"]),
            channels=d,
            realizations=int(data["realisations"]),
            steps=int(data["time_steps"]),
            total_time=float(data["evolution_time_s"]),
            f_min=float(data["noise_f_min_hz"]),
        )
        return cls(dim=d, omega=data["omega_rad_s"], carrier=carrier,
                   g=data["g_rad_s"], noise=noise,
                   basis=data.get("basis", "gell_mann"),
                   seed=int(data.get("seed", 0)),
                   n_max=int(data["n_max"]))

    def config_hash(self):
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def hamiltonian_at(config, params, beta_values, k):
    """Dense H(t_k) for one noise sample vector; mainly a test/reference path,
    propagation goes through the vectorized kernels."""
    if not 0 <= k < config.carrier.steps:
        raise IndexError(f"step index {k} outside grid of {config.carrier.steps}")
    beta_values = np.asarray(beta_values, dtype=float)
    if beta_values.shape != (config.dim,):
        raise InvalidConfigError("beta_values must have one entry per level")
    wave = pulses.waveform(params, config.carrier)
    H = np.diag(np.array(config.omega) + np.array(config.g) * beta_values).astype(complex)
    H += wave[k] * config.coupling
    return H


def synthesize_noise(config, seed=None):
    return noisegen.synthesize(config.noise,
                               seed=config.seed if seed is None else seed)


def propagate_closed(config, params):
    """U_0(T): noise term omitted; chronological product, k = 0 applied first."""
    wave = pulses.waveform(params, config.carrier)
    return propagate_piecewise(np.array(config.omega), config.coupling, wave,
                               None, config.carrier.dt)


def _noise_diag(config, real_set, r):
    # samples[channel, r, step] -> (M, d) scaled by per-level coupling
    return real_set.samples[:, r, :].T * np.array(config.g)


def propagate_noisy(config, params, real_set, r):
    """U(T) over realization r of an ensemble."""
    if not 0 <= r < real_set.realizations:
        raise InvalidConfigError(f"realization {r} not in ensemble of "
                                 f"{real_set.realizations}")
    wave = pulses.waveform(params, config.carrier)
    return propagate_piecewise(np.array(config.omega), config.coupling, wave,
                               _noise_diag(config, real_set, r),
                               config.carrier.dt)


def propagate_ensemble(config, params, real_set):
    """All K noisy propagators, shape (K, d, d)."""
    wave = pulses.waveform(params, config.carrier)
    noise = real_set.samples.transpose(1, 2, 0) * np.array(config.g)
    return propagate_piecewise_batch(np.array(config.omega), config.coupling,
                                     wave, noise, config.carrier.dt)


def initial_states(basis):
    """Eigenvector kets of every basis element, shape (n_obs * d, d); row
    (j * d + k) is the k-th eigenvector of A_j."""
    return np.concatenate([vecs.T for vecs in basis.eigenvectors], axis=0)


def expectations_from_propagators(u_stack, basis):
    """Ensemble-averaged expectations, flat (j-major, k, then i) ordering."""
    kets = initial_states(basis)
    psi = np.einsum("rab,sb->rsa", u_stack, kets)
    obs = np.stack(basis.elements)
    values = np.einsum("rsa,iab,rsb->si", psi.conj(), obs, psi).real
    return (values / u_stack.shape[0]).reshape(-1)


def monte_carlo_expectations(config, params, real_set=None, basis=None):
    """Expectation vector E of length d(d^2-1)^2; closed system if the config
    couples to no noise."""
    basis = basis if basis is not None else config.observable_basis()
    if config.closed:
        u_stack = propagate_closed(config, params)[None, :, :]
    else:
        if real_set is None:
            real_set = synthesize_noise(config)
        u_stack = propagate_ensemble(config, params, real_set)
    return expectations_from_propagators(u_stack, basis)


def heisenberg_average(u_stack, O):
    """mean_r U_r^H O U_r."""
    return np.einsum("rba,bc,rcd->ad", u_stack.conj(), O, u_stack) / u_stack.shape[0]


def choi_of_propagators(u_stack):
    """Trace-1 Choi matrix of rho -> mean_r U_r rho U_r^H."""
    d = u_stack.shape[-1]
    vecs = u_stack.reshape(u_stack.shape[0], -1)
    return np.einsum("ra,rb->ab", vecs, vecs.conj()) / (d * u_stack.shape[0])


def oracle_noise_operator(config, params, real_set, O):
    """Ground-truth V_O = O^-1 U_0 mean_r(U_r^H O U_r) U_0^H.

    Satisfies tr(V_O U_0 rho U_0^H O) = mean_r tr(O U_r rho U_r^H) for every
    rho. O must be invertible; shift it first if not.
    """
    O = np.asarray(O, dtype=complex)
    evals = np.linalg.eigvalsh(O)
    if np.abs(evals).min() < 1e-6 * np.abs(evals).max():
        raise InvertibilityError("observable is singular; shift it first")
    u0 = propagate_closed(config, params)
    if config.closed:
        u_stack = u0[None, :, :]
    else:
        u_stack = propagate_ensemble(config, params, real_set)
    avg = heisenberg_average(u_stack, O)
    return np.linalg.solve(O, u0 @ avg @ u0.conj().T)


def assemble_expectation(table, basis, rho, O):
    """Expectation of O from initial state rho using a (j, k, i) table of
    basis-eigenvector expectations (the generalization identity).

    table[j, k, i] is the expectation of A_i when starting from the k-th
    eigenvector of A_j. Identity components of O and rho are handled exactly
    (the evolution is trace preserving).
    """
    n_obs = len(basis)
    d = basis.dim
    table = np.asarray(table, dtype=float).reshape(n_obs, d, n_obs)
    a = basis.expand(O)
    b = basis.expand(rho)
    lam = np.stack(basis.eigenvalues)  # (j, k)
    traceless = np.einsum("j,jk,jki->i", b, lam, table)
    from_identity = table[0].mean(axis=0)  # I/d via A_0's eigenbasis
    expect_ai = traceless + from_identity
    return float(np.trace(O).real / d + a @ expect_ai)


@dataclass
class DatasetExample:
    theta: np.ndarray
    expectations: np.ndarray


_WORKER_STATE = {}


def _init_worker(config_dict, samples, total_time, seed, a_max):
    cfg = SystemConfig.from_dict(config_dict)
    _WORKER_STATE["config"] = cfg
    _WORKER_STATE["basis"] = cfg.observable_basis()
    _WORKER_STATE["real_set"] = noisegen.NoiseRealizationSet(
        samples=samples, seed=seed, total_time=total_time)
    _WORKER_STATE["a_max"] = a_max


def _make_example(index):
    cfg = _WORKER_STATE["config"]
    params = _sample_example_params(cfg, _WORKER_STATE["a_max"], cfg.seed, index)
    E = monte_carlo_expectations(cfg, params,
                                 real_set=_WORKER_STATE["real_set"],
                                 basis=_WORKER_STATE["basis"])
    return index, params.flatten(), E


def _sample_example_params(config, a_max, seed, index):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(1, index))
    rng = np.random.Generator(np.random.Philox(ss))
    amps = rng.uniform(-a_max, a_max, size=(config.n_max, config.dim - 1, 2))
    return pulses.PulseParams(dim=config.dim, amplitudes=amps)


def generate_dataset(config, n_examples, seed=None, workers=1,
                     test_fraction=DEFAULT_TEST_FRACTION):
    """Sample pulse/expectation pairs; one noise ensemble is synthesized per
    dataset and reused across examples. Deterministic for fixed (config, seed)
    regardless of worker count.
    """
    if n_examples < 1:
        raise InvalidConfigError("need at least one example")
    seed = config.seed if seed is None else seed
    real_set = noisegen.synthesize(config.noise, seed=seed)
    a_max = config.a_max()
    cfg_dict = dict(config.to_dict(), seed=seed)
    init_args = (cfg_dict, real_set.samples, real_set.total_time, seed, a_max)
    indices = range(n_examples)
    if workers <= 1:
        _init_worker(*init_args)
        results = [_make_example(i) for i in indices]
    else:
        with multiprocessing.Pool(workers, initializer=_init_worker,
                                  initargs=init_args) as pool:
            results = list(pool.imap(_make_example, indices, chunksize=8))
    results.sort(key=lambda item: item[0])
    examples = [DatasetExample(theta=theta, expectations=E)
                for _, theta, E in results]
    _, n_test = dataset_split(n_examples, test_fraction)
    manifest = {
        "format": "qugray-dataset",
        "ordering_version": DATASET_ORDERING_VERSION,
        "config": cfg_dict,
        "config_hash": SystemConfig.from_dict(cfg_dict).config_hash(),
        "seed": seed,
        "n_examples": n_examples,
        "n_train": n_examples - n_test,
        "n_test": n_test,
    }
    return examples, manifest


def manifest_path(dataset_path):
    return f"{dataset_path}.manifest.json"


def save_dataset(path, examples, manifest):
    try:
        with open(path, "w") as fh:
            for ex in examples:
                fh.write(json.dumps({"theta": list(ex.theta),
                                     "expectations": list(ex.expectations)}))
                fh.write("\n")
        with open(manifest_path(path), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset: {exc}") from exc


def load_dataset(path):
    try:
        with open(manifest_path(path)) as fh:
            manifest = json.load(fh)
        examples = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                examples.append(DatasetExample(
                    theta=np.array(obj["theta"], dtype=float),
                    expectations=np.array(obj["expectations"], dtype=float)))
    except OSError as exc:
        raise DatasetIOError(f"cannot read dataset: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise DatasetIOError(f"malformed dataset {path}: {exc}") from exc
    if manifest.get("format") != "qugray-dataset":
        raise DatasetIOError(f"{path}: missing or foreign manifest")
    d = int(manifest["config"]["dim"])
    n_max = int(manifest["config"]["n_max"])
    for i, ex in enumerate(examples):
        if ex.theta.size != 2 * (d - 1) * n_max or \
                ex.expectations.size != d * (d * d - 1) ** 2:
            raise DatasetIOError(f"{path}: example {i} has wrong vector sizes"
                                 f" for d={d}, n_max={n_max}")
    return examples, manifest
