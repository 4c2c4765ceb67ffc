"""Local polynomial surrogates of the learned noise operators and the
physics-based control cost built from them.

The neighbourhood is amplitude scaling: the pulse theta is replaced by
eps * theta and the model's noise operators are sampled on an eps grid (no
propagation needed, the blackbox alone determines V). Each matrix element's
real and imaginary parts are fitted independently to a polynomial in eps and
reassembled into coefficient matrices; stored residuals bound the surrogate
error on the grid.

The cost J(eps) adds the closed-system gate infidelity at eps * theta to the
noise-sensitivity term N(eps) = sum_k ||V_k(eps) - I||_F, so J >= N >= 0 and
J = 0 exactly when noise is cancelled and the target is met.
"""

from dataclasses import dataclass

import numpy as np

from . import dynamics, pulses
from .errors import DomainError, InvalidConfigError

DEFAULT_GRID = np.linspace(-1.0, 1.0, 41)


@dataclass
class TaylorExpansion:
    observable_index: int
    order: int
    coefficients: list   # complex (d, d) arrays X_0 .. X_k
    residuals: np.ndarray  # (d, d) max abs fit error over the grid
    grid: np.ndarray

    def evaluate(self, eps):
        out = np.zeros_like(self.coefficients[0])
        for k, X in enumerate(self.coefficients):
            out = out + (eps ** k) * X
        return out

    def to_dict(self):
        return {
            "observable_index": self.observable_index,
            "order": self.order,
            "grid": [float(e) for e in self.grid],
            "residuals": self.residuals.tolist(),
            "coefficients": [
                [[[float(v.real), float(v.imag)] for v in row] for row in X]
                for X in self.coefficients
            ],
        }


def scan_epsilon(model, theta, grid=None, enforce_bounds=True):
    """Noise-operator samples V(eps) on the grid, shape (n_grid, n_obs, d, d)."""
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if enforce_bounds:
        a_max = model.config.a_max()
        peak = np.abs(theta).max() * np.abs(grid).max()
        if peak > a_max * (1.0 + 1e-9):
            raise DomainError(
                f"scaled amplitudes reach {peak:.3g} > bound {a_max:.3g}; "
                "pass enforce_bounds=False to waive")
    thetas = grid[:, None] * theta[None, :]
    return model.noise_operators(thetas)


def fit_taylor(samples, grid, order=2):
    """Least-squares polynomial fit per observable; returns TaylorExpansion
    objects in observable order."""
    grid = np.asarray(grid, dtype=float)
    samples = np.asarray(samples, dtype=complex)
    if grid.ndim != 1 or samples.shape[0] != grid.size:
        raise InvalidConfigError("grid and samples disagree")
    if order < 0:
        raise InvalidConfigError("order must be >= 0")
    if grid.size < order + 2:
        raise DomainError(f"need at least {order + 2} grid points for order "
                          f"{order}")
    if np.unique(grid).size < order + 1:
        raise DomainError("repeated grid points make the fit rank-deficient")
    n_grid, n_obs, d, _ = samples.shape
    expansions = []
    for o in range(n_obs):
        flat = samples[:, o].reshape(n_grid, d * d)
        targets = np.concatenate([flat.real, flat.imag], axis=1)
        coef = np.polynomial.polynomial.polyfit(grid, targets, order)
        re, im = coef[:, :d * d], coef[:, d * d:]
        comp = (re + 1j * im).reshape(order + 1, d, d)
        fitted = np.polynomial.polynomial.polyval(grid, coef).T
        resid = np.abs((fitted[:, :d * d] + 1j * fitted[:, d * d:])
                       - flat).max(axis=0).reshape(d, d)
        expansions.append(TaylorExpansion(
            observable_index=o, order=order,
            coefficients=[comp[k] for k in range(order + 1)],
            residuals=resid, grid=grid.copy()))
    return expansions


def _sensitivity(vs):
    d = vs.shape[-1]
    eye = np.eye(d)
    return float(sum(np.linalg.norm(v - eye) for v in vs))


def gate_overlap_infidelity(config, theta, eps, gate_unitary):
    """1 - |tr(U^H G)|^2 / d^2 at the scaled pulse, closed whitebox U."""
    params = pulses.PulseParams.unflatten(eps * np.asarray(theta, dtype=float),
                                          config.dim, config.n_max)
    u = dynamics.propagate_closed(config, params)
    d = config.dim
    return 1.0 - abs(np.trace(u.conj().T @ gate_unitary)) ** 2 / d ** 2


def noise_sensitivity_N(model_or_expansions, eps, theta=None):
    """sum_k ||V_k(eps) - I||_F from the model or fitted expansions."""
    if isinstance(model_or_expansions, list):
        vs = np.stack([e.evaluate(eps) for e in model_or_expansions])
    else:
        if theta is None:
            raise InvalidConfigError("theta required when sampling the model")
        vs = scan_epsilon(model_or_expansions, theta,
                          grid=np.array([eps]))[0]
    return _sensitivity(vs)


def control_cost_J(model_or_expansions, eps, theta, gate_unitary, config=None,
                   mode=None):
    """J(eps) = N(eps) + closed-gate infidelity term; mode records whether V
    came from raw model samples or fitted expansions."""
    if isinstance(model_or_expansions, list):
        n_term = noise_sensitivity_N(model_or_expansions, eps)
        mode = mode or "expansion"
        if config is None:
            raise InvalidConfigError("config required with expansions")
    else:
        n_term = noise_sensitivity_N(model_or_expansions, eps, theta)
        mode = mode or "model"
        config = model_or_expansions.config
    infid = gate_overlap_infidelity(config, theta, eps, gate_unitary)
    return {"J": n_term + infid, "N": n_term, "infidelity": infid,
            "mode": mode}


def landscape(model, thetas, gate, grid=None, pulse_ids=None,
              fid_epsilon=None, k_eval=200, include_fidelity=True):
    """Sweep J and N over the grid for each pulse; true process fidelity is
    evaluated at one designated eps per pulse (default: the grid argmin of J
    across the whole ensemble, mirroring how the sweep singles out a
    perturbation worth testing).

    Returns a list of row dicts: pulse_id, epsilon, J, N, fidelity (NaN off
    the designated eps).
    """
    from . import control as control_mod
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    if isinstance(gate, str):
        gate = control_mod.parse_gate(gate, model.d)
    thetas = [np.asarray(t, dtype=float) for t in thetas]
    pulse_ids = pulse_ids if pulse_ids is not None else list(range(len(thetas)))
    rows = []
    j_tables = []
    for pid, theta in zip(pulse_ids, thetas):
        vs = scan_epsilon(model, theta, grid=grid)
        eye = np.eye(model.d)
        n_vals = np.array([_sensitivity(v) for v in vs])
        infids = np.array([gate_overlap_infidelity(model.config, theta, e,
                                                   gate.unitary)
                           for e in grid])
        j_vals = n_vals + infids
        j_tables.append(j_vals)
        for e, j, n in zip(grid, j_vals, n_vals):
            rows.append({"pulse_id": pid, "epsilon": float(e),
                         "J": float(j), "N": float(n),
                         "fidelity": float("nan")})
    if include_fidelity:
        if fid_epsilon is None:
            flat_best = int(np.argmin([tab.min() for tab in j_tables]))
            fid_epsilon = float(grid[int(np.argmin(j_tables[flat_best]))])
        eps_idx = int(np.argmin(np.abs(grid - fid_epsilon)))
        for row_block, (pid, theta) in enumerate(zip(pulse_ids, thetas)):
            fid = control_mod.evaluate_fidelity(
                model.config, fid_epsilon * theta, gate, k_eval=k_eval)
            rows[row_block * grid.size + eps_idx]["fidelity"] = float(fid)
    return rows


def rows_to_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("pulse_id,epsilon,J,N,fidelity\n")
        for row in rows:
            fh.write(f"{row['pulse_id']},{row['epsilon']!r},{row['J']!r},"
                     f"{row['N']!r},{row['fidelity']!r}\n")
