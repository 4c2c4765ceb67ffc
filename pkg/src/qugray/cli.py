"""Command-line entry point.

Subcommands: gen-dataset, train, optimize, landscape, expand, psd-check.
Every command is reproducible from its config/seed inputs alone; outputs
embed the owning config hash. Exit codes: 0 ok, 2 usage/config, 3 I/O,
4 numerical failure. QUGRAY_WORKERS sets the default worker count.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import config as config_mod
from . import control, dynamics, graybox, interpret, noisegen
from .errors import (ContractViolationError, DatasetIOError, DomainError,
                     InvalidConfigError, InvalidDimensionError,
                     InvertibilityError, OptimizationFailure, QugrayError,
                     TrainingDiverged)

_USAGE_ERRORS = (InvalidConfigError, InvalidDimensionError, DomainError)
_IO_ERRORS = (DatasetIOError, OSError)
_NUMERIC_ERRORS = (OptimizationFailure, TrainingDiverged,
                   ContractViolationError, InvertibilityError)


def _default_workers():
    try:
        return max(1, int(os.environ.get("QUGRAY_WORKERS", "1")))
    except ValueError:
        return 1


def _parse_grid(spec):
    try:
        lo, hi, num = spec.split(":")
        return np.linspace(float(lo), float(hi), int(num))
    except ValueError as exc:
        raise InvalidConfigError(f"bad grid spec {spec!r}, want lo:hi:count") \
            from exc


def _parse_pulse_spec(spec):
    """'PATH' or 'PATH:0,5,17' -> (path, ids or None)."""
    if ":" in spec:
        path, _, ids = spec.rpartition(":")
        try:
            return path, [int(t) for t in ids.split(",") if t]
        except ValueError as exc:
            raise InvalidConfigError(f"bad pulse ids in {spec!r}") from exc
    return spec, None


def cmd_gen_dataset(args):
    cfg, _ = config_mod.load_config(args.config)
    start = time.perf_counter()
    examples, manifest = dynamics.generate_dataset(
        cfg, args.examples, seed=args.seed, workers=args.workers)
    dynamics.save_dataset(args.out, examples, manifest)
    wall = time.perf_counter() - start
    print(f"wrote {len(examples)} examples to {args.out} "
          f"(K={cfg.noise.realizations}, M={cfg.carrier.steps}, "
          f"split {manifest['n_train']}/{manifest['n_test']}, "
          f"{wall:.1f} s)")
    return 0


def cmd_train(args):
    examples, manifest = dynamics.load_dataset(args.dataset)
    cfg = dynamics.SystemConfig.from_dict(manifest["config"])
    model = graybox.GrayboxModel(cfg, hidden=args.hidden, seed=args.seed)
    hyper = graybox.TrainingHyper(step_size=args.step, iterations=args.iters,
                                  batch_size=args.batch, seed=args.seed)
    record = model.train(examples, manifest, hyper,
                         log_every=args.log_every or None)
    model.save(args.out, extra_header={"iterations": record.iterations})
    curves = args.curves or f"{args.out}.curves.csv"
    with open(curves, "w") as fh:
        fh.write("iteration,train_mse,test_mse\n")
        for i, (tr, te) in enumerate(zip(record.train_mse, record.test_mse),
                                     start=1):
            fh.write(f"{i},{tr!r},{te!r}\n")
    print(f"trained {record.iterations} iterations in {record.wall_time:.1f} s; "
          f"final train MSE {record.train_mse[-1]:.3e}, "
          f"test MSE {record.test_mse[-1]:.3e}; model -> {args.out}")
    return 0


def cmd_optimize(args):
    model = graybox.GrayboxModel.load(args.model)
    gate = control.parse_gate(args.gate, model.d)
    result = control.optimize_gate(model, gate, restarts=args.restarts,
                                   seed=args.seed, max_iters=args.iters,
                                   workers=args.workers)
    closed_cfg = dynamics.SystemConfig.from_dict(
        dict(model.config.to_dict(), g_rad_s=[0.0] * model.d))
    result.fidelity_closed = control.evaluate_fidelity(
        closed_cfg, result.theta_star, gate)
    result.fidelities["closed"] = result.fidelity_closed
    for entry in args.eval_config or []:
        cfg_i, _ = config_mod.load_config(entry)
        if cfg_i.dim != model.d:
            raise InvalidConfigError(f"eval config {entry} has d={cfg_i.dim}, "
                                     f"model has d={model.d}")
        result.fidelities[entry] = control.evaluate_fidelity(
            cfg_i, result.theta_star, gate, k_eval=args.eval_k)
    control.save_result(result, args.out)
    print(f"{gate.name}: cost {result.cost:.3e}, "
          f"closed infidelity {1 - result.fidelity_closed:.3e} "
          f"({result.iterations} iterations, {result.restarts_used} restarts) "
          f"-> {args.out}")
    return 0


def _load_pulses(spec, expected_len):
    path, ids = _parse_pulse_spec(spec)
    examples, manifest = dynamics.load_dataset(path)
    if ids is None:
        ids = list(range(min(20, len(examples))))
    for i in ids:
        if not 0 <= i < len(examples):
            raise InvalidConfigError(f"pulse id {i} outside dataset of "
                                     f"{len(examples)}")
    thetas = [examples[i].theta for i in ids]
    for theta in thetas:
        if theta.size != expected_len:
            raise InvalidConfigError("dataset pulse length does not match model")
    return ids, thetas, manifest


def cmd_landscape(args):
    model = graybox.GrayboxModel.load(args.model)
    gate = control.parse_gate(args.gate, model.d)
    expected = 2 * (model.d - 1) * model.n_max
    ids, thetas, _ = _load_pulses(args.pulses, expected)
    if args.optimized:
        with open(args.optimized) as fh:
            opt = json.load(fh)
        thetas.append(np.array(opt["theta_star"], dtype=float))
        ids.append(-1)  # optimized pulse sentinel id
    grid = _parse_grid(args.grid)
    rows = interpret.landscape(model, thetas, gate, grid=grid, pulse_ids=ids,
                               fid_epsilon=args.fid_epsilon,
                               k_eval=args.eval_k,
                               include_fidelity=not args.no_fidelity)
    interpret.rows_to_csv(rows, args.out)
    print(f"wrote {len(rows)} landscape rows for {len(ids)} pulses -> {args.out}")
    return 0


def cmd_expand(args):
    model = graybox.GrayboxModel.load(args.model)
    expected = 2 * (model.d - 1) * model.n_max
    _, thetas, manifest = _load_pulses(f"{args.dataset}:{args.pulse_id}",
                                       expected)
    theta = thetas[0]
    grid = _parse_grid(args.grid) if args.grid else interpret.DEFAULT_GRID
    samples = interpret.scan_epsilon(model, theta, grid=grid)
    expansions = interpret.fit_taylor(samples, grid, order=args.order)
    payload = {
        "pulse_id": args.pulse_id,
        "order": args.order,
        "config_hash": manifest.get("config_hash", ""),
        "expansions": [e.to_dict() for e in expansions],
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    worst = max(float(e.residuals.max()) for e in expansions)
    print(f"expanded pulse {args.pulse_id} to order {args.order}; "
          f"worst residual {worst:.3e} -> {args.out}")
    return 0


def cmd_psd_check(args):
    cfg, parsed = config_mod.load_config(args.config)
    spec = cfg.noise
    real_set = noisegen.synthesize(spec, seed=args.seed)
    freqs, power = noisegen.empirical_psd(real_set)
    target = spec.psd(freqs)
    mean_power = power.mean(axis=0)
    with open(args.out, "w") as fh:
        fh.write("frequency_hz,target_psd,empirical_psd\n")
        for f, t, p in zip(freqs, target, mean_power):
            fh.write(f"{float(f)!r},{float(t)!r},{float(p)!r}\n")
    mid = (freqs > spec.cutoff * 4) & (freqs < freqs[-1] / 4)
    rel = np.abs(mean_power[mid] - target[mid]) / target[mid]
    print(f"synthesized {spec.channels} x {spec.realizations} realizations; "
          f"mid-band max relative deviation {rel.max():.3f} -> {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qugray",
        description="noisy-qudit graybox simulator, trainer, and optimizer")
    sub = parser.add_subparsers(dest="command", required=True)
    workers = _default_workers()

    p = sub.add_parser("gen-dataset", help="simulate a pulse/expectation dataset")
    p.add_argument("--config", required=True,
                   help="config file path or preset name")
    p.add_argument("--out", required=True, help="output JSON-lines path")
    p.add_argument("--examples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=workers)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="train a graybox model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--hidden", type=int, default=graybox.HIDDEN_UNITS)
    p.add_argument("--curves", default=None, help="loss curve CSV path")
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", help="optimize a pulse for a target gate")
    p.add_argument("--model", required=True)
    p.add_argument("--gate", required=True)
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=workers)
    p.add_argument("--eval-config", action="append", default=[],
                   help="extra config (path or preset) to evaluate fidelity "
                        "under; repeatable")
    p.add_argument("--eval-k", type=int, default=None,
                   help="override realization count for fidelity evaluation")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("landscape", help="sweep the interpretable cost J, N")
    p.add_argument("--model", required=True)
    p.add_argument("--pulses", required=True,
                   help="DATASET[:id0,id1,...]; default first 20 pulses")
    p.add_argument("--gate", required=True)
    p.add_argument("--grid", default="-1:1:41", help="lo:hi:count")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--optimized", default=None,
                   help="optimize result JSON to include as pulse id -1")
    p.add_argument("--fid-epsilon", type=float, default=None)
    p.add_argument("--eval-k", type=int, default=200)
    p.add_argument("--no-fidelity", action="store_true")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("expand", help="fit a local Taylor surrogate of V_O")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--pulse-id", type=int, required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--grid", default=None, help="lo:hi:count")
    p.add_argument("--out", required=True, help="JSON path")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("psd-check", help="verify synthesized noise spectra")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_psd_check)
    return parser


def _join_dash_values(argv):
    """Let `--grid -1:1:41` parse: join option values that start with a dash
    but are clearly grid specs, not options."""
    out = []
    skip = False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok in ("--grid", "--fid-epsilon") and i + 1 < len(argv) and \
                argv[i + 1].startswith("-") and not argv[i + 1].startswith("--"):
            out.append(f"{tok}={argv[i + 1]}")
            skip = True
        else:
            out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(_join_dash_values(list(argv)))
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _IO_ERRORS as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except QugrayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
