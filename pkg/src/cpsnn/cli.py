"""Command-line harness: dataset generation, training, evaluation, analysis.

Exit codes: 0 success, 1 usage error, 2 data error (missing/malformed files,
dimension mismatches, infeasible requests), 3 invariant-check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import analysis, tasks, train as training
from .config import (ModelHyperparams, RunConfig, TaskConfig, TrainingConfig,
                     load_run_config, run_config_to_dict)
from .errors import (ConfigError, ContractError, DataFormatError,
                     InfeasibleScheduleError, NumericsError)
from .params import load_snapshot, save_snapshot

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3

MODEL_FLAG_TO_KIND = {"cpsnn": "cpsnn", "snn": "snn_fixed",
                      "adaptive": "snn_adaptive"}
ABLATE_FLAG_TO_MODE = {"none": "full", "no-warp": "no_warp",
                       "no-slow": "no_slow", "no-fast": "no_fast"}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; remap to the usage code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_jsonl(path):
    try:
        return tasks.load_dataset(path)
    except FileNotFoundError as exc:
        raise DataFormatError(f"dataset file not found: {path}") from exc


def cmd_gen(args) -> int:
    cfg = TaskConfig(channels=args.channels, horizon=args.horizon,
                     gap_min=args.gap_min, gap_max=args.gap_max,
                     distractor_rate=args.rate, n_samples=args.n,
                     seed=args.seed)
    cfg.validate()
    dataset = tasks.generate_dataset(cfg)
    tasks.save_dataset(dataset, args.out)
    labels = [seq.label for seq in dataset]
    gaps = [seq.meta.gap for seq in dataset]
    print(f"wrote {len(dataset)} sequences to {args.out}")
    print(f"label balance: {labels.count(0)} zeros / {labels.count(1)} ones")
    print(f"gap range: [{min(gaps)}, {max(gaps)}]")
    return EXIT_OK


def _build_run_config(args) -> RunConfig:
    if args.config:
        cfg = load_run_config(args.config)
    else:
        train_set = _load_jsonl(args.train)
        if not train_set:
            raise DataFormatError(f"dataset {args.train} is empty")
        cfg = RunConfig(model=ModelHyperparams(channels=train_set[0].C))
    cfg.model_kind = MODEL_FLAG_TO_KIND[args.model]
    cfg.model.ablation = ABLATE_FLAG_TO_MODE[args.ablate]
    if args.unscaled_input:
        cfg.model.unscaled_input = True
    if args.seed is not None:
        cfg.training.seed = args.seed
    if args.epochs is not None:
        cfg.training.epochs = args.epochs
    if args.batch_size is not None:
        cfg.training.batch_size = args.batch_size
    if args.lr is not None:
        cfg.training.learning_rate = args.lr
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _build_run_config(args)
    train_set = _load_jsonl(args.train)
    eval_set = _load_jsonl(args.eval)
    if not train_set or not eval_set:
        raise DataFormatError("train/eval dataset is empty")
    if train_set[0].C != cfg.model.channels:
        raise DataFormatError(
            f"dataset has {train_set[0].C} channels, "
            f"config expects {cfg.model.channels}")
    if args.dump_config:
        from .config import save_run_config
        save_run_config(cfg, args.dump_config)

    finals = []
    params = history = None
    for r in range(args.repeats):
        tc = dataclasses.replace(cfg.training, seed=cfg.training.seed + r)
        p, h = training.train_model(train_set, eval_set, cfg.model_kind,
                                    cfg.model, tc)
        finals.append(h[-1].eval_accuracy)
        if r == 0:
            params, history = p, h

    metrics_path = args.metrics or cfg.outputs.metrics
    training.write_metrics_csv(history, metrics_path)
    if args.profile:
        training.write_profile_csv(history, args.profile)
    model_path = args.out_model or cfg.outputs.model
    save_snapshot(model_path, cfg.model_kind, cfg.model, params)

    finals = np.asarray(finals)
    print(f"model: {cfg.model_kind}  ablation: {cfg.model.ablation}")
    print(f"final eval accuracy over {args.repeats} run(s): "
          f"{finals.mean():.4f} +/- {finals.std(ddof=0):.4f}")
    print(f"wrote model snapshot to {model_path}, metrics to {metrics_path}")
    return EXIT_OK


def _load_model(path):
    try:
        return load_snapshot(path)
    except FileNotFoundError as exc:
        raise DataFormatError(f"model file not found: {path}") from exc


def cmd_eval(args) -> int:
    kind, hp, params = _load_model(args.model_file)
    dataset = _load_jsonl(args.data)
    if not dataset:
        raise DataFormatError(f"dataset {args.data} is empty")
    if dataset[0].C != hp.channels:
        raise DataFormatError(
            f"dataset has {dataset[0].C} channels, model expects {hp.channels}")
    spikes, labels = tasks.dataset_arrays(dataset)
    loss, acc, confusion = training.evaluate(kind, params, hp, spikes, labels)
    print(f"model: {kind}  sequences: {len(labels)}")
    print(f"loss: {loss:.6f}  accuracy: {acc:.4f}")
    print("confusion (rows = true label, cols = predicted):")
    for row in confusion:
        print("  " + " ".join(f"{int(c):6d}" for c in row))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"loss": loss, "accuracy": acc,
                       "confusion": confusion.tolist()}, fh, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def _read_omega_file(path):
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=1)
    except FileNotFoundError as exc:
        raise DataFormatError(f"omega file not found: {path}") from exc
    except ValueError as exc:
        raise DataFormatError(f"malformed omega file {path}: {exc}") from exc
    return analysis.WarpSchedule(omega=np.asarray(values, dtype=np.float64).ravel())


def cmd_analyze_kernel(args) -> int:
    schedule = _read_omega_file(args.omega_file)
    km = analysis.kernel_matrix(schedule, args.alpha_s)
    T = schedule.T
    idx = np.tril_indices(T + 1)
    lags = idx[0] - idx[1]
    vals = km.kappa[idx]
    lower = args.alpha_s ** lags
    bounds_ok = bool(np.all(vals >= lower - 1e-12) and np.all(vals <= 1.0 + 1e-12))
    diag_ok = bool(np.allclose(np.diag(km.kappa), 1.0, atol=1e-12))
    witness = analysis.check_nonstationarity(schedule, args.alpha_s)
    print(f"T={T}  alpha_s={args.alpha_s}")
    print(f"bounds alpha_s^(t-k) <= kappa <= 1: {'ok' if bounds_ok else 'VIOLATED'}")
    print(f"unit diagonal: {'ok' if diag_ok else 'VIOLATED'}")
    if witness is None:
        print("kernel is stationary (constant schedule)")
    else:
        print(f"non-stationary: lag {witness.lag} carries weights "
              f"{witness.kappa1:.6g} at ({witness.t1},{witness.k1}) vs "
              f"{witness.kappa2:.6g} at ({witness.t2},{witness.k2})")
    if args.out:
        np.savetxt(args.out, km.kappa, delimiter=",")
        print(f"wrote kernel matrix to {args.out}")
    return EXIT_OK if (bounds_ok and diag_ok) else EXIT_INVARIANT


def cmd_analyze_retention(args) -> int:
    report = analysis.retention_report(args.alpha_s, args.L, args.epsilon)
    print(f"alpha_s={args.alpha_s}  L={args.L}  epsilon={args.epsilon}")
    print(f"fixed kernel drops below epsilon after lag {report.fixed_horizon_lag}")
    print(f"constructed omega_bar = {report.omega_bar:.6f} "
          f"beyond the first {args.L} steps (schedule length {report.schedule.T})")
    print(f"(1) local match over lags <= L: max deviation "
          f"{report.local_max_dev:.3g} -> {'ok' if report.local_ok else 'FAILED'}")
    print(f"(2) retention at lag {report.witness_lag}: kappa = "
          f"{report.kappa_at_witness:.4f} vs fixed {report.fixed_at_witness:.4f}"
          f" -> {'ok' if report.retention_ok else 'FAILED'}")
    return EXIT_OK if (report.local_ok and report.retention_ok) else EXIT_INVARIANT


def cmd_analyze_gradflow(args) -> int:
    kind, hp, params = _load_model(args.model_file)
    dataset = _load_jsonl(args.data)
    if not dataset:
        raise DataFormatError(f"dataset {args.data} is empty")
    seq = dataset[args.index]
    _, _, tape = training.forward_batch(
        kind, seq.spikes[None].astype(np.float64), params, hp)
    profile = analysis.gradient_flow_profile(tape, seq.label, params, hp)
    with open(args.out, "w") as fh:
        fh.write("t,grad_magnitude\n")
        for t, g in enumerate(profile):
            fh.write(f"{t},{float(g)!r}\n")
    print(f"wrote {len(profile)}-step gradient profile to {args.out}")
    return EXIT_OK


def cmd_analyze_scaling(args) -> int:
    horizons = [int(x) for x in args.horizons.split(",") if x]
    if not horizons:
        raise ConfigError("need at least one horizon")
    grid = [(T, args.hidden, args.channels) for T in horizons]
    rows = analysis.scaling_probe(grid, seed=args.seed)
    print("T,N,C,wall_time,peak_state_bytes")
    for row in rows:
        print(f"{row['T']},{row['N']},{row['C']},"
              f"{row['wall_time']:.6f},{row['peak_state_bytes']}")
    if args.out:
        analysis.write_scaling_csv(rows, args.out)
        print(f"wrote scaling table to {args.out}")
    state_const = len({row["peak_state_bytes"] for row in rows}) == 1
    if not state_const:
        print("state bytes vary with T: VIOLATED")
        return EXIT_INVARIANT
    print("state bytes constant across horizons: ok")
    return EXIT_OK


def cmd_analyze_traces(args) -> int:
    kind, hp, params = _load_model(args.model_file)
    if kind != "cpsnn":
        raise DataFormatError(f"trace diagnostics need a cpsnn model, got {kind}")
    dataset = _load_jsonl(args.data)
    if not dataset:
        raise DataFormatError(f"dataset {args.data} is empty")
    seq = dataset[args.index]
    paths = analysis.diagnostics_dump(params, hp, seq, args.traces_out,
                                      args.warp_out)
    print(f"wrote trace CSV to {paths['traces']} and warp CSV to {paths['warp']}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="cpsnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a long-gap XOR dataset")
    g.add_argument("--channels", type=int, default=8)
    g.add_argument("--horizon", type=int, default=100)
    g.add_argument("--gap-min", type=int, default=10)
    g.add_argument("--gap-max", type=int, default=60)
    g.add_argument("--rate", type=float, default=0.05)
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model and write metrics")
    t.add_argument("--model", choices=sorted(MODEL_FLAG_TO_KIND),
                   default="cpsnn")
    t.add_argument("--config", help="JSON run config (optional)")
    t.add_argument("--train", required=True, help="training JSONL file")
    t.add_argument("--eval", required=True, help="evaluation JSONL file")
    t.add_argument("--out-model", help="model snapshot path")
    t.add_argument("--metrics", help="metrics CSV path")
    t.add_argument("--profile", help="gradient-profile CSV path (optional)")
    t.add_argument("--ablate", choices=sorted(ABLATE_FLAG_TO_MODE),
                   default="none")
    t.add_argument("--repeats", type=int, default=3,
                   help="independent runs (consecutive seeds); mean +/- sd")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--unscaled-input", action="store_true")
    t.add_argument("--dump-config", help="write the effective config JSON here")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a model snapshot on a dataset")
    e.add_argument("--model-file", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="optional JSON report path")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", help="kernel/retention/gradient/scaling tools")
    asub = a.add_subparsers(dest="subtool", required=True)

    k = asub.add_parser("kernel", help="kernel matrix and bound checks")
    k.add_argument("--omega-file", required=True,
                   help="warp schedule, one value per line")
    k.add_argument("--alpha-s", type=float, default=0.995)
    k.add_argument("--out", help="optional kernel-matrix CSV")
    k.set_defaults(func=cmd_analyze_kernel)

    r = asub.add_parser("retention", help="memory-horizon construction")
    r.add_argument("--alpha-s", type=float, default=0.995)
    r.add_argument("--L", type=int, default=100)
    r.add_argument("--epsilon", type=float, default=0.5)
    r.set_defaults(func=cmd_analyze_retention)

    f = asub.add_parser("gradflow", help="per-timestep gradient profile")
    f.add_argument("--model-file", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--index", type=int, default=0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_analyze_gradflow)

    s = asub.add_parser("scaling", help="streaming time/memory probes")
    s.add_argument("--horizons", required=True,
                   help="comma-separated step counts, e.g. 1000,10000")
    s.add_argument("--hidden", type=int, default=64)
    s.add_argument("--channels", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="optional CSV path")
    s.set_defaults(func=cmd_analyze_scaling)

    d = asub.add_parser("traces", help="trace/warp diagnostic CSVs")
    d.add_argument("--model-file", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--index", type=int, default=0)
    d.add_argument("--traces-out", default="traces.csv")
    d.add_argument("--warp-out", default="warp.csv")
    d.set_defaults(func=cmd_analyze_traces)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, InfeasibleScheduleError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ContractError, NumericsError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
