"""Command-line surface.

Subcommands: oracle, generate, train, eval, arch, encode-inspect.  A single
experiment config file (see configs/experiment.yaml) drives everything but
arch, which also accepts raw parameters or the named preset for the
ten-joint reference scenario.

Exit codes: 0 success, 2 input error, 3 consistency/hash error,
4 numerical divergence.
"""

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from . import archmodel, dataio, golgi, reports
from .config import ConfigError, load_experiment
from .dynamics import ExternalWrench, JointState, term_breakdown
from .encoding import encode_position, modulate
from .golgi import GolgiConvergenceError, SparsityCalibrationError
from .network import (TERM_FAMILIES, TrainingDivergence, build_microzones,
                      train)

EXIT_INPUT = 2
EXIT_CONSISTENCY = 3
EXIT_DIVERGENCE = 4

ARCH_PRESETS = {
    # ten joints, 16 quantization levels, 100 us instructions, 10 ms period
    "reference-10dof": archmodel.ArchitectureParams(n=10, b=16, t_ins=100e-6,
                                              t_c=10e-3),
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _parse_vector(text, name):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise CliError(f"malformed {name} vector: {text!r}", EXIT_INPUT)


def _parse_state(text, n):
    parts = text.split(";")
    if len(parts) != 3:
        raise CliError("state must be 'q;qd;qdd' with comma-separated "
                       "components", EXIT_INPUT)
    q, qd, qdd = (_parse_vector(p, name)
                  for p, name in zip(parts, ("q", "qd", "qdd")))
    if not (len(q) == len(qd) == len(qdd) == n):
        raise CliError(f"state vectors must each have {n} components",
                       EXIT_INPUT)
    return JointState(q, qd, qdd)


def _load_config(args):
    if not args.config:
        raise CliError("--config is required", EXIT_INPUT)
    try:
        return load_experiment(args.config)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_INPUT)


def cmd_oracle(args):
    cfg = _load_config(args)
    n = cfg.model.n
    state = _parse_state(args.state, n) if args.state else JointState(
        np.zeros(n), np.zeros(n), np.zeros(n))
    wrench = (ExternalWrench(*_parse_vector(args.wrench, "wrench"))
              if args.wrench else ExternalWrench())
    tb = term_breakdown(cfg.model, state, wrench)
    out = args.out and open(args.out, "w") or sys.stdout
    writer = csv.writer(out)
    writer.writerow(["joint", "inertial", "coriolis", "gravity_x",
                     "gravity_y", "fric_dyn", "fric_stat", "external_fx",
                     "external_fy", "external_mz", "total"])
    for k in range(n):
        writer.writerow([k, repr(float(tb.inertial[k].sum())),
                         repr(float(tb.coriolis[k].sum())),
                         repr(float(tb.gravity[k, 0])),
                         repr(float(tb.gravity[k, 1])),
                         repr(float(tb.fric_dyn[k])),
                         repr(float(tb.fric_stat[k])),
                         repr(float(tb.external[k, 0])),
                         repr(float(tb.external[k, 1])),
                         repr(float(tb.external[k, 2])),
                         repr(float(tb.total[k]))])
    if out is not sys.stdout:
        out.close()
    return 0


def cmd_generate(args):
    cfg = _load_config(args)
    spec = cfg.dataset
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    if spec.count == 0:
        print("warning: dataset count is 0, writing empty dataset",
              file=sys.stderr)
    records = dataio.generate_dataset(cfg.model, spec, cfg.position_layout)
    out = args.out or os.path.join(cfg.output_dir, "dataset.jsonl")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    dataio.save_dataset(out, records, cfg.model, cfg.position_layout,
                        cfg.speed_layout, spec)
    print(f"wrote {len(records)} records to {out}")
    return 0


def _split_holdout(records, holdout):
    cut = int(round(len(records) * (1.0 - holdout)))
    return records[:cut], records[cut:]


def cmd_train(args):
    cfg = _load_config(args)
    if not args.dataset:
        raise CliError("--dataset is required", EXIT_INPUT)
    try:
        _, records = dataio.load_dataset(args.dataset, cfg.model,
                                         cfg.position_layout,
                                         cfg.speed_layout)
    except dataio.HashMismatchError as exc:
        raise CliError(str(exc), EXIT_CONSISTENCY)
    train_recs, _ = _split_holdout(records, cfg.dataset.holdout)
    tuples = dataio.prepare_training_tuples(train_recs, cfg.position_layout,
                                            cfg.speed_layout)
    zones = build_microzones(cfg.model, cfg.position_layout, cfg.speed_layout,
                             cfg.golgi)
    tcfg = cfg.training
    if args.seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=args.seed)
    try:
        report = train(zones, tuples, tcfg, cfg.model.gravity_vec)
    except TrainingDivergence as exc:
        raise CliError(str(exc), EXIT_DIVERGENCE)
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    weights_path = os.path.join(out_dir, "weights.json")
    dataio.save_weights(weights_path, zones, cfg.model, cfg.position_layout,
                        cfg.speed_layout)
    csv_path = reports.write_training_report(out_dir, report,
                                             plots=not args.no_plots)
    final = report.epochs[-1]["rms"]
    print(f"wrote {weights_path} and {csv_path}")
    print("final RMS per family: "
          + ", ".join(f"{f}={final[f]:.4g}" for f in TERM_FAMILIES))
    return 0


def cmd_eval(args):
    cfg = _load_config(args)
    if not args.dataset or not args.weights:
        raise CliError("--dataset and --weights are required", EXIT_INPUT)
    try:
        _, records = dataio.load_dataset(args.dataset, cfg.model,
                                         cfg.position_layout,
                                         cfg.speed_layout)
        zones = dataio.load_weights(args.weights, cfg.model,
                                    cfg.position_layout, cfg.speed_layout)
    except dataio.HashMismatchError as exc:
        raise CliError(str(exc), EXIT_CONSISTENCY)
    _, holdout = _split_holdout(records, cfg.dataset.holdout)
    use = holdout if holdout else records
    tuples = dataio.prepare_training_tuples(use, cfg.position_layout,
                                            cfg.speed_layout)
    rows, summary = reports.evaluation_summary(zones, tuples,
                                               cfg.model.gravity_vec,
                                               cfg.position_layout)
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    path = reports.write_eval_report(out_dir, rows, summary,
                                     plots=not args.no_plots)
    target = cfg.golgi.sparsity_target
    band = "within" if (0.5 * target <= summary["sparsity_mean"]
                        <= 2.0 * target) else "OUTSIDE"
    print(f"wrote {path}")
    print(f"total relative RMS: {summary['total_relative_rms']:.4g}")
    print(f"mean active fraction: {summary['sparsity_mean']:.4%} "
          f"({band} [0.5x, 2x] of target {target:.2%})")
    return 0


def cmd_arch(args):
    if args.preset:
        if args.preset not in ARCH_PRESETS:
            raise CliError(f"unknown preset {args.preset!r}; "
                           f"available: {sorted(ARCH_PRESETS)}", EXIT_INPUT)
        params = ARCH_PRESETS[args.preset]
    else:
        try:
            params = archmodel.ArchitectureParams(
                n=args.n, b=args.b, t_ins=args.t_ins, t_c=args.t_c)
        except (TypeError, ValueError) as exc:
            raise CliError(str(exc), EXIT_INPUT)
    pos = spd = None
    if args.config:
        cfg = _load_config(args)
        pos, spd = cfg.position_layout, cfg.speed_layout
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        rows = reports.write_arch_report(args.out, params, pos, spd,
                                         plots=not args.no_plots)
        print(f"wrote {args.out}")
    else:
        rows = reports.arch_rows(params)
    for row in rows:
        note = f"  ({row['note']})" if row["note"] else ""
        print(f"{row['quantity']}: {row['value']}{note}")
    return 0


def cmd_encode_inspect(args):
    cfg = _load_config(args)
    if not args.q:
        raise CliError("--q is required", EXIT_INPUT)
    q = _parse_vector(args.q, "q")
    if len(q) != cfg.position_layout.dims:
        raise CliError(f"q must have {cfg.position_layout.dims} components",
                       EXIT_INPUT)
    lo = [r[0] for r in cfg.position_layout.ranges]
    hi = [r[1] for r in cfg.position_layout.ranges]
    if np.any(q < lo) or np.any(q > hi):
        print("warning: q outside layout ranges, clamped", file=sys.stderr)
    act = encode_position(cfg.position_layout, q)
    mod = modulate(act, args.r)
    per_tiling = cfg.position_layout.cells_per_tiling
    print("tiling,cell_index,value")
    for i, v in zip(mod.indices, mod.values):
        print(f"{i // per_tiling},{i % per_tiling},{repr(float(v))}")
    try:
        y, o = golgi.golgi_fixed_point(cfg.golgi, act.dense(), args.r)
    except GolgiConvergenceError as exc:
        raise CliError(str(exc), EXIT_DIVERGENCE)
    m = int(np.count_nonzero(y))
    print(f"golgi_rate_O: {repr(float(o))}")
    print(f"active_count_m: {m}")
    if m > 0:
        lp = golgi.line_params(cfg.golgi, m, 1.0)
        print(f"k1: {repr(lp.k1)}")
        print(f"k2: {repr(lp.k2)}")
        print(f"k3: {repr(lp.k3)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cmacarm",
        description="Sparse coarse-coded approximator for planar arm "
                    "dynamics with an exact analytic oracle.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")
        p.set_defaults(func=func)
        return p

    p = add("oracle", cmd_oracle, "evaluate the analytic dynamics oracle")
    p.add_argument("--state", help="joint state as 'q;qd;qdd'")
    p.add_argument("--wrench", help="end-effector wrench as 'fx,fy,mz'")

    add("generate", cmd_generate, "generate a training dataset")

    p = add("train", cmd_train, "train the approximator")
    p.add_argument("--dataset", help="dataset file from 'generate'")

    p = add("eval", cmd_eval, "evaluate trained weights on the holdout")
    p.add_argument("--dataset", help="dataset file")
    p.add_argument("--weights", help="weight store from 'train'")

    p = add("arch", cmd_arch, "architecture memory/latency report")
    p.add_argument("--preset", help="named scenario, e.g. reference-10dof")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--b", type=int, default=16)
    p.add_argument("--t-ins", type=float, default=100e-6)
    p.add_argument("--t-c", type=float, default=10e-3)

    p = add("encode-inspect", cmd_encode_inspect,
            "dump active cells and Golgi state for one input")
    p.add_argument("--q", help="joint position vector, comma-separated")
    p.add_argument("--r", type=float, default=1.0,
                   help="rate-coded modulation value")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (GolgiConvergenceError, TrainingDivergence,
            SparsityCalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except dataio.HashMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
