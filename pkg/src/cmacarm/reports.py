"""CSV reports and the figures rendered next to them.

All CSVs carry a header row and serialize floats with shortest-roundtrip
repr so reruns are byte-identical.  Figures are optional companions of the
delimited output, written as PNG files in the same directory.
"""

import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .archmodel import (ArchitectureParams, encoder_memory, latencies,
                        pu_count, si_approx, structured_table,
                        unstructured_table)
from .network import TERM_FAMILIES, microzone_terms


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fieldnames])


def write_training_report(out_dir, report, plots=True):
    path = os.path.join(out_dir, "train_report.csv")
    write_csv(path, ["epoch", "term_family", "rms", "max_abs_err"],
              report.rows())
    if plots:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        epochs = [rec["epoch"] for rec in report.epochs]
        for fam in TERM_FAMILIES:
            ax.plot(epochs, [rec["rms"][fam] for rec in report.epochs],
                    marker="o", markersize=3, label=fam)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("training RMS error (N m)")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, "train_curves.png"), dpi=120)
        plt.close(fig)
    return path


def evaluation_summary(microzones, tuples, gravity_vec, layout):
    """Per-family relative RMS and sparsity statistics over a dataset."""
    fam_err = {f: [] for f in TERM_FAMILIES}
    fam_tgt = {f: [] for f in TERM_FAMILIES}
    tot_err, tot_tgt, fractions = [], [], []
    for state, wrench_vec, tb, enc_pos, enc_speeds in tuples:
        fractions.append(enc_pos.m / layout.size)
        for mz in microzones:
            k = mz.joint
            terms = microzone_terms(mz, state, gravity_vec, wrench_vec,
                                    enc_pos, enc_speeds[k])
            tgt = {"inertial": tb.inertial[k].sum(),
                   "coriolis": tb.coriolis[k].sum(),
                   "gravity": tb.gravity[k].sum(),
                   "external": tb.external[k].sum(),
                   "fric_dyn": tb.fric_dyn[k],
                   "fric_stat": tb.fric_stat[k]}
            for f in TERM_FAMILIES:
                fam_err[f].append(float(tgt[f]) - terms[f])
                fam_tgt[f].append(float(tgt[f]))
            tot_err.append(float(tb.total[k]) - sum(terms.values()))
            tot_tgt.append(float(tb.total[k]))

    def rms(v):
        return float(np.sqrt(np.mean(np.square(v)))) if len(v) else 0.0

    rows = []
    for f in TERM_FAMILIES:
        denom = rms(fam_tgt[f])
        rows.append({"term_family": f,
                     "rms": rms(fam_err[f]),
                     "relative_rms": rms(fam_err[f]) / denom if denom else 0.0,
                     "max_abs_err": float(np.max(np.abs(fam_err[f])))
                     if fam_err[f] else 0.0})
    denom = rms(tot_tgt)
    summary = {"total_relative_rms": rms(tot_err) / denom if denom else 0.0,
               "total_rms": rms(tot_err),
               "sparsity_mean": float(np.mean(fractions)),
               "sparsity_max": float(np.max(fractions)),
               "sample_count": len(tuples)}
    return rows, summary


def write_eval_report(out_dir, rows, summary, plots=True):
    path = os.path.join(out_dir, "eval_report.csv")
    merged = []
    for row in rows:
        merged.append({**row, **{k: summary[k] for k in
                                 ("total_relative_rms", "total_rms",
                                  "sparsity_mean", "sparsity_max",
                                  "sample_count")}})
    write_csv(path, ["term_family", "rms", "relative_rms", "max_abs_err",
                     "total_relative_rms", "total_rms", "sparsity_mean",
                     "sparsity_max", "sample_count"], merged)
    if plots:
        fig, ax = plt.subplots(figsize=(7, 4))
        fams = [r["term_family"] for r in rows]
        ax.bar(fams, [r["relative_rms"] for r in rows], color="tab:blue")
        ax.axhline(summary["total_relative_rms"], color="tab:red", ls="--",
                   label=f"total = {summary['total_relative_rms']:.3f}")
        ax.set_ylabel("relative RMS error")
        ax.legend()
        ax.grid(alpha=0.3, axis="y")
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, "eval_rms.png"), dpi=120)
        plt.close(fig)
    return path


def arch_rows(params):
    """All architecture estimates for one parameter point, as flat rows."""
    unstructured = unstructured_table(params)
    structured = structured_table(params)
    t_single, t_multi, t_layered = latencies(params)
    layer1, layer2 = pu_count(params.n)
    return [
        {"quantity": "pu_count_layer1", "value": str(layer1), "note": ""},
        {"quantity": "pu_count_layer2", "value": str(layer2), "note": ""},
        {"quantity": "unstructured_address_bits",
         "value": str(unstructured.address_bits), "note": ""},
        {"quantity": "unstructured_memory_bytes",
         "value": str(unstructured.memory_bytes),
         "note": si_approx(unstructured.memory_bytes)},
        {"quantity": "structured_address_bits",
         "value": str(structured.address_bits), "note": ""},
        {"quantity": "structured_memory_bytes",
         "value": str(structured.memory_bytes),
         "note": si_approx(structured.memory_bytes)},
        {"quantity": "t_single_s", "value": repr(t_single), "note": ""},
        {"quantity": "t_multi_s", "value": repr(t_multi), "note": ""},
        {"quantity": "t_layered_s", "value": repr(t_layered), "note": ""},
        {"quantity": "meets_deadline",
         "value": str(t_layered <= params.t_c).lower(),
         "note": f"t_c = {params.t_c}"},
    ]


def write_arch_report(out_path, params, position_layout=None,
                      speed_layout=None, plots=True):
    rows = arch_rows(params)
    if position_layout is not None:
        weight_bytes = encoder_memory(position_layout, speed_layout, params.n)
        structured = structured_table(params)
        rows.append({"quantity": "network_weight_bytes",
                     "value": str(weight_bytes),
                     "note": si_approx(weight_bytes)})
        rows.append({"quantity": "network_reduction_vs_structured",
                     "value": str(structured.memory_bytes // max(1, weight_bytes)),
                     "note": "per-unit table entries / network weights"})
    write_csv(out_path, ["quantity", "value", "note"], rows)
    if plots:
        ns = np.arange(1, max(12, params.n + 2))
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for label, exp in (("unstructured b^(3n)", 3), ("structured b^n", 1)):
            ax.plot(ns, [params.b ** (exp * int(n)) for n in ns],
                    marker="o", markersize=3, label=label)
        ax.set_yscale("log")
        ax.set_xlabel("degrees of freedom n")
        ax.set_ylabel("table entries")
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(os.path.splitext(out_path)[0] + ".png", dpi=120)
        plt.close(fig)
    return rows
