"""Delimited report files plus matplotlib figures rendered alongside them.

Every CSV starts with '#'-prefixed provenance comments (tool version, seed,
config hash) so a report is traceable to the run that produced it. Figures
are written next to the CSV with the same stem and a .png suffix.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import __version__


def _provenance_lines(meta):
    lines = ["# graphmerge %s" % __version__]
    for key in sorted(meta):
        lines.append("# %s: %s" % (key, meta[key]))
    return lines


def write_csv(path, header, rows, meta=None):
    """CSV with leading '#' provenance comments; returns the path."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in _provenance_lines(meta or {}):
            f.write(line + "\n")
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path


def read_csv(path):
    """Read back a report: (meta dict, header, rows as string lists)."""
    meta = {}
    data_lines = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, value = body.split(":", 1)
                    meta[key.strip()] = value.strip()
                continue
            data_lines.append(line)
    rows = list(csv.reader(data_lines))
    if not rows:
        raise ValueError("no data rows in %s" % path)
    return meta, rows[0], rows[1:]


def figure_path(csv_path, suffix=""):
    stem, ext = os.path.splitext(csv_path)
    if ext == ".tmp":  # callers may stage the CSV under a temp name
        stem, _ = os.path.splitext(stem)
    return "%s%s.png" % (stem, suffix)


def write_training_report(path, result, meta=None):
    header = ("step", "lr", "train_loss", "dev_loss", "wps")
    rows = [(s, "%.8g" % lr, "%.6f" % tl, "%.6f" % dl, "%.1f" % wps)
            for s, lr, tl, dl, wps in result.log_rows]
    write_csv(path, header, rows, meta)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(result.loss_curve) + 1), result.loss_curve,
            lw=0.8, alpha=0.5, label="train (per step)")
    steps = [r[0] for r in result.log_rows]
    ax.plot(steps, [r[3] for r in result.log_rows], "o-", label="dev")
    ax.axvline(result.best_step, color="gray", ls="--", lw=0.8,
               label="best step %d" % result.best_step)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(figure_path(path))
    plt.close(fig)
    return path


def write_similarity_report(path, reports, meta=None):
    header = ("pair", "mode", "mean_similarity", "isotropy", "n_pairs", "seed")
    rows = [(r.pair, r.mode, "%.6f" % r.mean_similarity,
             "%.6f" % r.isotropy, r.n_pairs, r.seed) for r in reports]
    write_csv(path, header, rows, meta)

    pairs = sorted({r.pair for r in reports})
    modes = sorted({r.mode for r in reports})
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(len(modes), 1)
    for k, mode in enumerate(modes):
        values = []
        for pair in pairs:
            match = [r for r in reports if r.pair == pair and r.mode == mode]
            values.append(match[0].mean_similarity if match else 0.0)
        xs = [i + k * width for i in range(len(pairs))]
        ax.bar(xs, values, width=width, label=mode)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(pairs))])
    ax.set_xticklabels(pairs)
    ax.set_ylabel("mean cosine similarity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(figure_path(path))
    plt.close(fig)
    return path


def write_bench_report(path, results, meta=None):
    """``results``: list of bench.BenchResult."""
    header = ("variant", "hops", "batch_size", "steps", "wps",
              "time_per_step", "time_ratio", "graph_time_per_step")
    rows = [(r.variant, r.hops, r.batch_size, r.steps, "%.1f" % r.wps,
             "%.6f" % r.time_per_step, "%.2f" % r.time_ratio,
             "%.6f" % r.graph_time_per_step) for r in results]
    write_csv(path, header, rows, meta)

    fig, ax = plt.subplots(figsize=(6, 4))
    labels = ["%s/b%d" % (r.variant, r.batch_size) for r in results]
    ax.bar(range(len(results)), [r.time_ratio for r in results])
    ax.axhline(1.0, color="gray", ls="--", lw=0.8)
    ax.set_xticks(range(len(results)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("time per step relative to baseline")
    fig.tight_layout()
    fig.savefig(figure_path(path))
    plt.close(fig)
    return path
