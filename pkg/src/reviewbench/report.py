"""Report emission: delimited tables, human-readable summaries, and figures.

Every run writes ``manifest.jsonl`` (atomic), ``aggregate.tsv``, and
``summary.txt``; comparisons write ``comparison.tsv``, ``wilcoxon.tsv`` and a
per-metric chart. Figures render with the Agg backend straight to PNG files
next to the delimited output.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .harness import TABLE_COLUMNS, ComparisonReport, RunManifest, write_manifest  # noqa: E402

_MICRO_KEYS = (
    "text_rouge_l", "text_bleu", "text_meteor", "text_bertscore_f1",
    "title_rouge_l", "title_bleu", "title_meteor", "title_bertscore_f1",
    "title_consistency",
)
_DISSONANCE_KEYS = ("d_user", "d_prod", "d_sent")


def write_tsv(path: str | Path, rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t")
        writer.writerows(rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def aggregate_rows(manifest: RunManifest) -> list[list]:
    metrics = manifest.aggregate.get("metrics", {})
    rating = manifest.aggregate.get("rating", {})
    parse = manifest.aggregate.get("parse", {})
    rows = [["metric", "value"]]
    for key in (*_MICRO_KEYS, *_DISSONANCE_KEYS):
        rows.append([key, _fmt(metrics.get(key))])
    if "text_bleu_corpus" in metrics:
        rows.append(["text_bleu_corpus", _fmt(metrics.get("text_bleu_corpus"))])
    for key in ("accuracy", "mae", "rmse", "parse_failures", "scored"):
        rows.append([f"rating_{key}", _fmt(rating.get(key))])
    for key in ("ok", "partial", "failed"):
        rows.append([f"parse_{key}", _fmt(parse.get(key))])
    return rows


def summary_text(manifest: RunManifest) -> str:
    header = manifest.header
    footer = manifest.footer
    validity = manifest.validity
    lines = [
        f"run: {header.get('run_label')}  mode={header.get('mode')}  setting={header.get('setting')}",
        f"model: {header.get('generation_model')}  embeddings: {header.get('embedding_provider')}",
        f"instances: {footer.get('instances')} (sampled {footer.get('sampled')})"
        + ("  [ABORTED: " + footer.get("abort_reason", "") + "]" if footer.get("aborted") else ""),
        "",
        "validity checks:",
    ]
    for name, check in validity.get("checks", {}).items():
        status = "PASS" if check.get("passed") else "FAIL"
        detail = {k: v for k, v in check.items() if k != "passed"}
        lines.append(f"  [{status}] {name} {detail}")
    lines.append("")
    lines.append("aggregate metrics (title_consistency is a repo-defined metric):")
    for row in aggregate_rows(manifest)[1:]:
        lines.append(f"  {row[0]:<22} {row[1]}")
    return "\n".join(lines) + "\n"


def render_run_figure(manifest: RunManifest, path: str | Path) -> None:
    """One multi-panel snapshot: micro metric means, dissonance means,
    parse-status counts."""
    metrics = manifest.aggregate.get("metrics", {})
    parse = manifest.aggregate.get("parse", {})
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))

    keys = [k for k in _MICRO_KEYS if metrics.get(k) is not None]
    axes[0].bar(range(len(keys)), [metrics[k] for k in keys], color="#4878a8")
    axes[0].set_xticks(range(len(keys)))
    axes[0].set_xticklabels(keys, rotation=45, ha="right", fontsize=7)
    axes[0].set_title("micro metric means")
    axes[0].set_ylim(bottom=0)

    dkeys = [k for k in _DISSONANCE_KEYS if metrics.get(k) is not None]
    axes[1].bar(range(len(dkeys)), [metrics[k] for k in dkeys], color="#a85448")
    axes[1].set_xticks(range(len(dkeys)))
    axes[1].set_xticklabels(dkeys, fontsize=8)
    axes[1].set_title("dissonance means (lower is better)")
    axes[1].set_ylim(bottom=0)

    statuses = ["ok", "partial", "failed"]
    axes[2].bar(statuses, [parse.get(s, 0) for s in statuses], color="#5a915a")
    axes[2].set_title("parse status")

    fig.suptitle(f"{manifest.header.get('run_label')} ({manifest.header.get('setting')}, "
                 f"{manifest.header.get('mode')})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_run_outputs(outdir: str | Path, manifest: RunManifest, figures: bool = True) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "manifest": outdir / "manifest.jsonl",
        "aggregate": outdir / "aggregate.tsv",
        "summary": outdir / "summary.txt",
    }
    write_manifest(paths["manifest"], manifest)
    write_tsv(paths["aggregate"], aggregate_rows(manifest))
    paths["summary"].write_text(summary_text(manifest), encoding="utf-8")
    if figures:
        figure_dir = outdir / "figures"
        figure_dir.mkdir(exist_ok=True)
        paths["figure"] = figure_dir / "run_metrics.png"
        render_run_figure(manifest, paths["figure"])
    return paths


def render_comparison_figure(report: ComparisonReport, path: str | Path) -> None:
    """Grouped bars: one cluster per table column, one bar per method."""
    keys = [(name, key) for name, key in TABLE_COLUMNS
            if any(report.means[label].get(key) is not None for label in report.labels)]
    fig, ax = plt.subplots(figsize=(max(8, 1.6 * len(keys)), 4.5))
    width = 0.8 / max(1, len(report.labels))
    for offset, label in enumerate(report.labels):
        xs = [i + offset * width for i in range(len(keys))]
        ys = [report.means[label].get(key) or 0.0 for _, key in keys]
        ax.bar(xs, ys, width=width, label=label)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(keys))])
    ax.set_xticklabels([name for name, _ in keys], rotation=30, ha="right", fontsize=8)
    ax.set_title(f"matched comparison over {report.instance_count} shared instances")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_comparison_outputs(outdir: str | Path, report: ComparisonReport,
                             figures: bool = True) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "comparison": outdir / "comparison.tsv",
        "wilcoxon": outdir / "wilcoxon.tsv",
    }
    write_tsv(paths["comparison"], report.table_rows())

    rows = [["a", "b", "metric", "n_pairs", "n_nonzero", "statistic", "p_value", "note"]]
    for test in report.wilcoxon:
        rows.append([
            test["a"], test["b"], test["metric"], test.get("n_pairs", ""),
            test.get("n_nonzero", ""), _fmt(test.get("statistic")),
            "" if test.get("p_value") is None else f"{test['p_value']:.6g}",
            test.get("error", "degenerate" if test.get("degenerate") else ""),
        ])
    write_tsv(paths["wilcoxon"], rows)

    if figures:
        paths["figure"] = outdir / "comparison.png"
        render_comparison_figure(report, paths["figure"])
    return paths
